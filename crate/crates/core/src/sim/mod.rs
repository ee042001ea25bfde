//! Lock-step desk-scale world simulator.
//!
//! Every tick is one simulated second: all agents observe the same pre-tick
//! world, decide in name order, and their actions are applied in the same
//! order. Messages are delivered at the start of the next tick.

pub mod config;
pub mod growth;
pub mod perception;
pub mod scenarios;
pub mod scoring;
pub mod trace;
pub mod world;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    appearance_descriptor, Agent, AgentContext, AgentError, CharacterProfile, GroupInfo, KnownAgent, MemorySnapshot,
    PlaceInfo,
};
use crate::clock::DAY;
use crate::providers::{EmbedError, EmbeddingProvider};

pub use config::WorldConfig;
pub use scoring::{score_influence_battle, score_leadership_quest, score_trace, EvalResult};
pub use trace::{TickRecord, Trace, TraceLine, TraceWriter};
pub use world::World;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("unknown agent {0:?}")]
    UnknownAgent(String),
    #[error("malformed trace: {0}")]
    Trace(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("object conservation violated at t={time}: {detail}")]
    Conservation { time: f64, detail: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Character profiles for every agent in the scenario, by name.
pub fn build_profiles(
    cfg: &WorldConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<BTreeMap<String, CharacterProfile>, SimError> {
    let places: Vec<PlaceInfo> = cfg
        .buildings
        .iter()
        .map(|b| PlaceInfo {
            name: b.name.clone(),
            kind: b.kind.as_str().to_string(),
            entrance: b.entrance,
            footprint: b.footprint.clone(),
        })
        .collect();
    let mut appearance = BTreeMap::new();
    for a in &cfg.agents {
        appearance.insert(a.name.clone(), embedder.embed_image(&appearance_descriptor(&a.name))?);
    }
    let mut out = BTreeMap::new();
    for a in &cfg.agents {
        let known: Vec<&str> = match &a.knows {
            Some(k) => k.iter().map(String::as_str).collect(),
            None => cfg.agents.iter().map(|o| o.name.as_str()).collect(),
        };
        let known_agents = cfg
            .agents
            .iter()
            .filter(|o| o.name != a.name && known.contains(&o.name.as_str()))
            .map(|o| KnownAgent {
                name: o.name.clone(),
                appearance: appearance[&o.name].clone(),
                facts: if o.occupation.is_empty() {
                    Vec::new()
                } else {
                    vec![format!("works as {}", o.occupation)]
                },
            })
            .collect();
        let groups = cfg
            .groups
            .iter()
            .filter(|g| g.members.contains(&a.name))
            .map(|g| GroupInfo {
                name: g.name.clone(),
                description: g.description.clone(),
                meeting_place: g.meeting_place.clone(),
                members: g.members.clone(),
            })
            .collect();
        out.insert(
            a.name.clone(),
            CharacterProfile {
                name: a.name.clone(),
                age: a.age,
                occupation: a.occupation.clone(),
                values: a.values.clone(),
                hobbies: a.hobbies.clone(),
                lifestyle: a.lifestyle.clone(),
                community_goal: a.community_goal.clone(),
                appearance: appearance[&a.name].clone(),
                known_places: places.clone(),
                known_agents,
                groups,
            },
        );
    }
    Ok(out)
}

/// Everything needed to resume a run mid-stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimState {
    pub stage: u8,
    pub world: World,
    pub agents: BTreeMap<String, Agent>,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub stage: u8,
    pub world: World,
    pub agents: BTreeMap<String, Agent>,
}

impl Simulation {
    /// Fresh world and fresh agents at absolute time `time`.
    pub fn new(cfg: WorldConfig, embedder: &dyn EmbeddingProvider, time: f64, stage: u8) -> Result<Self, SimError> {
        let world = World::new(cfg, embedder, time)?;
        let profiles = build_profiles(&world.config, embedder)?;
        let agent_cfg = world.config.agent_config();
        let mut agents = BTreeMap::new();
        for (name, profile) in profiles {
            let pose = world.bodies[&name].pose;
            agents.insert(name, Agent::new(profile, agent_cfg.clone(), embedder, pose, time)?);
        }
        Ok(Self { stage, world, agents })
    }

    /// Fresh world whose agents resume from memory snapshots. Agents listed
    /// in `goals` get their community goal replaced; nothing else changes.
    pub fn restore(
        cfg: WorldConfig,
        memories: BTreeMap<String, MemorySnapshot>,
        goals: &BTreeMap<String, String>,
        embedder: &dyn EmbeddingProvider,
        time: f64,
        stage: u8,
    ) -> Result<Self, SimError> {
        let world = World::new(cfg, embedder, time)?;
        let profiles = build_profiles(&world.config, embedder)?;
        let agent_cfg = world.config.agent_config();
        let mut memories = memories;
        let mut agents = BTreeMap::new();
        for (name, profile) in profiles {
            let memory = memories
                .remove(&name)
                .ok_or_else(|| SimError::Input(format!("no memory snapshot for {name}")))?;
            let pose = world.bodies[&name].pose;
            let mut agent = Agent::restore(profile, agent_cfg.clone(), memory, embedder, pose, time)?;
            if let Some(goal) = goals.get(&name) {
                agent.set_community_goal(goal, embedder, time)?;
            }
            agents.insert(name, agent);
        }
        Ok(Self { stage, world, agents })
    }

    pub fn state(&self) -> SimState {
        SimState {
            stage: self.stage,
            world: self.world.clone(),
            agents: self.agents.clone(),
        }
    }

    pub fn from_state(state: SimState, embedder: &dyn EmbeddingProvider) -> Result<Self, SimError> {
        let mut world = state.world;
        world.prepare(embedder)?;
        Ok(Self {
            stage: state.stage,
            world,
            agents: state.agents,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        write_json(path, &self.state())
    }

    pub fn load(path: &Path, embedder: &dyn EmbeddingProvider) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let state: SimState = serde_json::from_str(&text).map_err(|e| SimError::Input(e.to_string()))?;
        Self::from_state(state, embedder)
    }

    pub fn memory_snapshots(&self) -> BTreeMap<String, MemorySnapshot> {
        self.agents
            .iter()
            .map(|(n, a)| (n.clone(), a.memory_snapshot(self.world.time)))
            .collect()
    }

    /// Advance one second. Returns one record per agent, in name order.
    pub fn tick(&mut self, ctx: AgentContext<'_>) -> Result<Vec<TickRecord>, SimError> {
        let time = self.world.time;
        let pre_tick = self.world.positions();
        let mut observations = BTreeMap::new();
        for name in self.agents.keys() {
            let obs = perception::synthesize_observation(&mut self.world, name)
                .ok_or_else(|| SimError::UnknownAgent(name.clone()))?;
            observations.insert(name.clone(), obs);
        }
        let mut decisions = BTreeMap::new();
        for (name, agent) in self.agents.iter_mut() {
            decisions.insert(name.clone(), agent.on_observation(ctx, &observations[name])?);
        }
        let mut records = Vec::with_capacity(decisions.len());
        for (name, report) in decisions {
            let applied = self.world.apply_actions(&name, &report.actions, &pre_tick)?;
            let body = &self.world.bodies[&name];
            let agent = &self.agents[&name];
            let mut notes = report.notes;
            notes.extend(applied.notes);
            records.push(TickRecord {
                stage: self.stage,
                time,
                agent: name.clone(),
                position: body.pose.xy(),
                yaw: body.pose.yaw,
                place: body.place.clone(),
                vehicle: body.vehicle.clone(),
                cash: body.cash,
                held: self
                    .world
                    .held(&name)
                    .into_iter()
                    .map(|(hand, object, tag)| trace::HeldItem { hand, object, tag })
                    .collect(),
                triggered: report.triggered,
                reaction: report.reaction,
                actions: report.actions,
                messages: applied.sent,
                heard: observations[&name].heard.len(),
                new_objects: report.new_objects,
                episodic: agent.episodic().len(),
                semantic: agent.semantic().len(),
                path: report.path,
                notes,
            });
        }
        self.world
            .check_conservation()
            .map_err(|detail| SimError::Conservation { time, detail })?;
        self.world.time += 1.0;
        Ok(records)
    }

    /// Run `ticks` ticks, streaming records to `out`.
    pub fn run<W: std::io::Write>(
        &mut self,
        ctx: AgentContext<'_>,
        ticks: u64,
        out: &mut TraceWriter<W>,
    ) -> Result<(), SimError> {
        for _ in 0..ticks {
            let records = self.tick(ctx)?;
            out.ticks(&records)?;
        }
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SimError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| SimError::Io(e.to_string()))?;
    }
    let bytes = serde_json::to_vec(value).map_err(|e| SimError::Io(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
}

/// File-name-safe form of an agent name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_memories(dir: &Path, memories: &BTreeMap<String, MemorySnapshot>) -> Result<Vec<PathBuf>, SimError> {
    let mut paths = Vec::new();
    for (name, m) in memories {
        let p = dir.join(format!("{}.json", file_stem(name)));
        write_json(&p, m)?;
        paths.push(p);
    }
    Ok(paths)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub trace: PathBuf,
    pub stage_one_memory: Vec<PathBuf>,
    pub final_memory: Vec<PathBuf>,
    pub ticks: u64,
    pub eval: Option<EvalResult>,
}

/// Two-stage protocol. Stage one runs free on day 0 and persists every
/// agent's memory; stage two starts a fresh world on day 1, restores those
/// memories, injects the configured community goals and runs the evaluation.
/// Writes `trace.jsonl` and `memory/{stage1,final}/<agent>.json` under `out_dir`.
pub fn run_scenario(cfg: &WorldConfig, out_dir: &Path, ctx: AgentContext<'_>) -> Result<RunSummary, SimError> {
    cfg.validate()?;
    let trace_path = out_dir.join("trace.jsonl");
    let mut out = TraceWriter::create(&trace_path)?;
    out.write(&TraceLine::Header {
        scenario: Box::new(cfg.clone()),
    })?;
    let start = cfg.stages.start;
    let mut sim = Simulation::new(cfg.clone(), ctx.embedder, start, 1)?;
    out.write(&TraceLine::Stage { stage: 1, start })?;
    sim.run(ctx, cfg.stages.stage_one, &mut out)?;
    let memories = sim.memory_snapshots();
    let stage_one_memory = write_memories(&out_dir.join("memory").join("stage1"), &memories)?;
    let mut ticks = cfg.stages.stage_one;
    let final_memories = if cfg.stages.stage_two > 0 {
        let start2 = DAY + start;
        let mut sim2 = Simulation::restore(cfg.clone(), memories, &cfg.stages.goals, ctx.embedder, start2, 2)?;
        out.write(&TraceLine::Stage {
            stage: 2,
            start: start2,
        })?;
        sim2.run(ctx, cfg.stages.stage_two, &mut out)?;
        ticks += cfg.stages.stage_two;
        sim2.memory_snapshots()
    } else {
        memories
    };
    out.finish()?;
    let final_memory = write_memories(&out_dir.join("memory").join("final"), &final_memories)?;
    let eval = match &cfg.evaluation {
        Some(_) => Some(score_trace(&Trace::read(&trace_path)?)?),
        None => None,
    };
    Ok(RunSummary {
        trace: trace_path,
        stage_one_memory,
        final_memory,
        ticks,
        eval,
    })
}
