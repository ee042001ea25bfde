//! The plan / react / communicate loop of one embodied agent.

mod conversation;
mod profile;
mod schedule;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conversation::{utterance_query, ConversationState};
pub use profile::{appearance_descriptor, CharacterProfile, GroupInfo, KnownAgent, PlaceInfo};
pub use schedule::{repair, Activity, Schedule};

use crate::action::{Action, Hand};
use crate::clock::{day_of, format_clock, time_of_day};
use crate::episodic::{EpisodicError, EpisodicStore, Event, MemoryQuery, NewEvent, RetrievalConfig};
use crate::features::{cosine, Feature};
use crate::geometry::{distance, point_in_polygon, Point2};
use crate::navigation::{estimate_commute, plan, replan_or_reuse, NavPath, NavWeights};
use crate::providers::{
    render_history, ActivitySpec, EmbedError, EmbeddingProvider, ExtractRequest, InteractionVerb, KnowledgeItem,
    Message, PlanRequest, ReactionDecision, ReactionRequest, Reasoner, SummaryRequest, UtteranceRequest,
};
use crate::scene_graph::{
    build_region_layer, compute_gvd, BuildingNode, DetectionCandidate, ObjectId, SceneGraph, SceneGraphConfig,
};
use crate::semantic::{KnowledgeGraph, KnowledgeKind, SemanticError, SpatialRef};
use crate::spatial_grid::{
    build_occupancy_within, update_occupancy, DepthImage, GridError, Intrinsics, OccupancyMap, VolumeGrid,
};

pub const PLAN_QUERY: &str = "Things to consider for my schedule today.";
pub const REACT_QUERY: &str = "Important things to react to.";
const TRANSCRIPT_LIMIT: usize = 400;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Episodic(#[from] EpisodicError),
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Silence after which the reaction pipeline runs anyway (s).
    pub theta_react: f64,
    /// A conversation with no message for this long is closed (s).
    pub idle_close: f64,
    /// Conversation distance threshold (m).
    pub theta_s: f64,
    /// Message range cap (m).
    pub theta_msg: f64,
    pub range_margin: f64,
    /// Retrieval depth for both memories.
    pub k: usize,
    pub history_window: usize,
    pub knowledge_sample: usize,
    pub sample_seed: u64,
    pub walk_speed: f64,
    pub enter_radius: f64,
    /// How long a sighting keeps an agent in the "nearby" list (s).
    pub nearby_window: f64,
    pub cell_size: f64,
    pub block_size: f64,
    pub obstacle_threshold: f64,
    pub map_min: Point2,
    pub map_max: Point2,
    pub retrieval: RetrievalConfig,
    pub nav: NavWeights,
    pub scene: SceneGraphConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            theta_react: 300.0,
            idle_close: 60.0,
            theta_s: 10.0,
            theta_msg: 10.0,
            range_margin: 1.0,
            k: 5,
            history_window: 4,
            knowledge_sample: 5,
            sample_seed: 7,
            walk_speed: crate::navigation::DEFAULT_WALK_SPEED,
            enter_radius: 1.5,
            nearby_window: 5.0,
            cell_size: crate::spatial_grid::DEFAULT_CELL_SIZE,
            block_size: crate::spatial_grid::DEFAULT_BLOCK_SIZE,
            obstacle_threshold: crate::spatial_grid::DEFAULT_OBSTACLE_THRESHOLD,
            map_min: [0.0, 0.0],
            map_max: [64.0, 64.0],
            retrieval: RetrievalConfig::default(),
            nav: NavWeights::default(),
            scene: SceneGraphConfig::default(),
        }
    }
}

/// Ground position (z = ground height) and heading (radians from +x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub yaw: f64,
}

impl Pose {
    pub fn xy(&self) -> Point2 {
        [self.position[0], self.position[1]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraFrame {
    pub pose: Isometry3<f64>,
    pub intrinsics: Intrinsics,
    pub depth: DepthImage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeardMessage {
    pub sender: String,
    pub conversation: String,
    pub to: Vec<String>,
    pub text: String,
    pub sender_location: Point2,
    pub range: f64,
    pub sent_at: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelfState {
    pub place: Option<String>,
    pub cash: f64,
    /// Object tag held in each hand.
    pub held: BTreeMap<Hand, String>,
    pub vehicle: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub pose: Pose,
    pub camera: Option<CameraFrame>,
    pub detections: Vec<DetectionCandidate>,
    pub heard: Vec<HeardMessage>,
    pub state: SelfState,
}

/// Providers an agent calls out to.
#[derive(Clone, Copy)]
pub struct AgentContext<'a> {
    pub reasoner: &'a dyn Reasoner,
    pub embedder: &'a dyn EmbeddingProvider,
}

/// What happened in one decision step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub actions: Vec<Action>,
    pub triggered: bool,
    pub reaction: Option<String>,
    pub new_objects: usize,
    pub planned: bool,
    /// Retrieval queries issued this step, in order.
    pub queries: Vec<String>,
    /// Path waypoints (world coordinates) when a path was planned this step.
    pub path: Option<Vec<Point2>>,
    pub notes: Vec<String>,
}

/// Persisted long-term memory of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub agent: String,
    pub time: f64,
    pub episodic: Vec<Event>,
    pub semantic: KnowledgeGraph,
    pub scene: SceneGraph,
    pub grid: VolumeGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub profile: CharacterProfile,
    pub config: AgentConfig,
    grid: VolumeGrid,
    fine_map: OccupancyMap,
    nav_map: OccupancyMap,
    scene: SceneGraph,
    episodic: EpisodicStore,
    semantic: KnowledgeGraph,
    schedule: Option<Schedule>,
    last_reaction: Option<f64>,
    last_time: Option<f64>,
    conversations: Vec<ConversationState>,
    conv_seq: u64,
    finished_conversations: u64,
    path: Option<NavPath>,
    path_goal: Option<String>,
    partners_today: (u64, BTreeSet<String>),
    names: BTreeMap<ObjectId, String>,
    last_heard: BTreeMap<String, (Point2, f64)>,
    pose: Pose,
    place: Option<String>,
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a < -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

fn truncate(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        s.to_string()
    } else {
        let mut t: String = s.chars().take(n).collect();
        t.push_str("...");
        t
    }
}

impl Agent {
    /// Fresh agent whose semantic memory is seeded from the profile.
    pub fn new(
        profile: CharacterProfile,
        config: AgentConfig,
        embedder: &dyn EmbeddingProvider,
        pose: Pose,
        time: f64,
    ) -> Result<Self, AgentError> {
        let grid = VolumeGrid::new(config.map_min, config.block_size, config.cell_size)?;
        let mut agent = Self::with_memory(
            profile,
            config,
            grid,
            SceneGraph::default(),
            EpisodicStore::new(),
            KnowledgeGraph::new(),
            pose,
        )?;
        agent.scene = SceneGraph::new(agent.config.scene);
        agent.seed_memory(embedder, time)?;
        Ok(agent)
    }

    /// Agent that resumes from a memory snapshot with a (possibly changed)
    /// profile. Short-term state (schedule, conversations, paths) starts empty.
    pub fn restore(
        profile: CharacterProfile,
        config: AgentConfig,
        memory: MemorySnapshot,
        embedder: &dyn EmbeddingProvider,
        pose: Pose,
        time: f64,
    ) -> Result<Self, AgentError> {
        if memory.agent != profile.name {
            return Err(AgentError::Config(format!(
                "snapshot belongs to {}, not {}",
                memory.agent, profile.name
            )));
        }
        let episodic = EpisodicStore::from_events(memory.episodic)?;
        let mut agent = Self::with_memory(
            profile,
            config,
            memory.grid,
            memory.scene,
            episodic,
            memory.semantic,
            pose,
        )?;
        agent.names = agent
            .semantic
            .nodes()
            .filter(|n| n.kind == KnowledgeKind::Agent)
            .filter_map(|n| match n.spatial_ref {
                Some(SpatialRef::Object(id)) => Some((agent.scene.resolve(id), n.name.clone())),
                _ => None,
            })
            .collect();
        let facts = agent.self_facts();
        let name = agent.profile.name.clone();
        agent
            .semantic
            .upsert(embedder, &name, KnowledgeKind::Agent, &facts, time)?;
        Ok(agent)
    }

    fn with_memory(
        profile: CharacterProfile,
        config: AgentConfig,
        grid: VolumeGrid,
        scene: SceneGraph,
        episodic: EpisodicStore,
        semantic: KnowledgeGraph,
        pose: Pose,
    ) -> Result<Self, AgentError> {
        if !(config.theta_s > 0.0 && config.theta_msg > 0.0 && config.walk_speed > 0.0) {
            return Err(AgentError::Config("distances and speed must be positive".into()));
        }
        if (grid.cell_size() - config.cell_size).abs() > 1e-12 {
            return Err(AgentError::Config("snapshot grid cell size differs from config".into()));
        }
        let bounds = grid.bounds_for_extent(config.map_min, config.map_max);
        let fine_map = build_occupancy_within(&grid, config.obstacle_threshold, bounds);
        let nav_map = fine_map.coarsen(grid.cells_per_block());
        Ok(Self {
            profile,
            config,
            grid,
            fine_map,
            nav_map,
            scene,
            episodic,
            semantic,
            schedule: None,
            last_reaction: None,
            last_time: None,
            conversations: Vec::new(),
            conv_seq: 0,
            finished_conversations: 0,
            path: None,
            path_goal: None,
            partners_today: (0, BTreeSet::new()),
            names: BTreeMap::new(),
            last_heard: BTreeMap::new(),
            pose,
            place: None,
        })
    }

    fn self_facts(&self) -> Vec<String> {
        let p = &self.profile;
        let mut f = vec![format!("{} years old", p.age), format!("works as {}", p.occupation)];
        for (label, v) in [
            ("values", &p.values),
            ("hobbies", &p.hobbies),
            ("lifestyle", &p.lifestyle),
            ("community goal", &p.community_goal),
        ] {
            if !v.trim().is_empty() {
                f.push(format!("{label}: {v}"));
            }
        }
        f
    }

    fn seed_memory(&mut self, embedder: &dyn EmbeddingProvider, time: f64) -> Result<(), AgentError> {
        let me = self.profile.name.clone();
        let facts = self.self_facts();
        self.semantic
            .upsert(embedder, &me, KnowledgeKind::Agent, &facts, time)?;
        self.semantic.set_image_feature(&me, self.profile.appearance.clone())?;
        let places = self.profile.known_places.clone();
        for p in &places {
            let facts = vec![
                format!("a {} building", p.kind),
                format!("entrance at ({:.1}, {:.1})", p.entrance[0], p.entrance[1]),
            ];
            self.semantic
                .upsert(embedder, &p.name, KnowledgeKind::Place, &facts, time)?;
            self.semantic
                .set_spatial_ref(&p.name, SpatialRef::Building(p.name.clone()))?;
            self.scene
                .add_building(BuildingNode::new(p.name.clone(), p.kind.clone(), p.footprint.clone()));
        }
        for a in self.profile.known_agents.clone() {
            self.semantic
                .upsert(embedder, &a.name, KnowledgeKind::Agent, &a.facts, time)?;
            self.semantic.set_image_feature(&a.name, a.appearance.clone())?;
        }
        for g in self.profile.groups.clone() {
            self.semantic.upsert(
                embedder,
                &g.name,
                KnowledgeKind::Group,
                std::slice::from_ref(&g.description),
                time,
            )?;
            for m in &g.members {
                self.semantic.upsert(embedder, m, KnowledgeKind::Agent, &[], time)?;
                self.semantic.link(m, "member-of", &g.name, time)?;
            }
            if self.semantic.node(&g.meeting_place).is_some() {
                self.semantic.link(&g.name, "meets-at", &g.meeting_place, time)?;
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.profile.name
    }

    pub fn episodic(&self) -> &EpisodicStore {
        &self.episodic
    }

    pub fn semantic(&self) -> &KnowledgeGraph {
        &self.semantic
    }

    pub fn scene(&self) -> &SceneGraph {
        &self.scene
    }

    pub fn grid(&self) -> &VolumeGrid {
        &self.grid
    }

    pub fn occupancy(&self) -> &OccupancyMap {
        &self.fine_map
    }

    pub fn nav_map(&self) -> &OccupancyMap {
        &self.nav_map
    }

    pub fn schedule(&self) -> Option<&Schedule> {
        self.schedule.as_ref()
    }

    pub fn conversations(&self) -> &[ConversationState] {
        &self.conversations
    }

    pub fn last_reaction(&self) -> Option<f64> {
        self.last_reaction
    }

    pub fn memory_snapshot(&self, time: f64) -> MemorySnapshot {
        MemorySnapshot {
            agent: self.profile.name.clone(),
            time,
            episodic: self.episodic.events().to_vec(),
            semantic: self.semantic.clone(),
            scene: self.scene.clone(),
            grid: self.grid.clone(),
        }
    }

    /// Replace the community goal (the only intervention used between
    /// evaluation stages) and record it in semantic memory.
    pub fn set_community_goal(
        &mut self,
        goal: &str,
        embedder: &dyn EmbeddingProvider,
        time: f64,
    ) -> Result<(), AgentError> {
        self.profile.community_goal = goal.to_string();
        let name = self.profile.name.clone();
        self.semantic.upsert(
            embedder,
            &name,
            KnowledgeKind::Agent,
            &[format!("community goal: {goal}")],
            time,
        )?;
        Ok(())
    }

    fn position3(&self) -> [f64; 3] {
        self.pose.position
    }

    fn where_am_i(&self) -> String {
        if let Some(p) = &self.place {
            return format!("at {p}");
        }
        match self.nearest_place(self.pose.xy()) {
            Some(p) => format!("near {p}"),
            None => "outdoors".into(),
        }
    }

    fn place_label(&self) -> String {
        self.place.clone().unwrap_or_else(|| self.where_am_i())
    }

    fn nearest_place(&self, p: Point2) -> Option<String> {
        if let Some(b) = self
            .profile
            .known_places
            .iter()
            .find(|b| point_in_polygon(p, &b.footprint))
        {
            return Some(b.name.clone());
        }
        self.profile
            .known_places
            .iter()
            .min_by(|a, b| {
                distance(p, a.entrance)
                    .total_cmp(&distance(p, b.entrance))
                    .then_with(|| a.name.cmp(&b.name))
            })
            .map(|b| b.name.clone())
    }

    fn record(
        &mut self,
        embedder: &dyn EmbeddingProvider,
        time: f64,
        location: [f64; 3],
        text: String,
        image: Option<Feature>,
    ) -> Result<(), AgentError> {
        let text_feature = embedder.embed_text(&text)?;
        let place = self.place_label();
        self.episodic.record(NewEvent {
            time,
            location,
            place,
            text,
            text_feature,
            image_feature: image,
        })?;
        Ok(())
    }

    /// Retrieve from both memories and render the result for a prompt.
    fn recall(
        &mut self,
        embedder: &dyn EmbeddingProvider,
        query: &str,
        time: f64,
        report: &mut StepReport,
    ) -> Result<String, AgentError> {
        report.queries.push(query.to_string());
        let feature = embedder.embed_text(query)?;
        let mut lines = Vec::new();
        if !self.episodic.is_empty() {
            let q = MemoryQuery {
                time,
                location: self.position3(),
                text: query.to_string(),
                text_feature: feature.clone(),
                image_feature: None,
                k: self.config.k,
            };
            for s in self.episodic.retrieve(&q, &self.config.retrieval)? {
                lines.push(format!("- [{}] {}", format_clock(s.event.created_at), s.event.text));
            }
        }
        for hit in self.semantic.retrieve_knowledge(&feature, None, self.config.k) {
            lines.push(format!("- {}", hit.render()));
        }
        if lines.is_empty() {
            return Ok("(nothing relevant remembered)".into());
        }
        Ok(lines.join("\n"))
    }

    fn commute_fn(&self) -> impl FnMut(&str, &str) -> f64 + '_ {
        let entrances: BTreeMap<String, Point2> = self
            .profile
            .known_places
            .iter()
            .map(|p| (p.name.clone(), p.entrance))
            .collect();
        let mut cache: BTreeMap<(String, String), f64> = BTreeMap::new();
        move |a: &str, b: &str| {
            if a == b {
                return 0.0;
            }
            let key = (a.to_string(), b.to_string());
            if let Some(v) = cache.get(&key) {
                return *v;
            }
            let v = match estimate_commute(
                &self.nav_map,
                &entrances,
                a,
                b,
                self.config.walk_speed,
                &self.config.nav,
            ) {
                Ok(c) => c.seconds.ceil(),
                Err(_) => 0.0,
            };
            cache.insert(key, v);
            v
        }
    }

    /// Build today's schedule.
    pub fn plan_day(&mut self, ctx: AgentContext<'_>, time: f64, report: &mut StepReport) -> Result<(), AgentError> {
        self.refresh_regions(ctx.embedder, time)?;
        let context = self.recall(ctx.embedder, PLAN_QUERY, time, report)?;
        let req = PlanRequest {
            agent: self.profile.name.clone(),
            character: self.profile.describe(),
            context,
            day_start: crate::clock::day_start(time),
        };
        let raw = match ctx.reasoner.plan_schedule(&req) {
            Ok(raw) => raw,
            Err(e) => {
                report
                    .notes
                    .push(format!("planning failed ({e}); reusing previous schedule"));
                self.schedule
                    .as_ref()
                    .map(|s| s.activities().map(Activity::spec).collect())
                    .unwrap_or_default()
            }
        };
        let start_place = self.place.clone();
        let tod = time_of_day(time);
        let day = day_of(time);
        let mut commute = self.commute_fn();
        let sched = repair(day, &raw, start_place.as_deref(), tod, &mut commute);
        drop(commute);
        self.schedule = Some(sched);
        self.path = None;
        report.planned = true;
        Ok(())
    }

    /// Replace the not-yet-finished part of the schedule.
    fn revise_schedule(&mut self, activities: &[ActivitySpec], time: f64) {
        let tod = time_of_day(time);
        let day = day_of(time);
        let mut past: Vec<Activity> = self
            .schedule
            .as_ref()
            .filter(|s| s.day == day)
            .map(|s| s.entries.iter().filter(|a| a.end <= tod).cloned().collect())
            .unwrap_or_default();
        while past.last().is_some_and(|a| a.commute) {
            past.pop();
        }
        let last_place = past.last().map(|a| a.place.clone());
        let start_place = last_place.or_else(|| self.place.clone());
        let not_before = past.last().map_or(tod, |a| a.end.max(tod));
        let mut commute = self.commute_fn();
        let fresh = repair(day, activities, start_place.as_deref(), not_before, &mut commute);
        drop(commute);
        past.extend(fresh.entries);
        self.schedule = Some(Schedule { day, entries: past });
        self.path = None;
    }

    fn refresh_regions(&mut self, embedder: &dyn EmbeddingProvider, time: f64) -> Result<(), AgentError> {
        if self.scene.buildings().is_empty() {
            return Ok(());
        }
        let gvd = compute_gvd(&self.nav_map, self.scene.buildings());
        let layer = build_region_layer(&gvd, self.scene.buildings());
        self.scene.set_region_layer(layer);
        self.semantic
            .register_scene_entities(embedder, &self.scene.snapshot(), time)?;
        Ok(())
    }

    fn identify(&self, feature: &[f64]) -> Option<String> {
        let threshold = self.config.scene.dynamic_threshold;
        self.semantic
            .nodes()
            .filter(|n| n.kind == KnowledgeKind::Agent && n.name != self.profile.name)
            .filter_map(|n| n.image_feature.as_ref().map(|f| (cosine(f, feature), &n.name)))
            .filter(|(c, _)| *c > threshold)
            .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)))
            .map(|(_, n)| n.clone())
    }

    /// Named agents seen or heard recently within the conversation threshold.
    pub fn nearby_agents(&self, time: f64) -> Vec<String> {
        let me = self.pose.xy();
        let mut out = BTreeSet::new();
        for (id, name) in &self.names {
            if let Some(node) = self.scene.object(*id) {
                let p = [node.location[0], node.location[1]];
                if time - node.last_seen <= self.config.nearby_window && distance(me, p) <= self.config.theta_s {
                    out.insert(name.clone());
                }
            }
        }
        for (name, (p, t)) in &self.last_heard {
            if time - t <= self.config.nearby_window && distance(me, *p) <= self.config.theta_s {
                out.insert(name.clone());
            }
        }
        out.remove(&self.profile.name);
        out.into_iter().collect()
    }

    /// Most recent known position of a named agent.
    fn locate(&self, name: &str, time: f64) -> Option<Point2> {
        let mut best: Option<(f64, Point2)> = None;
        for (id, n) in &self.names {
            if n != name {
                continue;
            }
            if let Some(node) = self.scene.object(*id) {
                let p = [node.location[0], node.location[1]];
                if best.is_none_or(|b| node.last_seen > b.0) {
                    best = Some((node.last_seen, p));
                }
            }
        }
        if let Some(&(p, t)) = self.last_heard.get(name) {
            if best.is_none_or(|b| t > b.0) {
                best = Some((t, p));
            }
        }
        best.filter(|(t, _)| time - t <= self.config.idle_close).map(|(_, p)| p)
    }

    /// Process one observation and choose this step's actions.
    pub fn on_observation(&mut self, ctx: AgentContext<'_>, obs: &Observation) -> Result<StepReport, AgentError> {
        let mut report = StepReport::default();
        let time = obs.time;
        if self.last_time.is_some_and(|t| time <= t) {
            report
                .notes
                .push(format!("observation at {time} is not after the previous one; skipped"));
            return Ok(report);
        }
        self.last_time = Some(time);
        self.pose = obs.pose;
        self.place = obs.state.place.clone();
        let day = day_of(time);
        if self.partners_today.0 != day {
            self.partners_today = (day, BTreeSet::new());
        }

        if let Some(cam) = &obs.camera {
            match self.grid.integrate_depth_frame(&cam.pose, &cam.depth, &cam.intrinsics) {
                Ok(touched) if !touched.is_empty() => {
                    let changed =
                        update_occupancy(&mut self.fine_map, &self.grid, self.config.obstacle_threshold, &touched);
                    let factor = self.grid.cells_per_block();
                    self.fine_map.coarsen_into(&mut self.nav_map, factor, &changed);
                }
                Ok(_) => {}
                Err(e) => report.notes.push(format!("depth frame skipped: {e}")),
            }
        }

        let noticed = self.ingest(ctx.embedder, obs, time, &mut report)?;
        self.hear(ctx.embedder, obs, time)?;
        self.close_idle(ctx, time)?;

        if self.schedule.as_ref().is_none_or(|s| s.day != day) {
            self.plan_day(ctx, time, &mut report)?;
        }

        let timed_out = self.last_reaction.is_none_or(|t| time - t >= self.config.theta_react);
        report.triggered = report.new_objects > 0 || !obs.heard.is_empty() || timed_out;
        let mut interacted = false;
        if report.triggered {
            let (variant, actions) = self.react(ctx, obs, time, &noticed, &mut report)?;
            interacted = !actions.is_empty();
            report.reaction = Some(variant);
            report.actions.extend(actions);
        }

        if let Some(a) = self.conversation_turn(ctx, obs, time, &mut report)? {
            report.actions.push(a);
        }

        if !interacted {
            let nav = self.navigate(obs, time, &mut report);
            report.actions.extend(nav);
        }
        Ok(report)
    }

    fn ingest(
        &mut self,
        embedder: &dyn EmbeddingProvider,
        obs: &Observation,
        time: f64,
        report: &mut StepReport,
    ) -> Result<Vec<String>, AgentError> {
        let valid: Vec<DetectionCandidate> = obs
            .detections
            .iter()
            .filter(|d| {
                !d.point_cloud.is_empty()
                    && d.visual_feature.len() == embedder.dimension()
                    && d.point_cloud.iter().all(|p| p.iter().all(|v| v.is_finite()))
            })
            .cloned()
            .collect();
        if valid.len() != obs.detections.len() {
            report.notes.push(format!(
                "{} malformed detections skipped",
                obs.detections.len() - valid.len()
            ));
        }
        let merge = self.scene.ingest_detections(&valid, time);
        report.new_objects = merge.created.len();
        let mut noticed = Vec::new();
        let mut statics_changed = !merge.absorbed.is_empty();
        for &id in &merge.created {
            let Some(node) = self.scene.object(id).cloned() else {
                continue;
            };
            let p = [node.location[0], node.location[1]];
            let where_ = match self.nearest_place(p) {
                Some(b)
                    if self
                        .profile
                        .place(&b)
                        .is_some_and(|pl| point_in_polygon(p, &pl.footprint)) =>
                {
                    format!("in {b}")
                }
                Some(b) => format!("near {b}"),
                None => "nearby".into(),
            };
            if node.dynamic {
                let name = match self.identify(&node.visual_feature) {
                    Some(n) => n,
                    None => {
                        let n = format!("person #{id}");
                        self.semantic.upsert(
                            embedder,
                            &n,
                            KnowledgeKind::Agent,
                            &[format!("first seen {where_}")],
                            time,
                        )?;
                        self.semantic.set_image_feature(&n, node.visual_feature.clone())?;
                        n
                    }
                };
                self.semantic.set_spatial_ref(&name, SpatialRef::Object(id))?;
                self.names.insert(id, name.clone());
                let text = format!("Saw {name} {where_}.");
                self.record(embedder, time, node.location, text, Some(node.visual_feature.clone()))?;
                noticed.push(format!("{name} {where_}"));
            } else {
                statics_changed = true;
                let label = crate::semantic::object_name(&node.tag, id);
                let text = format!("Saw a {} ({label}) {where_}.", node.tag);
                self.record(embedder, time, node.location, text, Some(node.visual_feature.clone()))?;
                noticed.push(format!("{label} {where_}"));
            }
        }
        if statics_changed {
            self.semantic
                .register_scene_entities(embedder, &self.scene.snapshot(), time)?;
        }
        Ok(noticed)
    }

    fn hear(&mut self, embedder: &dyn EmbeddingProvider, obs: &Observation, time: f64) -> Result<(), AgentError> {
        let mut heard = obs.heard.clone();
        heard.sort_by(|a, b| a.sent_at.total_cmp(&b.sent_at).then_with(|| a.sender.cmp(&b.sender)));
        let me = self.profile.name.clone();
        for m in heard {
            if m.sender == me {
                continue;
            }
            let loc = [m.sender_location[0], m.sender_location[1], self.pose.position[2]];
            let addressed = if m.to.is_empty() {
                "everyone nearby".to_string()
            } else {
                m.to.join(", ")
            };
            let text = format!("{} said to {addressed}: \"{}\"", m.sender, m.text);
            self.record(embedder, time, loc, text, None)?;
            self.last_heard.insert(m.sender.clone(), (m.sender_location, time));
            self.learn_speaker(embedder, &m, time)?;
            if !m.to.contains(&me) {
                continue;
            }
            let msg = Message {
                speaker: m.sender.clone(),
                text: m.text.clone(),
                time: m.sent_at,
            };
            match self.conversations.iter_mut().find(|c| c.id == m.conversation) {
                Some(c) => {
                    c.participants.insert(m.sender.clone());
                    c.history.push(msg);
                    c.last_message_at = time;
                    c.pending_reply = true;
                }
                None => {
                    let mut participants: BTreeSet<String> = m.to.iter().cloned().collect();
                    participants.insert(m.sender.clone());
                    participants.insert(me.clone());
                    self.partners_today.1.insert(m.sender.clone());
                    self.conversations.push(ConversationState {
                        id: m.conversation.clone(),
                        participants,
                        history: vec![msg],
                        started_at: time,
                        last_message_at: time,
                        location: self.position3(),
                        initiating: false,
                        opening: String::new(),
                        pending_reply: true,
                    });
                }
            }
        }
        Ok(())
    }

    /// Bind a speaker's name to the dynamic node nearest to where the message
    /// came from.
    fn learn_speaker(
        &mut self,
        embedder: &dyn EmbeddingProvider,
        m: &HeardMessage,
        time: f64,
    ) -> Result<(), AgentError> {
        let near = self
            .scene
            .objects()
            .filter(|n| n.dynamic && time - n.last_seen <= self.config.nearby_window)
            .map(|n| (distance([n.location[0], n.location[1]], m.sender_location), n.id))
            .filter(|(d, _)| *d <= 2.0)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let known = self.semantic.node(&m.sender).is_some();
        if !known {
            self.semantic.upsert(
                embedder,
                &m.sender,
                KnowledgeKind::Agent,
                &[format!("introduced themselves at {}", format_clock(time))],
                time,
            )?;
        }
        if let Some((_, id)) = near {
            let previous = self.names.insert(id, m.sender.clone());
            if previous.as_deref() != Some(m.sender.as_str()) {
                self.semantic.set_spatial_ref(&m.sender, SpatialRef::Object(id))?;
                if self.semantic.node(&m.sender).is_some_and(|n| n.image_feature.is_none()) {
                    if let Some(node) = self.scene.object(id) {
                        let f = node.visual_feature.clone();
                        self.semantic.set_image_feature(&m.sender, f)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn close_idle(&mut self, ctx: AgentContext<'_>, time: f64) -> Result<(), AgentError> {
        let idle: Vec<String> = self
            .conversations
            .iter()
            .filter(|c| time - c.last_message_at >= self.config.idle_close)
            .map(|c| c.id.clone())
            .collect();
        for id in idle {
            self.finish_conversation(ctx, &id, time)?;
        }
        Ok(())
    }

    fn render_situation(&self, obs: &Observation, noticed: &[String], time: f64) -> String {
        let mut lines = vec![format!("It is {}. I am {}.", format_clock(time), self.where_am_i())];
        if obs.state.held.is_empty() {
            lines.push("I am holding nothing.".into());
        } else {
            let held: Vec<String> = obs
                .state
                .held
                .iter()
                .map(|(h, t)| format!("{t} ({} hand)", if *h == Hand::Left { "left" } else { "right" }))
                .collect();
            lines.push(format!("I am holding: {}.", held.join(", ")));
        }
        lines.push(format!("Cash: {:.2}.", obs.state.cash));
        let tod = time_of_day(time);
        if let Some(a) = self.schedule.as_ref().and_then(|s| s.current(tod)) {
            lines.push(format!("Current activity: {}.", a.render()));
        }
        if !noticed.is_empty() {
            lines.push(format!("Just noticed: {}.", noticed.join("; ")));
        }
        for m in &obs.heard {
            lines.push(format!("Just heard {} say: \"{}\"", m.sender, m.text));
        }
        let nearby = self.nearby_agents(time);
        if !nearby.is_empty() {
            lines.push(format!("Nearby: {}.", nearby.join(", ")));
        }
        lines.join("\n")
    }

    fn react(
        &mut self,
        ctx: AgentContext<'_>,
        obs: &Observation,
        time: f64,
        noticed: &[String],
        report: &mut StepReport,
    ) -> Result<(String, Vec<Action>), AgentError> {
        let experience = self.recall(ctx.embedder, REACT_QUERY, time, report)?;
        let tod = time_of_day(time);
        let req = ReactionRequest {
            agent: self.profile.name.clone(),
            character: self.profile.describe(),
            time,
            place: self.place_label(),
            schedule: self.schedule.as_ref().map(|s| s.remaining(tod)).unwrap_or_default(),
            experience,
            context: self.render_situation(obs, noticed, time),
            nearby_agents: self.nearby_agents(time),
            recent_partners: self.partners_today.1.iter().cloned().collect(),
            group_members: self.profile.group_mates(),
        };
        self.last_reaction = Some(time);
        let decision = match ctx.reasoner.decide_reaction(&req) {
            Ok(d) => d,
            Err(e) => {
                report.notes.push(format!("reaction failed ({e}); no reaction"));
                ReactionDecision::None
            }
        };
        let variant = decision.variant_name().to_string();
        let mut actions = Vec::new();
        match decision {
            ReactionDecision::None => {}
            ReactionDecision::ReviseSchedule { activities } => self.revise_schedule(&activities, time),
            ReactionDecision::Interact { action } => {
                let target = action.target.trim().to_string();
                match action.verb {
                    InteractionVerb::Pick => {
                        let hand = action.hand.filter(|h| !obs.state.held.contains_key(h)).or_else(|| {
                            [Hand::Left, Hand::Right]
                                .into_iter()
                                .find(|h| !obs.state.held.contains_key(h))
                        });
                        match hand {
                            Some(hand) if !target.is_empty() => actions.push(Action::Pick { object: target, hand }),
                            _ => report.notes.push("pick skipped: no free hand or no target".into()),
                        }
                    }
                    InteractionVerb::Drop => {
                        let hand = action
                            .hand
                            .filter(|h| obs.state.held.contains_key(h))
                            .or_else(|| obs.state.held.keys().next().copied());
                        match hand {
                            Some(hand) => actions.push(Action::Drop { hand }),
                            None => report.notes.push("drop skipped: hands empty".into()),
                        }
                    }
                    InteractionVerb::Enter if !target.is_empty() => actions.push(Action::Enter { target }),
                    InteractionVerb::Exit if !target.is_empty() => actions.push(Action::Exit { vehicle: target }),
                    _ => report.notes.push("interaction without a target ignored".into()),
                }
            }
            ReactionDecision::Converse { targets, opening } => {
                let me = self.profile.name.clone();
                let mut participants: BTreeSet<String> = targets.into_iter().filter(|t| *t != me).collect();
                if participants.is_empty() {
                    report.notes.push("conversation without targets ignored".into());
                } else {
                    for t in &participants {
                        self.partners_today.1.insert(t.clone());
                    }
                    participants.insert(me.clone());
                    self.conv_seq += 1;
                    self.conversations.push(ConversationState {
                        id: format!("{me}#{}", self.conv_seq),
                        participants,
                        history: Vec::new(),
                        started_at: time,
                        last_message_at: time,
                        location: self.position3(),
                        initiating: true,
                        opening,
                        pending_reply: true,
                    });
                }
            }
        }
        Ok((variant, actions))
    }

    /// Speak in at most one conversation that is waiting on this agent.
    fn conversation_turn(
        &mut self,
        ctx: AgentContext<'_>,
        obs: &Observation,
        time: f64,
        report: &mut StepReport,
    ) -> Result<Option<Action>, AgentError> {
        let Some(idx) = self.conversations.iter().position(|c| c.pending_reply) else {
            return Ok(None);
        };
        let me = self.profile.name.clone();
        let conv = self.conversations[idx].clone();
        let targets: Vec<String> = conv.others(&me).cloned().collect();
        let here = self.pose.xy();
        let mut farthest: f64 = 0.0;
        let mut missing = Vec::new();
        for t in &targets {
            match self.locate(t, time) {
                Some(p) if distance(here, p) <= self.config.theta_s => farthest = farthest.max(distance(here, p)),
                _ => missing.push(t.clone()),
            }
        }
        if !missing.is_empty() {
            let text = format!(
                "Could not continue talking with {}: out of conversation range.",
                missing.join(", ")
            );
            self.record(ctx.embedder, time, self.position3(), text, None)?;
            self.finish_conversation(ctx, &conv.id, time)?;
            return Ok(None);
        }
        let initiating = conv.history.is_empty();
        let latest = conv.last_received(&me).map(|m| m.text.clone());
        let query = utterance_query(&targets, latest.as_deref(), initiating);
        let target_experience = self.recall(ctx.embedder, &query, time, report)?;
        let mut knowledge = Vec::new();
        for t in &targets {
            if let Some(n) = self.semantic.node(t) {
                let facts: Vec<&str> = n.facts().collect();
                knowledge.push(format!(
                    "- {}: {}",
                    t,
                    if facts.is_empty() {
                        "(nothing known)".to_string()
                    } else {
                        facts.join("; ")
                    }
                ));
            } else {
                knowledge.push(format!("- {t}: (nothing known)"));
            }
        }
        let situation = if conv.opening.is_empty() {
            self.render_situation(obs, &[], time)
        } else {
            format!("{}\n{}", conv.opening, self.render_situation(obs, &[], time))
        };
        let req = UtteranceRequest {
            agent: me.clone(),
            character: self.profile.describe(),
            targets: targets.clone(),
            target_knowledge: knowledge.join("\n"),
            target_experience,
            context: situation,
            history: conv.recent(self.config.history_window).to_vec(),
            initiating,
        };
        let text = match ctx.reasoner.generate_utterance(&req) {
            Ok(t) => t.trim().to_string(),
            Err(e) => {
                report
                    .notes
                    .push(format!("utterance failed ({e}); leaving conversation"));
                String::new()
            }
        };
        if text.is_empty() {
            self.finish_conversation(ctx, &conv.id, time)?;
            return Ok(None);
        }
        let range = (farthest + self.config.range_margin).min(self.config.theta_msg);
        let c = &mut self.conversations[idx];
        c.history.push(Message {
            speaker: me,
            text: text.clone(),
            time,
        });
        c.last_message_at = time;
        c.pending_reply = false;
        Ok(Some(Action::Converse {
            conversation: conv.id.clone(),
            to: targets,
            message: text,
            range,
        }))
    }

    /// Close a conversation: store its summary and learn from it.
    pub fn finish_conversation(&mut self, ctx: AgentContext<'_>, id: &str, time: f64) -> Result<(), AgentError> {
        let Some(idx) = self.conversations.iter().position(|c| c.id == id) else {
            return Ok(());
        };
        let conv = self.conversations.remove(idx);
        self.finished_conversations += 1;
        let me = self.profile.name.clone();
        let others: Vec<String> = conv.others(&me).cloned().collect();
        if !conv.history.iter().any(|m| m.speaker != me) {
            let text = format!("Tried to talk with {}, but got no reply.", others.join(", "));
            return self.record(ctx.embedder, time, conv.location, text, None);
        }
        let summary = ctx.reasoner.summarize(&SummaryRequest {
            agent: me.clone(),
            history: conv.history.clone(),
        });
        let transcript = || truncate(&render_history(&conv.history), TRANSCRIPT_LIMIT);
        let summary = match summary {
            Ok(s) if !s.trim().is_empty() => Some(format!("Conversation with {}: {}", others.join(", "), s.trim())),
            Ok(_) => None,
            Err(_) => {
                let text = format!("Conversation with {}: {}", others.join(", "), transcript());
                return self.record(ctx.embedder, time, conv.location, text, None);
            }
        };
        let text = summary.unwrap_or_else(|| format!("Conversation with {}: {}", others.join(", "), transcript()));
        self.record(ctx.embedder, time, conv.location, text, None)?;

        let sample = self
            .semantic
            .sample_items(
                self.config.knowledge_sample,
                self.config.sample_seed.wrapping_add(self.finished_conversations),
            )
            .into_iter()
            .map(|(name, kind, fact)| KnowledgeItem {
                name,
                kind: format!("{kind:?}").to_lowercase(),
                fact,
            })
            .collect();
        let items = match ctx.reasoner.extract_knowledge(&ExtractRequest {
            agent: me.clone(),
            history: conv.history.clone(),
            sample_items: sample,
        }) {
            Ok(items) => items,
            Err(_) => return Ok(()),
        };
        for other in &others {
            self.semantic
                .upsert(ctx.embedder, other, KnowledgeKind::Agent, &[], time)?;
        }
        for item in items {
            let kind = KnowledgeKind::parse(&item.kind).unwrap_or(KnowledgeKind::Fact);
            match self
                .semantic
                .upsert(ctx.embedder, &item.name, kind, std::slice::from_ref(&item.fact), time)
            {
                Ok(_) => {}
                Err(SemanticError::KindConflict { .. } | SemanticError::EmptyName) => continue,
                Err(e) => return Err(e.into()),
            }
            for other in &others {
                if *other != item.name {
                    self.semantic.link(other, "mentioned", &item.name, time)?;
                }
            }
        }
        Ok(())
    }

    fn navigate(&mut self, obs: &Observation, time: f64, report: &mut StepReport) -> Vec<Action> {
        let tod = time_of_day(time);
        let Some(goal) = self
            .schedule
            .as_ref()
            .and_then(|s| s.current(tod))
            .map(|a| a.place.clone())
        else {
            return Vec::new();
        };
        if obs.state.place.as_deref() == Some(goal.as_str()) {
            return Vec::new();
        }
        let Some(entrance) = self.profile.place(&goal).map(|p| p.entrance) else {
            report.notes.push(format!("unknown place {goal}"));
            return Vec::new();
        };
        let here = self.pose.xy();
        let remaining = distance(here, entrance);
        if remaining <= self.config.enter_radius {
            self.path = None;
            return vec![Action::Enter { target: goal }];
        }
        let target = self
            .next_waypoint(here, entrance, &goal, time, report)
            .unwrap_or(entrance);
        let heading = (target[1] - here[1]).atan2(target[0] - here[0]);
        let turn = wrap_angle(heading - self.pose.yaw).to_degrees();
        let mut actions = Vec::new();
        if turn > 1e-9 {
            actions.push(Action::TurnLeft { degrees: turn });
        } else if turn < -1e-9 {
            actions.push(Action::TurnRight { degrees: -turn });
        }
        actions.push(Action::MoveForward {
            meters: self.config.walk_speed.min(remaining),
        });
        actions
    }

    fn next_waypoint(
        &mut self,
        here: Point2,
        entrance: Point2,
        goal: &str,
        time: f64,
        report: &mut StepReport,
    ) -> Option<Point2> {
        let start = self.nav_map.cell_at(here[0], here[1])?;
        let goal_cell = self.nav_map.cell_at(entrance[0], entrance[1])?;
        let result = match (&self.path, self.path_goal.as_deref()) {
            (Some(prev), Some(g)) if g == goal => {
                replan_or_reuse(prev, &self.nav_map, start, goal_cell, &self.config.nav, time)
            }
            _ => plan(&self.nav_map, start, goal_cell, &self.config.nav, time),
        };
        let path = match result {
            Ok(p) => p,
            Err(e) => {
                report.notes.push(format!("no path to {goal}: {e}; heading straight"));
                self.path = None;
                return None;
            }
        };
        if path.expansions > 0 {
            report.path = Some(path.waypoints.iter().map(|c| self.nav_map.cell_center(*c)).collect());
        }
        let lookahead = (self.config.walk_speed / self.nav_map.resolution()).ceil() as usize;
        let target = if path.waypoints.len() <= lookahead + 1 {
            entrance
        } else {
            self.nav_map.cell_center(path.waypoints[lookahead])
        };
        self.path = Some(path);
        self.path_goal = Some(goal.to_string());
        Some(target)
    }
}
