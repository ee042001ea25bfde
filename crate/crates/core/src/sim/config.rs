//! Scenario files: world geometry, inhabitants, stages and evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::clock::as_clock;
use crate::geometry::{bounds, point_in_polygon, Point2};

use super::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildingKind {
    Accommodation,
    Entertainment,
    Food,
    Office,
    Stores,
    Transit,
}

impl BuildingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BuildingKind::Accommodation => "accommodation",
            BuildingKind::Entertainment => "entertainment",
            BuildingKind::Food => "food",
            BuildingKind::Office => "office",
            BuildingKind::Stores => "stores",
            BuildingKind::Transit => "transit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingConfig {
    pub name: String,
    pub kind: BuildingKind,
    pub footprint: Vec<Point2>,
    #[serde(default = "default_building_height")]
    pub height: f64,
    /// Door position, outside the footprint.
    pub entrance: Point2,
}

fn default_building_height() -> f64 {
    4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub name: String,
    pub tag: String,
    /// Ground placement; mutually exclusive with `store`.
    #[serde(default)]
    pub position: Option<Point2>,
    /// Store stock: visible and purchasable only inside the store.
    #[serde(default)]
    pub store: Option<String>,
    #[serde(default)]
    pub price: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub name: String,
    /// Transit place the vehicle belongs to.
    pub transit: String,
    pub position: Point2,
    #[serde(default = "default_speed_multiplier")]
    pub speed_multiplier: f64,
}

fn default_speed_multiplier() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    #[serde(default = "default_age")]
    pub age: u32,
    #[serde(default)]
    pub occupation: String,
    #[serde(default)]
    pub values: String,
    #[serde(default)]
    pub hobbies: String,
    #[serde(default)]
    pub lifestyle: String,
    #[serde(default)]
    pub community_goal: String,
    pub position: Point2,
    #[serde(default)]
    pub yaw_deg: f64,
    #[serde(default)]
    pub cash: f64,
    /// Building the agent starts inside (standing at its entrance).
    #[serde(default)]
    pub start_place: Option<String>,
    /// Other agents this one knows by sight; all of them when absent.
    #[serde(default)]
    pub knows: Option<Vec<String>>,
}

fn default_age() -> u32 {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub meeting_place: String,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub min: Point2,
    pub max: Point2,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            min: [0.0, 0.0],
            max: [128.0, 128.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    /// Downward tilt of the optical axis.
    pub pitch_deg: f64,
    pub eye_height: f64,
    /// Depth and detection cut-off (m).
    pub max_range: f64,
    /// Ray-march step (m).
    pub march_step: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fov_deg: 90.0,
            pitch_deg: 20.0,
            eye_height: 1.6,
            max_range: 20.0,
            march_step: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionMode {
    #[default]
    Oracle,
    Noisy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Confusion {
    pub from: String,
    pub to: String,
    pub p: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub mode: PerceptionMode,
    pub p_miss: f64,
    pub confusion: Vec<Confusion>,
}

/// Per-scenario overrides of the agent defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentTuning {
    pub theta_react: Option<f64>,
    pub idle_close: Option<f64>,
    pub theta_s: Option<f64>,
    pub walk_speed: Option<f64>,
    pub cell_size: Option<f64>,
    pub block_size: Option<f64>,
    pub k: Option<usize>,
    pub sample_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    /// Time of day both stages start at; stage one on day 0, stage two on day 1.
    #[serde(with = "as_clock")]
    pub start: f64,
    /// Stage-one length in ticks.
    pub stage_one: u64,
    /// Stage-two length in ticks; zero skips the stage.
    pub stage_two: u64,
    /// Community goals injected before stage two, by agent name.
    pub goals: BTreeMap<String, String>,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            start: 9.0 * 3600.0,
            stage_one: 60,
            stage_two: 0,
            goals: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskItem {
    pub tag: String,
    pub store: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupTask {
    pub group: String,
    pub items: Vec<TaskItem>,
}

/// Evaluation settings. Clock times refer to the day the scored stage runs on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluationConfig {
    InfluenceBattle {
        /// Organizing groups; their meeting places are the party places.
        organizers: Vec<String>,
        #[serde(with = "as_clock")]
        window_start: f64,
        #[serde(with = "as_clock")]
        window_end: f64,
    },
    LeadershipQuest {
        #[serde(with = "as_clock")]
        deadline: f64,
        tasks: Vec<GroupTask>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_theta_msg")]
    pub theta_msg: f64,
    /// Scripted policy file, relative to the scenario file.
    #[serde(default)]
    pub policy: Option<String>,
    #[serde(default)]
    pub map: MapConfig,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub tuning: AgentTuning,
    #[serde(default)]
    pub stages: StageConfig,
    #[serde(default)]
    pub evaluation: Option<EvaluationConfig>,
    #[serde(default)]
    pub buildings: Vec<BuildingConfig>,
    #[serde(default)]
    pub objects: Vec<ObjectConfig>,
    #[serde(default)]
    pub vehicles: Vec<VehicleConfig>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub groups: Vec<GroupConfig>,
}

fn default_theta_msg() -> f64 {
    10.0
}

/// Largest supported map side (m).
pub const MAX_MAP_SIDE: f64 = 1024.0;

fn err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

impl WorldConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: WorldConfig = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn building(&self, name: &str) -> Option<&BuildingConfig> {
        self.buildings.iter().find(|b| b.name == name)
    }

    pub fn group(&self, name: &str) -> Option<&GroupConfig> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Agent defaults with the scenario's overrides and map applied.
    pub fn agent_config(&self) -> AgentConfig {
        let mut c = AgentConfig::default();
        let t = &self.tuning;
        if let Some(v) = t.theta_react {
            c.theta_react = v;
        }
        if let Some(v) = t.idle_close {
            c.idle_close = v;
        }
        if let Some(v) = t.theta_s {
            c.theta_s = v;
        }
        if let Some(v) = t.walk_speed {
            c.walk_speed = v;
        }
        if let Some(v) = t.cell_size {
            c.cell_size = v;
        }
        if let Some(v) = t.block_size {
            c.block_size = v;
        }
        if let Some(v) = t.k {
            c.k = v;
        }
        if let Some(v) = t.sample_seed {
            c.sample_seed = v;
        }
        c.theta_msg = self.theta_msg;
        c.map_min = self.map.min;
        c.map_max = self.map.max;
        c
    }

    /// Tag vocabulary of the world: object tags plus `person` and `vehicle`.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut v: BTreeSet<String> = self.objects.iter().map(|o| o.tag.clone()).collect();
        v.insert("person".into());
        v.insert("vehicle".into());
        v
    }

    fn in_map(&self, p: Point2) -> bool {
        p[0] >= self.map.min[0] && p[0] <= self.map.max[0] && p[1] >= self.map.min[1] && p[1] <= self.map.max[1]
    }

    fn inside_building(&self, p: Point2) -> Option<&str> {
        self.buildings
            .iter()
            .find(|b| point_in_polygon(p, &b.footprint))
            .map(|b| b.name.as_str())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let (w, h) = (self.map.max[0] - self.map.min[0], self.map.max[1] - self.map.min[1]);
        if !(w > 0.0 && h > 0.0 && w <= MAX_MAP_SIDE && h <= MAX_MAP_SIDE) {
            return Err(err(format!(
                "map must be non-empty and at most {MAX_MAP_SIDE} m per side"
            )));
        }
        if !(self.theta_msg > 0.0 && self.theta_msg.is_finite()) {
            return Err(err("theta_msg must be positive"));
        }
        let cam = &self.camera;
        if cam.width == 0 || cam.height == 0 || !(cam.fov_deg > 0.0 && cam.fov_deg < 180.0) {
            return Err(err("camera needs a non-empty image and a field of view in (0, 180)"));
        }
        if !(cam.max_range > 0.0 && cam.march_step > 0.0 && cam.eye_height > 0.0) {
            return Err(err("camera range, march step and eye height must be positive"));
        }
        let p = &self.perception;
        if !(0.0..=1.0).contains(&p.p_miss) || p.confusion.iter().any(|c| !(0.0..=1.0).contains(&c.p)) {
            return Err(err("perception probabilities must lie in [0, 1]"));
        }
        let mut names = BTreeSet::new();
        let all_names = self
            .buildings
            .iter()
            .map(|b| &b.name)
            .chain(self.objects.iter().map(|o| &o.name))
            .chain(self.vehicles.iter().map(|v| &v.name))
            .chain(self.agents.iter().map(|a| &a.name))
            .chain(self.groups.iter().map(|g| &g.name));
        for n in all_names {
            if n.trim().is_empty() {
                return Err(err("names must be non-empty"));
            }
            if !names.insert(n.as_str()) {
                return Err(err(format!("duplicate name {n:?}")));
            }
        }
        for b in &self.buildings {
            if b.footprint.len() < 3 || !(b.height > 0.0) {
                return Err(err(format!(
                    "building {}: needs a polygon and a positive height",
                    b.name
                )));
            }
            let (lo, hi) = bounds(&b.footprint);
            if !self.in_map(lo) || !self.in_map(hi) || !self.in_map(b.entrance) {
                return Err(err(format!("building {} lies outside the map", b.name)));
            }
            if let Some(other) = self.inside_building(b.entrance) {
                return Err(err(format!("entrance of {} lies inside {other}", b.name)));
            }
        }
        let vocab = self.vocabulary();
        for o in &self.objects {
            if o.tag.trim().is_empty() || o.price < 0.0 {
                return Err(err(format!("object {}: needs a tag and a non-negative price", o.name)));
            }
            match (&o.position, &o.store) {
                (Some(p), None) => {
                    if !self.in_map(*p) || self.inside_building(*p).is_some() {
                        return Err(err(format!("object {} must lie on open ground", o.name)));
                    }
                }
                (None, Some(s)) => match self.building(s) {
                    Some(b) if b.kind == BuildingKind::Stores => {}
                    _ => return Err(err(format!("object {}: {s:?} is not a store", o.name))),
                },
                _ => return Err(err(format!("object {}: give exactly one of position or store", o.name))),
            }
        }
        for v in &self.vehicles {
            match self.building(&v.transit) {
                Some(b) if b.kind == BuildingKind::Transit => {}
                _ => {
                    return Err(err(format!(
                        "vehicle {}: {:?} is not a transit place",
                        v.name, v.transit
                    )))
                }
            }
            if !(v.speed_multiplier > 0.0) || !self.in_map(v.position) || self.inside_building(v.position).is_some() {
                return Err(err(format!("vehicle {}: bad position or speed", v.name)));
            }
        }
        if self.agents.is_empty() {
            return Err(err("at least one agent is required"));
        }
        let agent_names: BTreeSet<&str> = self.agents.iter().map(|a| a.name.as_str()).collect();
        for a in &self.agents {
            if !self.in_map(a.position) || a.cash < 0.0 {
                return Err(err(format!("agent {}: outside the map or negative cash", a.name)));
            }
            match &a.start_place {
                Some(p) if self.building(p).is_none() => {
                    return Err(err(format!("agent {}: unknown start place {p:?}", a.name)))
                }
                None if self.inside_building(a.position).is_some() => {
                    return Err(err(format!(
                        "agent {} starts inside a building without a start place",
                        a.name
                    )))
                }
                _ => {}
            }
            for k in a.knows.iter().flatten() {
                if !agent_names.contains(k.as_str()) {
                    return Err(err(format!("agent {} knows unknown agent {k:?}", a.name)));
                }
            }
        }
        for g in &self.groups {
            if self.building(&g.meeting_place).is_none() {
                return Err(err(format!(
                    "group {}: unknown meeting place {:?}",
                    g.name, g.meeting_place
                )));
            }
            if g.members.is_empty() {
                return Err(err(format!("group {} has no members", g.name)));
            }
            for m in &g.members {
                if !agent_names.contains(m.as_str()) {
                    return Err(err(format!("group {}: {m:?} is not an agent", g.name)));
                }
            }
        }
        for n in self.stages.goals.keys() {
            if !agent_names.contains(n.as_str()) {
                return Err(err(format!("goal for unknown agent {n:?}")));
            }
        }
        match &self.evaluation {
            None => {}
            Some(EvaluationConfig::InfluenceBattle {
                organizers,
                window_start,
                window_end,
            }) => {
                if organizers.is_empty() || window_end <= window_start {
                    return Err(err("influence battle needs organizers and a non-empty window"));
                }
                for o in organizers {
                    if self.group(o).is_none() {
                        return Err(err(format!("unknown organizing group {o:?}")));
                    }
                }
            }
            Some(EvaluationConfig::LeadershipQuest { tasks, .. }) => {
                for t in tasks {
                    if self.group(&t.group).is_none() {
                        return Err(err(format!("task for unknown group {:?}", t.group)));
                    }
                    for item in &t.items {
                        match self.building(&item.store) {
                            Some(b) if b.kind == BuildingKind::Stores => {}
                            _ => return Err(err(format!("unknown store {:?}", item.store))),
                        }
                        if !vocab.contains(&item.tag) {
                            return Err(err(format!("unknown item {:?}", item.tag)));
                        }
                    }
                }
            }
        }
        let ac = self.agent_config();
        if !(ac.cell_size > 0.0 && ac.block_size >= ac.cell_size && ac.walk_speed > 0.0 && ac.theta_s > 0.0) {
            return Err(err("agent tuning must keep sizes, speed and distances positive"));
        }
        Ok(())
    }

    /// Check that every place a scripted policy mentions exists in the world.
    pub fn check_places<'a>(&self, places: impl IntoIterator<Item = &'a str>) -> Result<(), SimError> {
        for p in places {
            if self.building(p).is_none() {
                return Err(err(format!("policy references unknown place {p:?}")));
            }
        }
        Ok(())
    }
}
