//! World state and the rules for applying actions to it.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, Hand};
use crate::agent::{HeardMessage, Pose};
use crate::features::Feature;
use crate::geometry::{distance, point_in_polygon, polygon_centroid, Point2};
use crate::providers::EmbeddingProvider;

use super::config::{BuildingKind, WorldConfig};
use super::SimError;

/// How close an agent must be to a door or vehicle to enter it (m).
pub const ENTER_REACH: f64 = 2.0;
/// How close a ground object must be to be picked up (m).
pub const PICK_REACH: f64 = 1.5;
/// Sub-step used when clipping movement against walls (m).
const MOVE_STEP: f64 = 0.05;
/// Height-raster resolution (m).
const RASTER_RES: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum ObjectLocation {
    Ground { position: Point2 },
    Stock { store: String },
    Held { agent: String, hand: Hand },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub name: String,
    pub tag: String,
    pub price: f64,
    pub location: ObjectLocation,
    /// Where the object sits on a store shelf.
    pub shelf: Option<Point2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub name: String,
    pub pose: Pose,
    pub place: Option<String>,
    pub cash: f64,
    /// Object names by hand.
    pub hands: BTreeMap<Hand, String>,
    pub vehicle: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub name: String,
    pub position: Point2,
    pub speed_multiplier: f64,
    pub rider: Option<String>,
}

/// A message emitted this tick, with the agents it will reach.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentMessage {
    pub conversation: String,
    pub to: Vec<String>,
    pub text: String,
    pub range: f64,
    pub recipients: Vec<String>,
}

/// Outcome of applying one agent's actions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ApplyReport {
    pub sent: Vec<SentMessage>,
    pub notes: Vec<String>,
}

/// Building heights sampled on a regular raster for O(1) ray queries.
#[derive(Clone, Debug, Default)]
pub struct HeightRaster {
    origin: Point2,
    res: f64,
    width: usize,
    height: usize,
    heights: Vec<f32>,
}

impl HeightRaster {
    pub fn build(config: &WorldConfig) -> Self {
        let origin = config.map.min;
        let res = RASTER_RES;
        let width = ((config.map.max[0] - origin[0]) / res).ceil() as usize;
        let height = ((config.map.max[1] - origin[1]) / res).ceil() as usize;
        let mut heights = vec![0.0f32; width * height];
        for b in &config.buildings {
            let (lo, hi) = crate::geometry::bounds(&b.footprint);
            let i0 = ((lo[0] - origin[0]) / res).floor().max(0.0) as usize;
            let j0 = ((lo[1] - origin[1]) / res).floor().max(0.0) as usize;
            let i1 = (((hi[0] - origin[0]) / res).ceil() as usize).min(width);
            let j1 = (((hi[1] - origin[1]) / res).ceil() as usize).min(height);
            for j in j0..j1 {
                for i in i0..i1 {
                    let c = [origin[0] + (i as f64 + 0.5) * res, origin[1] + (j as f64 + 0.5) * res];
                    if point_in_polygon(c, &b.footprint) {
                        let h = &mut heights[j * width + i];
                        *h = h.max(b.height as f32);
                    }
                }
            }
        }
        Self {
            origin,
            res,
            width,
            height,
            heights,
        }
    }

    /// Surface height at `(x, y)`; `None` outside the map.
    pub fn at(&self, x: f64, y: f64) -> Option<f64> {
        let fx = (x - self.origin[0]) / self.res;
        let fy = (y - self.origin[1]) / self.res;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = (fx as usize, fy as usize);
        if i >= self.width || j >= self.height {
            return None;
        }
        Some(self.heights[j * self.width + i] as f64)
    }

    pub fn blocked(&self, p: Point2) -> bool {
        self.at(p[0], p[1]).is_none_or(|h| h > 0.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub time: f64,
    pub bodies: BTreeMap<String, Body>,
    pub objects: BTreeMap<String, WorldObject>,
    pub vehicles: BTreeMap<String, Vehicle>,
    /// Messages waiting for delivery at the next tick, by recipient.
    pub inbox: BTreeMap<String, Vec<HeardMessage>>,
    pub rng: ChaCha8Rng,
    #[serde(skip)]
    pub(crate) raster: HeightRaster,
    /// Appearance features of agents, objects and vehicles, by name.
    #[serde(skip)]
    pub(crate) features: BTreeMap<String, Feature>,
    /// Agent walking speed (m/s).
    #[serde(skip)]
    pub(crate) walk_speed: f64,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.time == other.time
            && self.bodies == other.bodies
            && self.objects == other.objects
            && self.vehicles == other.vehicles
            && self.inbox == other.inbox
            && self.rng == other.rng
    }
}

/// Appearance descriptor rendered for a world object.
pub fn object_descriptor(tag: &str, name: &str) -> String {
    format!("{tag} {name}")
}

impl World {
    /// Fresh world at absolute time `time`.
    pub fn new(config: WorldConfig, embedder: &dyn EmbeddingProvider, time: f64) -> Result<Self, SimError> {
        config.validate()?;
        let mut bodies = BTreeMap::new();
        for a in &config.agents {
            let (position, place) = match &a.start_place {
                Some(p) => (
                    config.building(p).map(|b| b.entrance).unwrap_or(a.position),
                    Some(p.clone()),
                ),
                None => (a.position, None),
            };
            bodies.insert(
                a.name.clone(),
                Body {
                    name: a.name.clone(),
                    pose: Pose {
                        position: [position[0], position[1], 0.0],
                        yaw: a.yaw_deg.to_radians(),
                    },
                    place,
                    cash: a.cash,
                    hands: BTreeMap::new(),
                    vehicle: None,
                },
            );
        }
        let mut shelf_slots: BTreeMap<String, usize> = BTreeMap::new();
        let mut objects = BTreeMap::new();
        for o in &config.objects {
            let (location, shelf) = match (&o.position, &o.store) {
                (Some(p), _) => (ObjectLocation::Ground { position: *p }, None),
                (None, Some(s)) => {
                    let slot = shelf_slots.entry(s.clone()).or_default();
                    let b = config.building(s).expect("validated store");
                    let c = polygon_centroid(&b.footprint);
                    let shelf = [c[0] + 0.5 * (*slot % 5) as f64 - 1.0, c[1] + 0.5 * (*slot / 5) as f64];
                    *slot += 1;
                    (ObjectLocation::Stock { store: s.clone() }, Some(shelf))
                }
                (None, None) => unreachable!("validated placement"),
            };
            objects.insert(
                o.name.clone(),
                WorldObject {
                    name: o.name.clone(),
                    tag: o.tag.clone(),
                    price: o.price,
                    location,
                    shelf,
                },
            );
        }
        let vehicles = config
            .vehicles
            .iter()
            .map(|v| {
                (
                    v.name.clone(),
                    Vehicle {
                        name: v.name.clone(),
                        position: v.position,
                        speed_multiplier: v.speed_multiplier,
                        rider: None,
                    },
                )
            })
            .collect();
        let mut world = Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            time,
            bodies,
            objects,
            vehicles,
            inbox: BTreeMap::new(),
            raster: HeightRaster::default(),
            features: BTreeMap::new(),
            walk_speed: 0.0,
        };
        world.prepare(embedder)?;
        Ok(world)
    }

    /// Rebuild derived data after deserialization.
    pub fn prepare(&mut self, embedder: &dyn EmbeddingProvider) -> Result<(), SimError> {
        self.raster = HeightRaster::build(&self.config);
        self.walk_speed = self.config.agent_config().walk_speed;
        let mut features = BTreeMap::new();
        for a in &self.config.agents {
            let f = embedder.embed_image(&crate::agent::appearance_descriptor(&a.name))?;
            features.insert(a.name.clone(), f);
        }
        for o in &self.config.objects {
            features.insert(
                o.name.clone(),
                embedder.embed_image(&object_descriptor(&o.tag, &o.name))?,
            );
        }
        for v in &self.config.vehicles {
            features.insert(
                v.name.clone(),
                embedder.embed_image(&object_descriptor("vehicle", &v.name))?,
            );
        }
        self.features = features;
        Ok(())
    }

    pub fn raster(&self) -> &HeightRaster {
        &self.raster
    }

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features.get(name)
    }

    pub fn body(&self, name: &str) -> Option<&Body> {
        self.bodies.get(name)
    }

    /// Hand contents as `(hand, object name, tag)`.
    pub fn held(&self, agent: &str) -> Vec<(Hand, String, String)> {
        self.bodies
            .get(agent)
            .map(|b| {
                b.hands
                    .iter()
                    .map(|(h, o)| {
                        (
                            *h,
                            o.clone(),
                            self.objects.get(o).map(|x| x.tag.clone()).unwrap_or_default(),
                        )
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    fn in_map(&self, p: Point2) -> bool {
        let m = &self.config.map;
        p[0] >= m.min[0] && p[0] <= m.max[0] && p[1] >= m.min[1] && p[1] <= m.max[1]
    }

    fn walkable(&self, p: Point2) -> bool {
        self.in_map(p) && !self.raster.blocked(p)
    }

    /// Slide from `from` by `delta`, stopping at walls and map edges. Blocked
    /// sub-steps fall back to moving along one axis.
    fn clip_move(&self, from: Point2, delta: [f64; 2]) -> Point2 {
        let len = (delta[0] * delta[0] + delta[1] * delta[1]).sqrt();
        if len == 0.0 {
            return from;
        }
        let steps = (len / MOVE_STEP).ceil() as usize;
        let (sx, sy) = (delta[0] / steps as f64, delta[1] / steps as f64);
        let mut p = from;
        for _ in 0..steps {
            let full = [p[0] + sx, p[1] + sy];
            if self.walkable(full) {
                p = full;
                continue;
            }
            let (ax, ay) = ([p[0] + sx, p[1]], [p[0], p[1] + sy]);
            let slide = if sx.abs() >= sy.abs() { [ax, ay] } else { [ay, ax] };
            match slide.into_iter().find(|q| *q != p && self.walkable(*q)) {
                Some(q) => p = q,
                None => break,
            }
        }
        p
    }

    /// Agents within `range` of `origin`, excluding `sender`. Distances use
    /// the positions given, so delivery is symmetric in distance.
    pub fn delivery_set(positions: &BTreeMap<String, Point2>, sender: &str, origin: Point2, range: f64) -> Vec<String> {
        positions
            .iter()
            .filter(|(n, p)| n.as_str() != sender && distance(origin, **p) <= range)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn positions(&self) -> BTreeMap<String, Point2> {
        self.bodies.iter().map(|(n, b)| (n.clone(), b.pose.xy())).collect()
    }

    /// Apply one agent's actions in order. `pre_tick` holds every agent's
    /// position at the start of the tick; message delivery uses it.
    pub fn apply_actions(
        &mut self,
        agent: &str,
        actions: &[Action],
        pre_tick: &BTreeMap<String, Point2>,
    ) -> Result<ApplyReport, SimError> {
        if !self.bodies.contains_key(agent) {
            return Err(SimError::UnknownAgent(agent.to_string()));
        }
        let mut report = ApplyReport::default();
        let mut moved = 0.0;
        for a in actions {
            if let Err(why) = self.apply_one(agent, a, pre_tick, &mut moved, &mut report) {
                report.notes.push(format!("ignored {}: {why}", action_label(a)));
            }
        }
        Ok(report)
    }

    fn apply_one(
        &mut self,
        agent: &str,
        action: &Action,
        pre_tick: &BTreeMap<String, Point2>,
        moved: &mut f64,
        report: &mut ApplyReport,
    ) -> Result<(), String> {
        match action {
            Action::TurnLeft { degrees } | Action::TurnRight { degrees } => {
                if !degrees.is_finite() {
                    return Err("non-finite angle".into());
                }
                let sign = if matches!(action, Action::TurnLeft { .. }) {
                    1.0
                } else {
                    -1.0
                };
                let b = self.bodies.get_mut(agent).expect("checked");
                b.pose.yaw = crate::agent::wrap_angle(b.pose.yaw + sign * degrees.to_radians());
            }
            Action::MoveForward { meters } => {
                if !(meters.is_finite() && *meters >= 0.0) {
                    return Err("distance must be finite and non-negative".into());
                }
                let b = &self.bodies[agent];
                let mult = b
                    .vehicle
                    .as_ref()
                    .and_then(|v| self.vehicles.get(v))
                    .map_or(1.0, |v| v.speed_multiplier);
                let budget = (self.walk_speed * mult - *moved).max(0.0);
                let m = if *meters > budget + 1e-9 {
                    report
                        .notes
                        .push(format!("move of {meters:.2} m clipped to {budget:.2} m"));
                    budget
                } else {
                    *meters
                };
                *moved += m;
                let from = b.pose.xy();
                let yaw = b.pose.yaw;
                let to = self.clip_move(from, [m * yaw.cos(), m * yaw.sin()]);
                let b = self.bodies.get_mut(agent).expect("checked");
                if m > 0.0 {
                    if let Some(p) = b.place.take() {
                        report.notes.push(format!("left {p}"));
                    }
                }
                b.pose.position = [to[0], to[1], 0.0];
                if let Some(v) = b.vehicle.clone() {
                    if let Some(v) = self.vehicles.get_mut(&v) {
                        v.position = to;
                    }
                }
            }
            Action::Enter { target } => {
                let here = self.bodies[agent].pose.xy();
                if let Some(b) = self.config.building(target) {
                    if distance(here, b.entrance) > ENTER_REACH {
                        return Err(format!("too far from the entrance of {target}"));
                    }
                    if self.bodies[agent].vehicle.is_some() && b.kind != BuildingKind::Transit {
                        return Err("cannot enter a building while riding".into());
                    }
                    let entrance = b.entrance;
                    let body = self.bodies.get_mut(agent).expect("checked");
                    body.place = Some(target.clone());
                    body.pose.position = [entrance[0], entrance[1], 0.0];
                } else if let Some(v) = self.vehicles.get(target) {
                    if self.bodies[agent].vehicle.is_some() {
                        return Err("already riding".into());
                    }
                    if v.rider.is_some() {
                        return Err(format!("{target} is taken"));
                    }
                    if distance(here, v.position) > ENTER_REACH {
                        return Err(format!("too far from {target}"));
                    }
                    let p = v.position;
                    self.vehicles.get_mut(target).expect("present").rider = Some(agent.to_string());
                    let body = self.bodies.get_mut(agent).expect("checked");
                    body.vehicle = Some(target.clone());
                    body.place = None;
                    body.pose.position = [p[0], p[1], 0.0];
                } else {
                    return Err(format!("unknown target {target}"));
                }
            }
            Action::Exit { vehicle } => {
                if self.bodies[agent].vehicle.as_deref() != Some(vehicle.as_str()) {
                    return Err(format!("not riding {vehicle}"));
                }
                self.bodies.get_mut(agent).expect("checked").vehicle = None;
                if let Some(v) = self.vehicles.get_mut(vehicle) {
                    v.rider = None;
                }
            }
            Action::Pick { object, hand } => self.pick(agent, object, *hand)?,
            Action::Drop { hand } => {
                let body = self.bodies.get_mut(agent).expect("checked");
                let Some(obj) = body.hands.remove(hand) else {
                    return Err("hand is empty".into());
                };
                let position = body.pose.xy();
                self.objects.get_mut(&obj).expect("held objects exist").location = ObjectLocation::Ground { position };
            }
            Action::Converse {
                conversation,
                to,
                message,
                range,
            } => {
                if message.trim().is_empty() || !range.is_finite() || *range < 0.0 {
                    return Err("empty message or invalid range".into());
                }
                let range = if *range > self.config.theta_msg {
                    report
                        .notes
                        .push(format!("range {range:.2} m capped at {:.2} m", self.config.theta_msg));
                    self.config.theta_msg
                } else {
                    *range
                };
                let origin = pre_tick.get(agent).copied().unwrap_or(self.bodies[agent].pose.xy());
                let recipients = Self::delivery_set(pre_tick, agent, origin, range);
                for r in &recipients {
                    self.inbox.entry(r.clone()).or_default().push(HeardMessage {
                        sender: agent.to_string(),
                        conversation: conversation.clone(),
                        to: to.clone(),
                        text: message.clone(),
                        sender_location: origin,
                        range,
                        sent_at: self.time,
                    });
                }
                report.sent.push(SentMessage {
                    conversation: conversation.clone(),
                    to: to.clone(),
                    text: message.clone(),
                    range,
                    recipients,
                });
            }
        }
        Ok(())
    }

    fn pick(&mut self, agent: &str, wanted: &str, hand: Hand) -> Result<(), String> {
        let body = &self.bodies[agent];
        if body.hands.contains_key(&hand) {
            return Err("hand is full".into());
        }
        let here = body.pose.xy();
        let matches = |o: &WorldObject| o.name == wanted || o.tag == wanted;
        let in_store = body
            .place
            .as_deref()
            .filter(|p| self.config.building(p).is_some_and(|b| b.kind == BuildingKind::Stores));
        let mut candidates: Vec<(f64, &WorldObject)> = self
            .objects
            .values()
            .filter(|o| matches(o))
            .filter_map(|o| match &o.location {
                ObjectLocation::Stock { store } if Some(store.as_str()) == in_store => Some((0.0, o)),
                ObjectLocation::Ground { position } if distance(here, *position) <= PICK_REACH => {
                    Some((distance(here, *position), o))
                }
                _ => None,
            })
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.name.cmp(&b.1.name)));
        let Some((_, obj)) = candidates.first() else {
            return Err(format!("no {wanted} within reach"));
        };
        let (name, price, stocked) = (
            obj.name.clone(),
            obj.price,
            matches!(obj.location, ObjectLocation::Stock { .. }),
        );
        let body = self.bodies.get_mut(agent).expect("checked");
        if stocked {
            if body.cash + 1e-9 < price {
                return Err(format!("cannot afford {name} ({price:.2})"));
            }
            body.cash -= price;
        }
        body.hands.insert(hand, name.clone());
        self.objects.get_mut(&name).expect("present").location = ObjectLocation::Held {
            agent: agent.to_string(),
            hand,
        };
        Ok(())
    }

    /// Every object is in exactly one place, and hands and objects agree.
    pub fn check_conservation(&self) -> Result<(), String> {
        if self.objects.len() != self.config.objects.len() {
            return Err(format!(
                "{} objects, expected {}",
                self.objects.len(),
                self.config.objects.len()
            ));
        }
        for o in self.objects.values() {
            match &o.location {
                ObjectLocation::Held { agent, hand } => {
                    if self.bodies.get(agent).and_then(|b| b.hands.get(hand)) != Some(&o.name) {
                        return Err(format!("{} claims to be held by {agent} but is not", o.name));
                    }
                }
                ObjectLocation::Stock { store } => {
                    if self.config.building(store).is_none() {
                        return Err(format!("{} stocked in unknown store {store}", o.name));
                    }
                }
                ObjectLocation::Ground { position } => {
                    if !position.iter().all(|v| v.is_finite()) {
                        return Err(format!("{} has a non-finite position", o.name));
                    }
                }
            }
        }
        for b in self.bodies.values() {
            for (hand, obj) in &b.hands {
                match self.objects.get(obj).map(|o| &o.location) {
                    Some(ObjectLocation::Held { agent, hand: h }) if agent == &b.name && h == hand => {}
                    _ => return Err(format!("{} holds {obj} but the object disagrees", b.name)),
                }
            }
        }
        Ok(())
    }
}

fn action_label(a: &Action) -> String {
    match a {
        Action::MoveForward { meters } => format!("move {meters:.2} m"),
        Action::TurnLeft { degrees } => format!("turn left {degrees:.1}"),
        Action::TurnRight { degrees } => format!("turn right {degrees:.1}"),
        Action::Enter { target } => format!("enter {target}"),
        Action::Exit { vehicle } => format!("exit {vehicle}"),
        Action::Pick { object, .. } => format!("pick {object}"),
        Action::Drop { hand } => format!("drop ({hand:?} hand)"),
        Action::Converse { conversation, .. } => format!("message in {conversation}"),
    }
}
