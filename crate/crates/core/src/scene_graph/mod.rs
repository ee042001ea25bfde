//! Object and region layers of the hierarchical scene graph.
//!
//! Static detections are fused into object nodes by voxel overlap or visual
//! similarity. Dynamic detections (agents, vehicles) move, so they are
//! associated across frames by appearance only. The region layer groups the
//! known buildings using the generalized Voronoi diagram of the occupancy map.

mod gvd;
mod regions;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{cosine, normalize, Feature};
use crate::geometry::{distance, point_in_polygon, polygon_centroid, Point2};

pub use gvd::{compute_gvd, GvdMap, GvdPoint};
pub use regions::{build_region_layer, region_count, spectral_partition, Region, RegionLayer};

pub type ObjectId = u64;
pub type Point3 = [f64; 3];

#[derive(Debug, Error, PartialEq)]
pub enum SceneGraphError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("voxel size must be positive, got {0}")]
    BadVoxel(f64),
}

/// Binary image mask, row-major.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// One labeled detection, already lifted to world space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionCandidate {
    pub mask: Mask,
    pub tag: String,
    pub point_cloud: Vec<Point3>,
    pub visual_feature: Feature,
    pub dynamic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: ObjectId,
    pub tag: String,
    pub point_cloud: Vec<Point3>,
    pub visual_feature: Feature,
    pub dynamic: bool,
    pub last_seen: f64,
    pub location: Point3,
    merges: u32,
}

impl ObjectNode {
    fn recompute_location(&mut self) {
        self.location = centroid(&self.point_cloud);
    }

    fn absorb_feature(&mut self, feature: &[f64]) {
        if feature.len() != self.visual_feature.len() {
            return;
        }
        let n = self.merges as f64;
        let mixed: Feature = self
            .visual_feature
            .iter()
            .zip(feature)
            .map(|(a, b)| (a * n + b) / (n + 1.0))
            .collect();
        self.visual_feature = normalize(mixed);
        self.merges += 1;
    }
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        c[0] += p[0];
        c[1] += p[1];
        c[2] += p[2];
    }
    [c[0] / n, c[1] / n, c[2] / n]
}

type Voxel = (i64, i64, i64);

fn voxel_of(p: &Point3, voxel: f64) -> Voxel {
    (
        (p[0] / voxel).floor() as i64,
        (p[1] / voxel).floor() as i64,
        (p[2] / voxel).floor() as i64,
    )
}

fn voxel_set(points: &[Point3], voxel: f64) -> BTreeSet<Voxel> {
    points.iter().map(|p| voxel_of(p, voxel)).collect()
}

/// Voxelized intersection-over-union of two point clouds.
pub fn geometric_similarity(a: &[Point3], b: &[Point3], voxel: f64) -> Result<f64, SceneGraphError> {
    if a.is_empty() || b.is_empty() {
        return Err(SceneGraphError::EmptyCloud);
    }
    if !(voxel > 0.0) {
        return Err(SceneGraphError::BadVoxel(voxel));
    }
    let va = voxel_set(a, voxel);
    let vb = voxel_set(b, voxel);
    let inter = va.intersection(&vb).count();
    let union = va.len() + vb.len() - inter;
    Ok(inter as f64 / union as f64)
}

fn bbox(points: &[Point3]) -> (Point3, Point3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn boxes_touch(a: &(Point3, Point3), b: &(Point3, Point3), pad: f64) -> bool {
    (0..3).all(|k| a.0[k] <= b.1[k] + pad && b.0[k] <= a.1[k] + pad)
}

/// Keep one point per voxel; the first point seen in a voxel wins, which
/// makes fusing a cloud into itself a no-op.
fn fuse_points(into: &mut Vec<Point3>, from: &[Point3], voxel: f64) {
    let mut seen = voxel_set(into, voxel);
    for p in from {
        if seen.insert(voxel_of(p, voxel)) {
            into.push(*p);
        }
    }
}

fn downsample(points: &[Point3], voxel: f64) -> Vec<Point3> {
    let mut out = Vec::new();
    fuse_points(&mut out, points, voxel);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGraphConfig {
    pub geometric_threshold: f64,
    pub visual_threshold: f64,
    pub dynamic_threshold: f64,
    pub voxel: f64,
}

impl Default for SceneGraphConfig {
    fn default() -> Self {
        Self {
            geometric_threshold: 0.25,
            visual_threshold: 0.9,
            dynamic_threshold: 0.8,
            voxel: 0.1,
        }
    }
}

/// Per-frame record of association decisions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    /// Objects created this frame.
    pub created: Vec<ObjectId>,
    /// `(candidate index, object id)` for every candidate folded into an
    /// existing object.
    pub merged: Vec<(usize, ObjectId)>,
    /// Existing objects absorbed into another one: `(retired, survivor)`.
    pub absorbed: Vec<(ObjectId, ObjectId)>,
}

impl MergeReport {
    pub fn new_objects(&self) -> usize {
        self.created.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildingNode {
    pub name: String,
    pub kind: String,
    pub footprint: Vec<Point2>,
    pub centroid: Point2,
}

impl BuildingNode {
    pub fn new(name: impl Into<String>, kind: impl Into<String>, footprint: Vec<Point2>) -> Self {
        let centroid = polygon_centroid(&footprint);
        Self {
            name: name.into(),
            kind: kind.into(),
            footprint,
            centroid,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub config: SceneGraphConfig,
    objects: BTreeMap<ObjectId, ObjectNode>,
    redirects: BTreeMap<ObjectId, ObjectId>,
    next_id: ObjectId,
    buildings: Vec<BuildingNode>,
    regions: Option<RegionLayer>,
}

impl SceneGraph {
    pub fn new(config: SceneGraphConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectNode> {
        self.objects.values()
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectNode> {
        self.objects.get(&self.resolve(id))
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    /// Follow merge redirects to the live object id.
    pub fn resolve(&self, mut id: ObjectId) -> ObjectId {
        while let Some(&next) = self.redirects.get(&id) {
            id = next;
        }
        id
    }

    pub fn buildings(&self) -> &[BuildingNode] {
        &self.buildings
    }

    pub fn set_buildings(&mut self, buildings: Vec<BuildingNode>) {
        self.buildings = buildings;
    }

    pub fn add_building(&mut self, building: BuildingNode) -> bool {
        if self.buildings.iter().any(|b| b.name == building.name) {
            return false;
        }
        self.buildings.push(building);
        true
    }

    pub fn region_layer(&self) -> Option<&RegionLayer> {
        self.regions.as_ref()
    }

    pub fn set_region_layer(&mut self, layer: RegionLayer) {
        self.regions = Some(layer);
    }

    fn alloc_id(&mut self) -> ObjectId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn insert_new(&mut self, cand: &DetectionCandidate, time: f64) -> ObjectId {
        let id = self.alloc_id();
        let mut node = ObjectNode {
            id,
            tag: cand.tag.clone(),
            point_cloud: downsample(&cand.point_cloud, self.config.voxel),
            visual_feature: normalize(cand.visual_feature.clone()),
            dynamic: cand.dynamic,
            last_seen: time,
            location: [0.0; 3],
            merges: 1,
        };
        node.recompute_location();
        self.objects.insert(id, node);
        id
    }

    /// Fold one frame of detections into the object layer.
    pub fn ingest_detections(&mut self, frame: &[DetectionCandidate], time: f64) -> MergeReport {
        let mut report = MergeReport::default();
        let mut dynamic_idx = Vec::new();
        for (i, cand) in frame.iter().enumerate() {
            if cand.point_cloud.is_empty() {
                continue;
            }
            if cand.dynamic {
                dynamic_idx.push(i);
                continue;
            }
            self.ingest_static(i, cand, time, &mut report);
        }
        if !dynamic_idx.is_empty() {
            let cands: Vec<&DetectionCandidate> = dynamic_idx.iter().map(|&i| &frame[i]).collect();
            for (k, (id, created)) in self.associate_frame(&cands, time).into_iter().enumerate() {
                if created {
                    report.created.push(id);
                } else {
                    report.merged.push((dynamic_idx[k], id));
                }
            }
        }
        report
    }

    fn ingest_static(&mut self, index: usize, cand: &DetectionCandidate, time: f64, report: &mut MergeReport) {
        let cfg = self.config;
        let cand_box = bbox(&cand.point_cloud);
        let mut matches = Vec::new();
        for node in self.objects.values().filter(|n| !n.dynamic) {
            let vis = cosine(&node.visual_feature, &cand.visual_feature);
            let geo = if boxes_touch(&cand_box, &bbox(&node.point_cloud), cfg.voxel) {
                geometric_similarity(&cand.point_cloud, &node.point_cloud, cfg.voxel).unwrap_or(0.0)
            } else {
                0.0
            };
            if geo >= cfg.geometric_threshold || vis >= cfg.visual_threshold {
                matches.push(node.id);
            }
        }
        let Some(&survivor) = matches.iter().min() else {
            let id = self.insert_new(cand, time);
            report.created.push(id);
            return;
        };
        for &other in matches.iter().filter(|&&m| m != survivor) {
            let retired = self.objects.remove(&other).expect("matched object exists");
            let node = self.objects.get_mut(&survivor).expect("survivor exists");
            fuse_points(&mut node.point_cloud, &retired.point_cloud, cfg.voxel);
            node.absorb_feature(&retired.visual_feature);
            node.last_seen = node.last_seen.max(retired.last_seen);
            self.redirects.insert(other, survivor);
            report.absorbed.push((other, survivor));
        }
        let node = self.objects.get_mut(&survivor).expect("survivor exists");
        fuse_points(&mut node.point_cloud, &cand.point_cloud, cfg.voxel);
        node.absorb_feature(&cand.visual_feature);
        node.last_seen = node.last_seen.max(time);
        node.recompute_location();
        report.merged.push((index, survivor));
    }

    /// Associate one dynamic candidate by appearance. Returns the matched or
    /// newly created node id.
    pub fn associate_dynamic(&mut self, candidate: &DetectionCandidate, time: f64) -> ObjectId {
        self.associate_frame(&[candidate], time)[0].0
    }

    /// Greedy one-to-one matching of a frame's dynamic candidates against
    /// dynamic nodes, highest cosine first.
    fn associate_frame(&mut self, cands: &[&DetectionCandidate], time: f64) -> Vec<(ObjectId, bool)> {
        let threshold = self.config.dynamic_threshold;
        let mut pairs = Vec::new();
        for (ci, cand) in cands.iter().enumerate() {
            for node in self.objects.values().filter(|n| n.dynamic) {
                let sim = cosine(&node.visual_feature, &cand.visual_feature);
                if sim > threshold {
                    pairs.push((sim, ci, node.id));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut assigned: Vec<Option<ObjectId>> = vec![None; cands.len()];
        let mut used = BTreeSet::new();
        for (_, ci, id) in pairs {
            if assigned[ci].is_none() && !used.contains(&id) {
                assigned[ci] = Some(id);
                used.insert(id);
            }
        }
        let voxel = self.config.voxel;
        let mut out = Vec::with_capacity(cands.len());
        for (ci, cand) in cands.iter().enumerate() {
            match assigned[ci] {
                Some(id) => {
                    let node = self.objects.get_mut(&id).expect("dynamic node exists");
                    node.point_cloud = downsample(&cand.point_cloud, voxel);
                    node.recompute_location();
                    node.last_seen = time;
                    out.push((id, false));
                }
                None => {
                    let id = self.insert_new(cand, time);
                    out.push((id, true));
                }
            }
        }
        out
    }

    /// Parent of an object in the hierarchy: the building containing its
    /// centroid, else the region of the nearest building.
    pub fn parent_of(&self, id: ObjectId) -> Option<Parent> {
        let node = self.object(id)?;
        let p = [node.location[0], node.location[1]];
        if let Some(b) = self.buildings.iter().find(|b| point_in_polygon(p, &b.footprint)) {
            return Some(Parent::Building(b.name.clone()));
        }
        let nearest = self
            .buildings
            .iter()
            .min_by(|a, b| distance(p, a.centroid).total_cmp(&distance(p, b.centroid)))?;
        let layer = self.regions.as_ref()?;
        layer.region_of(&nearest.name).map(|r| Parent::Region(r.id))
    }

    pub fn snapshot(&self) -> SceneGraphSnapshot {
        let mut containment = Vec::new();
        for node in self.objects.values() {
            match self.parent_of(node.id) {
                Some(Parent::Building(b)) => containment.push(ContainmentEdge {
                    child: format!("object:{}", node.id),
                    parent: format!("building:{b}"),
                }),
                Some(Parent::Region(r)) => containment.push(ContainmentEdge {
                    child: format!("object:{}", node.id),
                    parent: format!("region:{r}"),
                }),
                None => {}
            }
        }
        if let Some(layer) = &self.regions {
            for region in &layer.regions {
                for m in &region.members {
                    containment.push(ContainmentEdge {
                        child: format!("building:{m}"),
                        parent: format!("region:{}", region.id),
                    });
                }
            }
        }
        SceneGraphSnapshot {
            objects: self
                .objects
                .values()
                .map(|n| ObjectRecord {
                    id: n.id,
                    tag: n.tag.clone(),
                    dynamic: n.dynamic,
                    last_seen: n.last_seen,
                    location: n.location,
                    points: n.point_cloud.iter().flat_map(|p| p.iter().copied()).collect(),
                })
                .collect(),
            redirects: self.redirects.iter().map(|(a, b)| (*a, *b)).collect(),
            buildings: self.buildings.clone(),
            regions: self.regions.as_ref().map(|l| l.regions.clone()).unwrap_or_default(),
            containment,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Parent {
    Building(String),
    Region(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: ObjectId,
    pub tag: String,
    pub dynamic: bool,
    pub last_seen: f64,
    pub location: Point3,
    /// Flat `[x0, y0, z0, x1, ...]` coordinates.
    pub points: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentEdge {
    pub child: String,
    pub parent: String,
}

/// Layered export of the scene graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGraphSnapshot {
    pub objects: Vec<ObjectRecord>,
    pub redirects: Vec<(ObjectId, ObjectId)>,
    pub buildings: Vec<BuildingNode>,
    pub regions: Vec<Region>,
    pub containment: Vec<ContainmentEdge>,
}
