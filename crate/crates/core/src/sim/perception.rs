//! Synthetic observations: raycast depth and labeled detections.

use nalgebra::{Isometry3, Point3, Vector3};
use rand::Rng;

use crate::agent::{CameraFrame, Observation, SelfState};
use crate::geometry::{distance, Point2};
use crate::scene_graph::{DetectionCandidate, Mask};
use crate::spatial_grid::{camera_pose, DepthImage, Intrinsics};

use super::config::PerceptionMode;
use super::world::{HeightRaster, ObjectLocation, World};

/// Entities closer than this are always visible (m).
const TOUCH_RANGE: f64 = 1.0;
/// Bisection steps refining a ray hit.
const REFINE_STEPS: usize = 8;

/// Eye pose of an agent standing at `xy` facing `yaw`.
pub fn eye_pose(world: &World, xy: Point2, yaw: f64) -> Isometry3<f64> {
    let cam = &world.config.camera;
    camera_pose(
        Point3::new(xy[0], xy[1], cam.eye_height),
        yaw,
        cam.pitch_deg.to_radians(),
    )
}

pub fn intrinsics(world: &World) -> Intrinsics {
    let cam = &world.config.camera;
    Intrinsics::from_fov(cam.width, cam.height, cam.fov_deg)
}

/// z-depth along one pixel ray, or `None` when nothing is hit in range.
fn cast(raster: &HeightRaster, eye: Point3<f64>, dir: Vector3<f64>, max_range: f64, step: f64) -> Option<f64> {
    let len = dir.norm();
    let s_max = max_range / len;
    let ds = step / len;
    let s_ground = if dir.z < 0.0 { -eye.z / dir.z } else { f64::INFINITY };
    let (ex, ey, ez, dx, dy, dz) = (eye.x, eye.y, eye.z, dir.x, dir.y, dir.z);
    let hit = |s: f64| raster.at(ex + dx * s, ey + dy * s).map(|h| ez + dz * s <= h);
    let end = s_max.min(s_ground);
    let mut prev = 0.0;
    let mut s = ds;
    while s < end {
        match hit(s) {
            None => return None,
            Some(true) => {
                let (mut lo, mut hi) = (prev, s);
                for _ in 0..REFINE_STEPS {
                    let mid = 0.5 * (lo + hi);
                    if hit(mid) == Some(true) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(hi);
            }
            Some(false) => {}
        }
        prev = s;
        s += ds;
    }
    if s_ground <= s_max {
        let p = eye + dir * s_ground;
        raster.at(p.x, p.y)?;
        return Some(s_ground);
    }
    None
}

/// Render the depth image seen from `pose`.
pub fn render_depth(world: &World, pose: &Isometry3<f64>, intr: &Intrinsics) -> DepthImage {
    let cam = &world.config.camera;
    let mut depth = DepthImage::new(intr.width, intr.height);
    let eye = Point3::from(pose.translation.vector);
    let r = pose.rotation.to_rotation_matrix().into_inner();
    let r: [f64; 9] = r.transpose().as_slice().try_into().expect("3x3");
    for v in 0..intr.height {
        for u in 0..intr.width {
            let x = (u as f64 + 0.5 - intr.cx) / intr.fx;
            let y = (v as f64 + 0.5 - intr.cy) / intr.fy;
            let dir = Vector3::new(
                r[0] * x + r[1] * y + r[2],
                r[3] * x + r[4] * y + r[5],
                r[6] * x + r[7] * y + r[8],
            );
            if let Some(d) = cast(world.raster(), eye, dir, cam.max_range, cam.march_step) {
                depth.set(u, v, d as f32);
            }
        }
    }
    depth
}

/// Line of sight between two points, blocked by any building in between.
fn line_of_sight(raster: &HeightRaster, from: Point3<f64>, to: Point3<f64>) -> bool {
    let d = distance([from.x, from.y], [to.x, to.y]);
    let n = (d / 0.1).ceil() as usize;
    for i in 1..n {
        let t = i as f64 / n as f64;
        let p = from + (to - from) * t;
        if raster.at(p.x, p.y).is_none_or(|h| h >= p.z) {
            return false;
        }
    }
    true
}

fn agent_cloud(xy: Point2) -> Vec<Point3<f64>> {
    let mut pts = Vec::new();
    for z in [0.2, 0.6, 1.0, 1.4] {
        for (dx, dy) in [(0.15, 0.0), (-0.15, 0.0), (0.0, 0.15), (0.0, -0.15)] {
            pts.push(Point3::new(xy[0] + dx, xy[1] + dy, z));
        }
    }
    pts
}

fn box_cloud(xy: Point2, half: f64, height: f64) -> Vec<Point3<f64>> {
    let mut pts = Vec::new();
    for z in [0.05, height] {
        for (dx, dy) in [(-half, -half), (half, -half), (half, half), (-half, half)] {
            pts.push(Point3::new(xy[0] + dx, xy[1] + dy, z));
        }
    }
    pts
}

/// Pixels covered by `cloud`; empty when none of it projects into the image.
fn project_mask(pose: &Isometry3<f64>, intr: &Intrinsics, cloud: &[Point3<f64>]) -> Mask {
    let mut bits = vec![false; intr.width * intr.height];
    let inv = pose.inverse();
    for p in cloud {
        let c = inv * p;
        if c.z <= 1e-6 {
            continue;
        }
        let u = intr.fx * c.x / c.z + intr.cx;
        let v = intr.fy * c.y / c.z + intr.cy;
        if u >= 0.0 && v >= 0.0 && (u as usize) < intr.width && (v as usize) < intr.height {
            bits[v as usize * intr.width + u as usize] = true;
        }
    }
    Mask {
        width: intr.width,
        height: intr.height,
        bits,
    }
}

fn center_mask(intr: &Intrinsics) -> Mask {
    let mut bits = vec![false; intr.width * intr.height];
    bits[(intr.height / 2) * intr.width + intr.width / 2] = true;
    Mask {
        width: intr.width,
        height: intr.height,
        bits,
    }
}

struct Entity {
    name: String,
    tag: String,
    cloud: Vec<Point3<f64>>,
    dynamic: bool,
    /// Visible regardless of the view cone (stock seen from inside its store).
    indoors: bool,
}

/// Ground-truth detections visible to `agent`, before any noise.
pub fn oracle_detections(
    world: &World,
    agent: &str,
    pose: &Isometry3<f64>,
    intr: &Intrinsics,
) -> Vec<DetectionCandidate> {
    let Some(me) = world.body(agent) else {
        return Vec::new();
    };
    let here = me.pose.xy();
    let cam = &world.config.camera;
    let mut entities = Vec::new();
    for b in world.bodies.values() {
        if b.name != agent {
            entities.push(Entity {
                name: b.name.clone(),
                tag: "person".into(),
                cloud: agent_cloud(b.pose.xy()),
                dynamic: true,
                indoors: false,
            });
        }
    }
    for o in world.objects.values() {
        match &o.location {
            ObjectLocation::Ground { position } => entities.push(Entity {
                name: o.name.clone(),
                tag: o.tag.clone(),
                cloud: box_cloud(*position, 0.1, 0.25),
                dynamic: false,
                indoors: false,
            }),
            ObjectLocation::Stock { store } if me.place.as_deref() == Some(store.as_str()) => entities.push(Entity {
                name: o.name.clone(),
                tag: o.tag.clone(),
                cloud: box_cloud(o.shelf.unwrap_or(here), 0.1, 0.25),
                dynamic: false,
                indoors: true,
            }),
            _ => {}
        }
    }
    for v in world.vehicles.values() {
        if v.rider.as_deref() != Some(agent) {
            entities.push(Entity {
                name: v.name.clone(),
                tag: "vehicle".into(),
                cloud: box_cloud(v.position, 0.8, 1.2),
                dynamic: true,
                indoors: false,
            });
        }
    }
    let eye = Point3::from(pose.translation.vector);
    let mut out = Vec::new();
    for e in entities {
        let Some(feature) = world.feature(&e.name) else {
            continue;
        };
        let n = e.cloud.len() as f64;
        let centroid = e.cloud.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
        let d = distance(here, [centroid.x, centroid.y]);
        let mask = if e.indoors || d <= TOUCH_RANGE {
            let m = project_mask(pose, intr, &e.cloud);
            if m.area() > 0 {
                m
            } else {
                center_mask(intr)
            }
        } else {
            if d > cam.max_range {
                continue;
            }
            let m = project_mask(pose, intr, &e.cloud);
            if m.area() == 0 || !line_of_sight(world.raster(), eye, Point3::from(centroid)) {
                continue;
            }
            m
        };
        out.push(DetectionCandidate {
            mask,
            tag: e.tag,
            point_cloud: e.cloud.iter().map(|p| [p.x, p.y, p.z]).collect(),
            visual_feature: feature.clone(),
            dynamic: e.dynamic,
        });
    }
    out
}

/// Drop and relabel detections according to the perception settings.
/// Oracle mode passes them through untouched.
pub fn apply_noise(world: &mut World, detections: Vec<DetectionCandidate>) -> Vec<DetectionCandidate> {
    if world.config.perception.mode == PerceptionMode::Oracle {
        return detections;
    }
    let p_miss = world.config.perception.p_miss;
    let confusion = world.config.perception.confusion.clone();
    let mut out = Vec::new();
    for mut d in detections {
        if world.rng.random::<f64>() < p_miss {
            continue;
        }
        for c in confusion.iter().filter(|c| c.from == d.tag) {
            if world.rng.random::<f64>() < c.p {
                d.tag = c.to.clone();
                break;
            }
        }
        out.push(d);
    }
    out
}

/// Full observation for `agent` at the world's current time. Heard messages
/// are taken out of the agent's inbox.
pub fn synthesize_observation(world: &mut World, agent: &str) -> Option<Observation> {
    let body = world.body(agent)?.clone();
    let xy = body.pose.xy();
    let pose = eye_pose(world, xy, body.pose.yaw);
    let intr = intrinsics(world);
    let depth = render_depth(world, &pose, &intr);
    let raw = oracle_detections(world, agent, &pose, &intr);
    let detections = apply_noise(world, raw);
    let heard = world.inbox.remove(agent).unwrap_or_default();
    let held = world.held(agent).into_iter().map(|(h, _, tag)| (h, tag)).collect();
    Some(Observation {
        time: world.time,
        pose: body.pose,
        camera: Some(CameraFrame {
            pose,
            intrinsics: intr,
            depth,
        }),
        detections,
        heard,
        state: SelfState {
            place: body.place.clone(),
            cash: body.cash,
            held,
            vehicle: body.vehicle.clone(),
        },
    })
}
