//! Independent reference implementations shared by the integration tests and
//! the acceptance runner. Nothing here calls the library's own scoring,
//! classification or search code.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use lifemem::agent::Schedule;
use lifemem::episodic::{EpisodicStore, NewEvent};
use lifemem::providers::ActivitySpec;
use lifemem::spatial_grid::CellState;
use rand::Rng;

// ---------------------------------------------------------------- retrieval

#[derive(Clone, Debug)]
pub struct OracleEvent {
    pub id: u64,
    pub location: [f64; 3],
    pub text: Vec<f64>,
    pub image: Option<Vec<f64>>,
    pub last_accessed: f64,
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

fn scale(v: &[f64]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    v.iter()
        .map(|&x| if hi == lo { 1.0 } else { (x - lo) / (hi - lo) })
        .collect()
}

/// Brute-force top-k with the same side effect as retrieval: the returned
/// events get their access time bumped to the query time.
#[allow(clippy::too_many_arguments)]
pub fn oracle_retrieve(
    events: &mut [OracleEvent],
    time: f64,
    location: [f64; 3],
    text: &[f64],
    image: Option<&[f64]>,
    k: usize,
    epsilon: f64,
    tau: f64,
) -> Vec<u64> {
    if events.is_empty() {
        return Vec::new();
    }
    let prox: Vec<f64> = events
        .iter()
        .map(|e| {
            let d = ((e.location[0] - location[0]).powi(2)
                + (e.location[1] - location[1]).powi(2)
                + (e.location[2] - location[2]).powi(2))
            .sqrt();
            1.0 / (d + epsilon)
        })
        .collect();
    let rel: Vec<f64> = events
        .iter()
        .map(|e| {
            let t = cos(&e.text, text);
            match (&e.image, image) {
                (Some(a), Some(b)) => (t + cos(a, b)) / 2.0,
                _ => t,
            }
        })
        .collect();
    let rec: Vec<f64> = events.iter().map(|e| (-(time - e.last_accessed) / tau).exp()).collect();
    let (p, r, c) = (scale(&prox), scale(&rel), scale(&rec));
    let mut scored: Vec<(f64, u64)> = (0..events.len())
        .map(|i| ((p[i] + r[i] + c[i]) / 3.0, events[i].id))
        .collect();
    scored.sort_by(|a, b| match b.0.partial_cmp(&a.0).unwrap() {
        Ordering::Equal => a.1.cmp(&b.1),
        o => o,
    });
    let top: Vec<u64> = scored.into_iter().take(k.max(1)).map(|s| s.1).collect();
    for id in &top {
        let e = events.iter_mut().find(|e| e.id == *id).unwrap();
        if time > e.last_accessed {
            e.last_accessed = time;
        }
    }
    top
}

pub fn small_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-2..=2) as f64).collect()
}

/// Random store plus its oracle mirror. Coordinates and features are small
/// integers so exact ties are common.
pub fn random_store(rng: &mut impl Rng, n: usize) -> (EpisodicStore, Vec<OracleEvent>, f64) {
    let mut store = EpisodicStore::new();
    let mut mirror = Vec::new();
    let mut t = 0.0;
    for _ in 0..n {
        t += rng.random_range(0..300) as f64;
        let location = [rng.random_range(0..5) as f64, rng.random_range(0..5) as f64, 0.0];
        let text = small_vec(rng, 4);
        let image = rng.random_bool(0.5).then(|| small_vec(rng, 3));
        let id = store
            .record(NewEvent {
                time: t,
                location,
                place: "somewhere".into(),
                text: "event".into(),
                text_feature: text.clone(),
                image_feature: image.clone(),
            })
            .unwrap();
        mirror.push(OracleEvent {
            id,
            location,
            text,
            image,
            last_accessed: t,
        });
    }
    (store, mirror, t)
}

// ---------------------------------------------------------------- occupancy

/// Column of observed surfaces per cell; `None` for never-observed cells.
pub type Heightfield = Vec<Vec<Option<Vec<f64>>>>;

/// Standable height: lowest surface with every other surface more than
/// `clearance` above it.
pub fn oracle_standable(surfaces: &[f64], clearance: f64) -> f64 {
    let mut s = surfaces.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for i in 0..s.len() {
        if s.iter().skip(i + 1).all(|&z| z - s[i] > clearance) {
            return s[i];
        }
    }
    *s.last().unwrap()
}

/// Cell-by-cell classification with an explicit 4-neighbour scan.
pub fn oracle_occupancy(field: &Heightfield, threshold: f64, clearance: f64) -> Vec<Vec<CellState>> {
    let w = field.len();
    let h = field[0].len();
    let heights: Vec<Vec<Option<f64>>> = field
        .iter()
        .map(|col| {
            col.iter()
                .map(|c| c.as_ref().map(|s| oracle_standable(s, clearance)))
                .collect()
        })
        .collect();
    let mut out = vec![vec![CellState::Unknown; h]; w];
    for x in 0..w {
        for y in 0..h {
            let Some(z) = heights[x][y] else { continue };
            let mut obstacle = false;
            if x > 0 {
                obstacle |= heights[x - 1][y].is_some_and(|n| (z - n).abs() > threshold);
            }
            if x + 1 < w {
                obstacle |= heights[x + 1][y].is_some_and(|n| (z - n).abs() > threshold);
            }
            if y > 0 {
                obstacle |= heights[x][y - 1].is_some_and(|n| (z - n).abs() > threshold);
            }
            if y + 1 < h {
                obstacle |= heights[x][y + 1].is_some_and(|n| (z - n).abs() > threshold);
            }
            out[x][y] = if obstacle { CellState::Obstacle } else { CellState::Free };
        }
    }
    out
}

/// Random heightfield: terraced ground, some holes, some overhangs (a roof
/// either low enough to block a person or high enough to stand under).
/// The two corners are always observed so the known bounds span the field.
pub fn random_heightfield(rng: &mut impl Rng, w: usize, h: usize) -> Heightfield {
    let mut field = vec![vec![None; h]; w];
    for (x, col) in field.iter_mut().enumerate() {
        for (y, cell) in col.iter_mut().enumerate() {
            let corner = (x == 0 && y == 0) || (x == w - 1 && y == h - 1);
            if !corner && rng.random_bool(0.1) {
                continue;
            }
            // terraces on multiples of 0.3 m, so some steps exceed 0.5 m and some don't
            let ground = rng.random_range(0..6) as f64 * 0.3 + 0.05;
            let mut s = vec![ground];
            if rng.random_bool(0.1) {
                let gap = if rng.random_bool(0.5) { 1.0 } else { 2.5 };
                s.push(ground + gap);
            }
            *cell = Some(s);
        }
    }
    field
}

// ---------------------------------------------------------------- planning

pub const PROXIMITY_RADIUS: f64 = 10.0;

/// Per-cell entry cost pieces: base (None for obstacles) and proximity
/// penalty from a brute-force nearest-obstacle scan.
pub fn oracle_cell_costs(states: &[CellState], w: usize, h: usize, coeff: f64) -> (Vec<Option<f64>>, Vec<f64>) {
    let obstacles: Vec<(f64, f64)> = (0..w * h)
        .filter(|&i| states[i] == CellState::Obstacle)
        .map(|i| ((i % w) as f64, (i / w) as f64))
        .collect();
    let mut base = Vec::with_capacity(w * h);
    let mut pen = Vec::with_capacity(w * h);
    for i in 0..w * h {
        base.push(match states[i] {
            CellState::Free => Some(1.0),
            CellState::Unknown => Some(5.0),
            CellState::Obstacle => None,
        });
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let d = obstacles
            .iter()
            .map(|(ox, oy)| ((x - ox).powi(2) + (y - oy).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        pen.push(if d > 0.0 && d <= PROXIMITY_RADIUS {
            coeff / d
        } else {
            0.0
        });
    }
    (base, pen)
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.partial_cmp(&self.0).unwrap().then(o.1.cmp(&self.1))
    }
}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Plain Dijkstra over the 8-connected grid. `None` when unreachable.
pub fn oracle_dijkstra(
    states: &[CellState],
    w: usize,
    h: usize,
    start: (usize, usize),
    goal: (usize, usize),
) -> Option<f64> {
    oracle_dijkstra_avoiding(states, w, h, start, goal, &|_, _| false)
}

/// Dijkstra on the costs of `states` that never enters cells for which
/// `avoid(x, y)` holds.
pub fn oracle_dijkstra_avoiding(
    states: &[CellState],
    w: usize,
    h: usize,
    start: (usize, usize),
    goal: (usize, usize),
    avoid: &dyn Fn(usize, usize) -> bool,
) -> Option<f64> {
    let (mut base, pen) = oracle_cell_costs(states, w, h, 100.0);
    for (i, b) in base.iter_mut().enumerate() {
        if avoid(i % w, i / w) {
            *b = None;
        }
    }
    let idx = |x: usize, y: usize| y * w + x;
    base[idx(start.0, start.1)]?;
    let mut dist = vec![f64::INFINITY; w * h];
    let mut heap = BinaryHeap::new();
    dist[idx(start.0, start.1)] = 0.0;
    heap.push(Item(0.0, idx(start.0, start.1)));
    while let Some(Item(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        if i == idx(goal.0, goal.1) {
            return Some(d);
        }
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = idx(nx as usize, ny as usize);
                let Some(b) = base[j] else { continue };
                let len = if dx != 0 && dy != 0 { 2f64.sqrt() } else { 1.0 };
                let nd = d + b * len + pen[j];
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Item(nd, j));
                }
            }
        }
    }
    None
}

pub fn random_states(rng: &mut impl Rng, w: usize, h: usize, p_obstacle: f64, p_unknown: f64) -> Vec<CellState> {
    (0..w * h)
        .map(|_| {
            let r: f64 = rng.random();
            if r < p_obstacle {
                CellState::Obstacle
            } else if r < p_obstacle + p_unknown {
                CellState::Unknown
            } else {
                CellState::Free
            }
        })
        .collect()
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- schedules

/// Commute table used by the schedule tests: symmetric, zero on the diagonal.
pub fn commute_table(places: &[&str], rng: &mut impl Rng) -> BTreeMap<(String, String), f64> {
    let mut t = BTreeMap::new();
    for (i, a) in places.iter().enumerate() {
        for b in &places[i..] {
            let s = if a == b {
                0.0
            } else {
                rng.random_range(1..=20) as f64 * 60.0
            };
            t.insert((a.to_string(), b.to_string()), s);
            t.insert((b.to_string(), a.to_string()), s);
        }
    }
    t
}

/// Check a repaired schedule from first principles.
///
/// * entries are proper, ordered and pairwise disjoint;
/// * nothing starts before `not_before`;
/// * between consecutive activities (or the start place) there is at least
///   the commute time, and that gap is covered by commute blocks;
/// * every activity comes from the raw list with the same end, place and
///   description and a start no earlier than requested.
pub fn oracle_schedule_ok(
    schedule: &Schedule,
    raw: &[ActivitySpec],
    start_place: Option<&str>,
    not_before: f64,
    commute: &BTreeMap<(String, String), f64>,
) -> Result<(), String> {
    let e = &schedule.entries;
    for a in e {
        if !(a.start < a.end) {
            return Err(format!("empty interval {a:?}"));
        }
        if a.start < not_before - 1e-9 {
            return Err(format!("starts before {not_before}: {a:?}"));
        }
    }
    for i in 1..e.len() {
        if e[i].start < e[i - 1].end {
            return Err(format!("overlap {:?} / {:?}", e[i - 1], e[i]));
        }
    }
    let mut prev: Option<(String, f64)> = start_place.map(|p| (p.to_string(), not_before));
    let mut covered = 0.0;
    for a in e {
        if a.commute {
            covered += a.end - a.start;
            continue;
        }
        if !raw
            .iter()
            .any(|r| r.end == a.end && r.place == a.place && r.description == a.description && r.start <= a.start)
        {
            return Err(format!("activity not from input: {a:?}"));
        }
        if let Some((p, end)) = &prev {
            let need = commute[&(p.clone(), a.place.clone())];
            if a.start - end + 1e-9 < need {
                return Err(format!("gap {} < commute {need} for {a:?}", a.start - end));
            }
            if covered + 1e-9 < need {
                return Err(format!("commute blocks cover {covered} < {need} for {a:?}"));
            }
        }
        prev = Some((a.place.clone(), a.end));
        covered = 0.0;
    }
    Ok(())
}

/// Random raw schedule: unordered, overlapping, some inverted or empty.
pub fn random_raw_schedule(rng: &mut impl Rng, places: &[&str]) -> Vec<ActivitySpec> {
    let n = rng.random_range(0..10);
    (0..n)
        .map(|i| {
            let start = rng.random_range(0..(18 * 3600)) as f64;
            let len = rng.random_range(-600..(3 * 3600)) as f64;
            ActivitySpec {
                start,
                end: start + len,
                description: format!("task {i}"),
                place: places[rng.random_range(0..places.len())].to_string(),
            }
        })
        .collect()
}
