//! Weighted A* over an occupancy map, path reuse and commute estimates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, Point2};
use crate::spatial_grid::{CellState, MapCell, OccupancyMap};

pub const DEFAULT_WALK_SPEED: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("cell ({},{}) is outside the map", .0.x, .0.y)]
    OutOfBounds(MapCell),
    #[error("start cell ({},{}) is an obstacle", .0.x, .0.y)]
    StartBlocked(MapCell),
    #[error("no path: {0}")]
    NoPath(FrontierSummary),
    #[error("unknown place {0}")]
    UnknownPlace(String),
    #[error("invalid weights: {0}")]
    Weights(String),
}

/// What the search saw before giving up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierSummary {
    pub expanded: usize,
    /// Reached cell closest (euclidean) to the goal.
    pub closest: MapCell,
    pub closest_distance_cells: f64,
}

impl std::fmt::Display for FrontierSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "expanded {} cells, got within {:.2} cells of the goal at ({},{})",
            self.expanded, self.closest_distance_cells, self.closest.x, self.closest.y
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavWeights {
    pub free_cost: f64,
    pub unknown_cost: f64,
    pub proximity_coeff: f64,
    /// Obstacles farther than this many cells add no penalty.
    pub proximity_radius: usize,
}

impl Default for NavWeights {
    fn default() -> Self {
        Self {
            free_cost: 1.0,
            unknown_cost: 5.0,
            proximity_coeff: 100.0,
            proximity_radius: 10,
        }
    }
}

impl NavWeights {
    pub fn validate(&self) -> Result<(), NavError> {
        if !(self.free_cost > 0.0 && self.free_cost < self.unknown_cost && self.unknown_cost.is_finite()) {
            return Err(NavError::Weights("need 0 < free_cost < unknown_cost < inf".into()));
        }
        if !(self.proximity_coeff >= 0.0 && self.proximity_coeff.is_finite()) {
            return Err(NavError::Weights("proximity_coeff must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Base cost of a cell; `None` for obstacles.
    pub fn base(&self, state: CellState) -> Option<f64> {
        match state {
            CellState::Free => Some(self.free_cost),
            CellState::Unknown => Some(self.unknown_cost),
            CellState::Obstacle => None,
        }
    }
}

/// Euclidean distance (cells) to the nearest obstacle, for cells within
/// `radius`; `None` beyond.
pub fn obstacle_distance(map: &OccupancyMap, radius: usize) -> Vec<Option<f64>> {
    let (w, h) = (map.width(), map.height());
    let mut out: Vec<Option<f64>> = vec![None; w * h];
    let r = radius as i64;
    let r2 = (radius * radius) as i64;
    for (i, s) in map.states().iter().enumerate() {
        if *s != CellState::Obstacle {
            continue;
        }
        let (ox, oy) = ((i % w) as i64, (i / w) as i64);
        for dy in -r..=r {
            let y = oy + dy;
            if y < 0 || y >= h as i64 {
                continue;
            }
            for dx in -r..=r {
                let x = ox + dx;
                let d2 = dx * dx + dy * dy;
                if x < 0 || x >= w as i64 || d2 > r2 {
                    continue;
                }
                let j = y as usize * w + x as usize;
                let d = (d2 as f64).sqrt();
                if out[j].is_none_or(|cur| d < cur) {
                    out[j] = Some(d);
                }
            }
        }
    }
    out
}

/// Cost of entering each cell (excluding the diagonal factor on the base).
#[derive(Clone, Debug)]
pub struct CostField {
    width: usize,
    height: usize,
    base: Vec<Option<f64>>,
    penalty: Vec<f64>,
}

impl CostField {
    pub fn new(map: &OccupancyMap, weights: &NavWeights) -> Self {
        let dt = obstacle_distance(map, weights.proximity_radius);
        let base = map.states().iter().map(|s| weights.base(*s)).collect();
        let penalty = dt
            .iter()
            .map(|d| match d {
                Some(d) if *d > 0.0 => weights.proximity_coeff / d,
                _ => 0.0,
            })
            .collect();
        Self {
            width: map.width(),
            height: map.height(),
            base,
            penalty,
        }
    }

    fn idx(&self, c: MapCell) -> usize {
        c.y * self.width + c.x
    }

    pub fn passable(&self, c: MapCell) -> bool {
        c.x < self.width && c.y < self.height && self.base[self.idx(c)].is_some()
    }

    /// Cost of moving from a neighbor into `to`, `diagonal` selecting the
    /// √2 step length.
    pub fn step_cost(&self, to: MapCell, diagonal: bool) -> Option<f64> {
        let i = self.idx(to);
        let len = if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
        self.base[i].map(|b| b * len + self.penalty[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavPath {
    pub waypoints: Vec<MapCell>,
    /// Cost accumulated up to each waypoint; first entry is 0.
    pub cumulative: Vec<f64>,
    pub total_cost: f64,
    pub computed_at: f64,
    /// Cells expanded by the search that produced this path (0 when reused).
    pub expansions: usize,
}

impl NavPath {
    pub fn goal(&self) -> Option<MapCell> {
        self.waypoints.last().copied()
    }

    /// Geometric length in cells.
    pub fn length_cells(&self) -> f64 {
        self.waypoints.windows(2).map(|w| cell_distance(w[0], w[1])).sum()
    }
}

pub fn cell_distance(a: MapCell, b: MapCell) -> f64 {
    let dx = a.x as f64 - b.x as f64;
    let dy = a.y as f64 - b.y as f64;
    (dx * dx + dy * dy).sqrt()
}

pub(crate) fn neighbors8(c: MapCell, w: usize, h: usize) -> impl Iterator<Item = (MapCell, bool)> {
    const D: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    D.iter().filter_map(move |&(dx, dy)| {
        let x = c.x as i64 + dx;
        let y = c.y as i64 + dy;
        (x >= 0 && y >= 0 && x < w as i64 && y < h as i64)
            .then(|| (MapCell::new(x as usize, y as usize), dx != 0 && dy != 0))
    })
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    idx: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&o.g))
            .then_with(|| o.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Minimum-cost path from `start` to `goal`.
pub fn plan(
    map: &OccupancyMap,
    start: MapCell,
    goal: MapCell,
    weights: &NavWeights,
    time: f64,
) -> Result<NavPath, NavError> {
    weights.validate()?;
    let field = CostField::new(map, weights);
    plan_with_field(&field, start, goal, weights, time)
}

pub fn plan_with_field(
    field: &CostField,
    start: MapCell,
    goal: MapCell,
    weights: &NavWeights,
    time: f64,
) -> Result<NavPath, NavError> {
    let (w, h) = (field.width, field.height);
    for c in [start, goal] {
        if c.x >= w || c.y >= h {
            return Err(NavError::OutOfBounds(c));
        }
    }
    if !field.passable(start) {
        return Err(NavError::StartBlocked(start));
    }
    let heur = |c: MapCell| cell_distance(c, goal) * weights.free_cost;
    let n = w * h;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let si = field.idx(start);
    g[si] = 0.0;
    open.push(Open {
        f: heur(start),
        g: 0.0,
        idx: si,
    });
    let mut expanded = 0;
    let mut closest = (heur(start), start);
    while let Some(Open { g: gc, idx, .. }) = open.pop() {
        if closed[idx] || gc > g[idx] {
            continue;
        }
        closed[idx] = true;
        expanded += 1;
        let cell = MapCell::new(idx % w, idx / w);
        let d = cell_distance(cell, goal);
        if d < closest.0 {
            closest = (d, cell);
        }
        if cell == goal {
            let mut rev = vec![idx];
            while parent[*rev.last().unwrap()] != usize::MAX {
                rev.push(parent[*rev.last().unwrap()]);
            }
            rev.reverse();
            let waypoints: Vec<MapCell> = rev.iter().map(|&i| MapCell::new(i % w, i / w)).collect();
            let cumulative: Vec<f64> = rev.iter().map(|&i| g[i]).collect();
            return Ok(NavPath {
                waypoints,
                cumulative,
                total_cost: g[idx],
                computed_at: time,
                expansions: expanded,
            });
        }
        for (nb, diag) in neighbors8(cell, w, h) {
            let ni = field.idx(nb);
            if closed[ni] {
                continue;
            }
            let Some(step) = field.step_cost(nb, diag) else {
                continue;
            };
            let cand = gc + step;
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = idx;
                open.push(Open {
                    f: cand + heur(nb),
                    g: cand,
                    idx: ni,
                });
            }
        }
    }
    Err(NavError::NoPath(FrontierSummary {
        expanded,
        closest: closest.1,
        closest_distance_cells: closest.0,
    }))
}

/// Reuse the remainder of `previous` when it still avoids obstacles on `map`,
/// otherwise plan again. The reused path starts at the remaining waypoint
/// nearest to `current`.
pub fn replan_or_reuse(
    previous: &NavPath,
    map: &OccupancyMap,
    current: MapCell,
    goal: MapCell,
    weights: &NavWeights,
    time: f64,
) -> Result<NavPath, NavError> {
    if previous.goal() == Some(goal) && !previous.waypoints.is_empty() {
        let (start_idx, _) = previous
            .waypoints
            .iter()
            .enumerate()
            .map(|(i, c)| (i, cell_distance(*c, current)))
            .fold((0, f64::INFINITY), |best, x| if x.1 < best.1 { x } else { best });
        let suffix = &previous.waypoints[start_idx..];
        let feasible = suffix
            .iter()
            .all(|c| map.contains(*c) && map.state(*c) != CellState::Obstacle);
        if feasible {
            let base = previous.cumulative.get(start_idx).copied().unwrap_or(0.0);
            return Ok(NavPath {
                waypoints: suffix.to_vec(),
                cumulative: previous.cumulative[start_idx..].iter().map(|c| c - base).collect(),
                total_cost: previous.total_cost - base,
                computed_at: previous.computed_at,
                expansions: 0,
            });
        }
    }
    plan(map, current, goal, weights, time)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommuteEstimate {
    pub seconds: f64,
    pub meters: f64,
    /// True when no path was found and the straight-line distance was used.
    pub straight_line: bool,
}

/// Walking time between two places' entrances along the planned path.
pub fn estimate_commute(
    map: &OccupancyMap,
    entrances: &BTreeMap<String, Point2>,
    from: &str,
    to: &str,
    walk_speed: f64,
    weights: &NavWeights,
) -> Result<CommuteEstimate, NavError> {
    let a = *entrances.get(from).ok_or_else(|| NavError::UnknownPlace(from.into()))?;
    let b = *entrances.get(to).ok_or_else(|| NavError::UnknownPlace(to.into()))?;
    if from == to {
        return Ok(CommuteEstimate {
            seconds: 0.0,
            meters: 0.0,
            straight_line: false,
        });
    }
    let straight = || {
        let m = distance(a, b);
        CommuteEstimate {
            seconds: m / walk_speed,
            meters: m,
            straight_line: true,
        }
    };
    let (Some(ca), Some(cb)) = (map.cell_at(a[0], a[1]), map.cell_at(b[0], b[1])) else {
        return Ok(straight());
    };
    match plan(map, ca, cb, weights, 0.0) {
        Ok(p) => {
            let m = p.length_cells() * map.resolution();
            Ok(CommuteEstimate {
                seconds: m / walk_speed,
                meters: m,
                straight_line: false,
            })
        }
        Err(NavError::Weights(e)) => Err(NavError::Weights(e)),
        Err(_) => Ok(straight()),
    }
}
