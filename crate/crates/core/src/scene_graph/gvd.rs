use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::BuildingNode;
use crate::geometry::{bounds, point_in_polygon};
use crate::spatial_grid::{CellState, MapCell, OccupancyMap};

/// A diagram cell and the buildings whose wavefronts meet there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GvdPoint {
    pub cell: MapCell,
    /// `(building index, distance in metres)`, nearest first.
    pub nearest: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GvdMap {
    pub resolution: f64,
    pub points: Vec<GvdPoint>,
}

const STEPS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Cells seeding a building's wavefront: every map cell whose centre lies in
/// the footprint, or the cell under the footprint centroid for footprints
/// smaller than a cell.
pub(crate) fn footprint_cells(map: &OccupancyMap, b: &BuildingNode) -> Vec<MapCell> {
    let (lo, hi) = bounds(&b.footprint);
    let mut cells = Vec::new();
    if let (Some(c0), Some(c1)) = (clamp_cell(map, lo), clamp_cell(map, hi)) {
        for y in c0.y..=c1.y {
            for x in c0.x..=c1.x {
                let c = MapCell::new(x, y);
                if point_in_polygon(map.cell_center(c), &b.footprint) {
                    cells.push(c);
                }
            }
        }
    }
    if cells.is_empty() {
        if let Some(c) = map.cell_at(b.centroid[0], b.centroid[1]) {
            cells.push(c);
        }
    }
    cells
}

fn clamp_cell(map: &OccupancyMap, p: [f64; 2]) -> Option<MapCell> {
    if map.width() == 0 || map.height() == 0 {
        return None;
    }
    let r = map.resolution();
    let o = map.origin();
    let fx = ((p[0] - o[0]) / r).floor().clamp(0.0, (map.width() - 1) as f64);
    let fy = ((p[1] - o[1]) / r).floor().clamp(0.0, (map.height() - 1) as f64);
    Some(MapCell::new(fx as usize, fy as usize))
}

/// Generalized Voronoi diagram by multi-source breadth-first expansion over
/// Free cells. Each cell accepts the first arrival from up to `max_labels`
/// distinct buildings; a Free cell is on the diagram when at least two
/// buildings arrive within one step of the nearest.
pub fn compute_gvd(map: &OccupancyMap, buildings: &[BuildingNode]) -> GvdMap {
    let mut out = GvdMap {
        resolution: map.resolution(),
        points: Vec::new(),
    };
    if buildings.len() < 2 || map.count(CellState::Free) == 0 {
        return out;
    }
    let max_labels = buildings.len().min(4);
    let w = map.width();
    let n = w * map.height();
    // per cell: (building, steps) in arrival order
    let mut labels: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n];
    let mut queue = VecDeque::new();
    for (bi, b) in buildings.iter().enumerate() {
        for c in footprint_cells(map, b) {
            let idx = c.y * w + c.x;
            if labels[idx].len() < max_labels && labels[idx].iter().all(|l| l.0 != bi) {
                labels[idx].push((bi, 0));
                queue.push_back((c, bi, 0u32));
            }
        }
    }
    while let Some((c, bi, d)) = queue.pop_front() {
        for (dx, dy) in STEPS {
            let nx = c.x as isize + dx;
            let ny = c.y as isize + dy;
            if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= map.height() {
                continue;
            }
            let nc = MapCell::new(nx as usize, ny as usize);
            if map.state(nc) != CellState::Free {
                continue;
            }
            let idx = nc.y * w + nc.x;
            let slot = &mut labels[idx];
            if slot.len() >= max_labels || slot.iter().any(|l| l.0 == bi) {
                continue;
            }
            slot.push((bi, d + 1));
            queue.push_back((nc, bi, d + 1));
        }
    }
    let res = map.resolution();
    for y in 0..map.height() {
        for x in 0..w {
            let c = MapCell::new(x, y);
            if map.state(c) != CellState::Free {
                continue;
            }
            let slot = &labels[y * w + x];
            let Some(best) = slot.iter().map(|l| l.1).min() else {
                continue;
            };
            if slot.iter().any(|l| l.1 == 0) {
                continue;
            }
            let mut near: Vec<(usize, u32)> = slot.iter().copied().filter(|l| l.1 <= best + 1).collect();
            if near.len() < 2 {
                continue;
            }
            near.sort_by_key(|l| (l.1, l.0));
            out.points.push(GvdPoint {
                cell: c,
                nearest: near.into_iter().map(|(b, d)| (b, d as f64 * res)).collect(),
            });
        }
    }
    out
}
