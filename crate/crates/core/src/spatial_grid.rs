//! Volume-grid layer and the occupancy map derived from it.
//!
//! Posed depth frames are back-projected into world space and binned into a
//! sparse 2.5D grid. Each cell keeps the lowest surface a person could stand
//! on; the occupancy map then marks a cell as an obstacle when its height
//! differs from a known 4-neighbor by more than the obstacle threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use nalgebra::{Isometry3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer cell coordinates `(ix, iy)` relative to the grid origin.
pub type CellIndex = (i64, i64);

pub const DEFAULT_BLOCK_SIZE: f64 = 0.5;
pub const DEFAULT_CELL_SIZE: f64 = 0.1;
pub const DEFAULT_OBSTACLE_THRESHOLD: f64 = 0.5;
/// Free vertical space a standing person needs above a surface.
pub const PERSON_CLEARANCE: f64 = 1.8;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("depth image is {depth_w}x{depth_h} but intrinsics expect {intr_w}x{intr_h}")]
    DimensionMismatch {
        depth_w: usize,
        depth_h: usize,
        intr_w: usize,
        intr_h: usize,
    },
    #[error("depth buffer holds {got} values, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("camera pose is not finite")]
    NonFinitePose,
    #[error("invalid grid geometry: {0}")]
    Geometry(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Pinhole camera intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Square-pixel camera with the given horizontal field of view.
    pub fn from_fov(width: usize, height: usize, horizontal_fov_deg: f64) -> Self {
        let fx = (width as f64 / 2.0) / (horizontal_fov_deg.to_radians() / 2.0).tan();
        Self {
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }
}

/// Row-major metric depth image. Non-positive or non-finite values are invalid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, depth: f32) {
        self.data[v * self.width + u] = depth;
    }
}

/// Camera-to-world pose for an optical frame (x right, y down, z forward)
/// in a z-up world, looking along `yaw` (radians from +x) and tilted down by
/// `pitch` radians.
pub fn camera_pose(position: Point3<f64>, yaw: f64, pitch: f64) -> Isometry3<f64> {
    let forward = Vector3::new(yaw.cos() * pitch.cos(), yaw.sin() * pitch.cos(), -pitch.sin());
    let right = Vector3::new(yaw.sin(), -yaw.cos(), 0.0);
    let down = forward.cross(&right);
    let rot = Rotation3::from_basis_unchecked(&[right, down, forward]);
    Isometry3::from_parts(
        Translation3::from(position.coords),
        UnitQuaternion::from_rotation_matrix(&rot),
    )
}

/// Back-project pixel `(u, v)` with z-depth `depth` into world coordinates.
pub fn back_project(pose: &Isometry3<f64>, intrinsics: &Intrinsics, u: usize, v: usize, depth: f64) -> Point3<f64> {
    let x = (u as f64 + 0.5 - intrinsics.cx) * depth / intrinsics.fx;
    let y = (v as f64 + 0.5 - intrinsics.cy) * depth / intrinsics.fy;
    pose * Point3::new(x, y, depth)
}

/// Observed surfaces inside one cell, bucketed by vertical bin. Each bin
/// keeps the lowest z seen in it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Column {
    surfaces: Vec<(i32, f64)>,
    height: f64,
}

impl Column {
    fn observe(&mut self, bin: i32, z: f64, clearance: f64) -> bool {
        match self.surfaces.binary_search_by_key(&bin, |s| s.0) {
            Ok(i) => {
                if z < self.surfaces[i].1 {
                    self.surfaces[i].1 = z;
                } else {
                    return false;
                }
            }
            Err(i) => self.surfaces.insert(i, (bin, z)),
        }
        self.height = standable_height(&self.surfaces, clearance);
        true
    }
}

/// Lowest surface with no other surface within `clearance` above it. The top
/// surface always qualifies, so every non-empty column has a height.
fn standable_height(surfaces: &[(i32, f64)], clearance: f64) -> f64 {
    for (i, &(_, z)) in surfaces.iter().enumerate() {
        if surfaces[i + 1..].iter().all(|&(_, above)| above - z > clearance) {
            return z;
        }
    }
    surfaces.last().map(|s| s.1).unwrap_or(f64::NAN)
}

/// Sparse 2.5D volume grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeGrid {
    origin: [f64; 2],
    block_size: f64,
    cell_size: f64,
    clearance: f64,
    #[serde(with = "crate::serde_pairs")]
    cells: BTreeMap<CellIndex, Column>,
}

impl Default for VolumeGrid {
    fn default() -> Self {
        Self::new([0.0, 0.0], DEFAULT_BLOCK_SIZE, DEFAULT_CELL_SIZE).expect("default geometry")
    }
}

impl VolumeGrid {
    pub fn new(origin: [f64; 2], block_size: f64, cell_size: f64) -> Result<Self, GridError> {
        if !(cell_size > 0.0 && block_size > 0.0) {
            return Err(GridError::Geometry("sizes must be positive".into()));
        }
        let ratio = block_size / cell_size;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(GridError::Geometry(format!(
                "block size {block_size} is not an integer multiple of cell size {cell_size}"
            )));
        }
        Ok(Self {
            origin,
            block_size,
            cell_size,
            clearance: PERSON_CLEARANCE,
            cells: BTreeMap::new(),
        })
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn block_size(&self) -> f64 {
        self.block_size
    }

    /// Number of cells per block edge.
    pub fn cells_per_block(&self) -> usize {
        (self.block_size / self.cell_size).round() as usize
    }

    pub fn known_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_of(&self, x: f64, y: f64) -> CellIndex {
        (
            ((x - self.origin[0]) / self.cell_size).floor() as i64,
            ((y - self.origin[1]) / self.cell_size).floor() as i64,
        )
    }

    pub fn cell_center(&self, cell: CellIndex) -> [f64; 2] {
        [
            self.origin[0] + (cell.0 as f64 + 0.5) * self.cell_size,
            self.origin[1] + (cell.1 as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Standable height of a cell, `None` if the cell is unknown.
    pub fn height(&self, cell: CellIndex) -> Option<f64> {
        self.cells.get(&cell).map(|c| c.height)
    }

    pub fn iter_heights(&self) -> impl Iterator<Item = (CellIndex, f64)> + '_ {
        self.cells.iter().map(|(k, c)| (*k, c.height))
    }

    /// Record a single world-space surface point. Returns true if the cell changed.
    pub fn observe_point(&mut self, p: Point3<f64>) -> bool {
        let cell = self.cell_of(p.x, p.y);
        let bin = (p.z / self.cell_size).floor() as i32;
        let clearance = self.clearance;
        self.cells.entry(cell).or_default().observe(bin, p.z, clearance)
    }

    /// Back-project every valid depth pixel and fold it into the grid.
    /// Returns the set of cells whose stored surfaces changed.
    pub fn integrate_depth_frame(
        &mut self,
        pose: &Isometry3<f64>,
        depth: &DepthImage,
        intrinsics: &Intrinsics,
    ) -> Result<BTreeSet<CellIndex>, GridError> {
        if depth.width != intrinsics.width || depth.height != intrinsics.height {
            return Err(GridError::DimensionMismatch {
                depth_w: depth.width,
                depth_h: depth.height,
                intr_w: intrinsics.width,
                intr_h: intrinsics.height,
            });
        }
        if depth.data.len() != depth.width * depth.height {
            return Err(GridError::BufferSize {
                got: depth.data.len(),
                expected: depth.width * depth.height,
            });
        }
        let finite =
            pose.translation.vector.iter().all(|v| v.is_finite()) && pose.rotation.coords.iter().all(|v| v.is_finite());
        if !finite {
            return Err(GridError::NonFinitePose);
        }
        let r = pose.rotation.to_rotation_matrix().into_inner();
        let r: [f64; 9] = r.transpose().as_slice().try_into().expect("3x3");
        let t = pose.translation.vector;
        let mut touched = BTreeSet::new();
        for v in 0..depth.height {
            for u in 0..depth.width {
                let d = depth.get(u, v);
                if !(d.is_finite() && d > 0.0) {
                    continue;
                }
                let d = d as f64;
                let x = (u as f64 + 0.5 - intrinsics.cx) * d / intrinsics.fx;
                let y = (v as f64 + 0.5 - intrinsics.cy) * d / intrinsics.fy;
                let p = Point3::new(
                    r[0] * x + r[1] * y + r[2] * d + t.x,
                    r[3] * x + r[4] * y + r[5] * d + t.y,
                    r[6] * x + r[7] * y + r[8] * d + t.z,
                );
                if self.observe_point(p) {
                    touched.insert(self.cell_of(p.x, p.y));
                }
            }
        }
        Ok(touched)
    }

    /// Inclusive bounding box of the known cells.
    pub fn known_bounds(&self) -> Option<CellBounds> {
        let mut iter = self.cells.keys();
        let first = iter.next()?;
        let mut b = CellBounds {
            min: *first,
            max: *first,
        };
        for &(x, y) in iter {
            b.min.0 = b.min.0.min(x);
            b.min.1 = b.min.1.min(y);
            b.max.0 = b.max.0.max(x);
            b.max.1 = b.max.1.max(y);
        }
        Some(b)
    }

    /// Cell bounds covering a world-space rectangle.
    pub fn bounds_for_extent(&self, min: [f64; 2], max: [f64; 2]) -> CellBounds {
        let lo = self.cell_of(min[0], min[1]);
        let hi = self.cell_of(max[0] - 1e-9, max[1] - 1e-9);
        CellBounds { min: lo, max: hi }
    }
}

/// Inclusive rectangle of cell indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBounds {
    pub min: CellIndex,
    pub max: CellIndex,
}

impl CellBounds {
    pub fn width(&self) -> usize {
        (self.max.0 - self.min.0 + 1).max(0) as usize
    }

    pub fn height(&self) -> usize {
        (self.max.1 - self.min.1 + 1).max(0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Obstacle,
}

/// Map cell coordinates (column, row), row 0 at the lowest y.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MapCell {
    pub x: usize,
    pub y: usize,
}

impl MapCell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Dense occupancy map over a rectangle of cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMap {
    origin: [f64; 2],
    resolution: f64,
    width: usize,
    height: usize,
    states: Vec<CellState>,
}

const NEIGHBORS4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn classify(grid: &VolumeGrid, cell: CellIndex, threshold: f64) -> CellState {
    let Some(h) = grid.height(cell) else {
        return CellState::Unknown;
    };
    let steep = NEIGHBORS4.iter().any(|&(dx, dy)| {
        grid.height((cell.0 + dx, cell.1 + dy))
            .is_some_and(|n| (h - n).abs() > threshold)
    });
    if steep {
        CellState::Obstacle
    } else {
        CellState::Free
    }
}

/// Derive the occupancy map over the bounding box of the known cells. An
/// empty grid yields an empty (all-Unknown, zero-size) map.
pub fn build_occupancy(grid: &VolumeGrid, threshold: f64) -> OccupancyMap {
    match grid.known_bounds() {
        Some(bounds) => build_occupancy_within(grid, threshold, bounds),
        None => OccupancyMap::unknown(grid.origin, grid.cell_size, 0, 0),
    }
}

/// Derive the occupancy map over fixed cell bounds.
pub fn build_occupancy_within(grid: &VolumeGrid, threshold: f64, bounds: CellBounds) -> OccupancyMap {
    let origin = [
        grid.origin[0] + bounds.min.0 as f64 * grid.cell_size,
        grid.origin[1] + bounds.min.1 as f64 * grid.cell_size,
    ];
    let mut map = OccupancyMap::unknown(origin, grid.cell_size, bounds.width(), bounds.height());
    for (cell, _) in grid.iter_heights() {
        if let Some(mc) = map.map_cell_of_index(grid, cell) {
            let s = classify(grid, cell, threshold);
            map.set(mc, s);
        }
    }
    map
}

/// Re-classify only the cells whose state can have changed after `touched`
/// cells were updated. The result equals a full rebuild over the same bounds.
/// Returns the map cells that were re-classified.
pub fn update_occupancy(
    map: &mut OccupancyMap,
    grid: &VolumeGrid,
    threshold: f64,
    touched: &BTreeSet<CellIndex>,
) -> BTreeSet<MapCell> {
    let mut dirty = BTreeSet::new();
    for &c in touched {
        dirty.insert(c);
        for (dx, dy) in NEIGHBORS4 {
            dirty.insert((c.0 + dx, c.1 + dy));
        }
    }
    let mut out = BTreeSet::new();
    for cell in dirty {
        if let Some(mc) = map.map_cell_of_index(grid, cell) {
            map.set(mc, classify(grid, cell, threshold));
            out.insert(mc);
        }
    }
    out
}

impl OccupancyMap {
    pub fn unknown(origin: [f64; 2], resolution: f64, width: usize, height: usize) -> Self {
        Self {
            origin,
            resolution,
            width,
            height,
            states: vec![CellState::Unknown; width * height],
        }
    }

    /// Build a map directly from a row-major state array (row 0 = lowest y).
    pub fn from_states(origin: [f64; 2], resolution: f64, width: usize, height: usize, states: Vec<CellState>) -> Self {
        assert_eq!(states.len(), width * height, "state array size");
        Self {
            origin,
            resolution,
            width,
            height,
            states,
        }
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn states(&self) -> &[CellState] {
        &self.states
    }

    pub fn contains(&self, cell: MapCell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn state(&self, cell: MapCell) -> CellState {
        if self.contains(cell) {
            self.states[cell.y * self.width + cell.x]
        } else {
            CellState::Unknown
        }
    }

    pub fn set(&mut self, cell: MapCell, state: CellState) {
        let w = self.width;
        self.states[cell.y * w + cell.x] = state;
    }

    pub fn count(&self, state: CellState) -> usize {
        self.states.iter().filter(|s| **s == state).count()
    }

    fn map_cell_of_index(&self, grid: &VolumeGrid, cell: CellIndex) -> Option<MapCell> {
        let c = grid.cell_center(cell);
        self.cell_at(c[0], c[1])
    }

    /// Map cell containing a world point, `None` when outside the map.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<MapCell> {
        let fx = ((x - self.origin[0]) / self.resolution).floor();
        let fy = ((y - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some(MapCell::new(fx as usize, fy as usize))
    }

    pub fn cell_center(&self, cell: MapCell) -> [f64; 2] {
        [
            self.origin[0] + (cell.x as f64 + 0.5) * self.resolution,
            self.origin[1] + (cell.y as f64 + 0.5) * self.resolution,
        ]
    }

    /// State of the cell containing a world point; out-of-bounds is Unknown.
    pub fn query_state(&self, x: f64, y: f64) -> CellState {
        self.cell_at(x, y).map(|c| self.state(c)).unwrap_or(CellState::Unknown)
    }

    /// Downsample by an integer factor: a coarse cell is Obstacle if any fine
    /// cell is, else Free if any is Free, else Unknown.
    pub fn coarsen(&self, factor: usize) -> OccupancyMap {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        let mut out = OccupancyMap::unknown(self.origin, self.resolution * factor as f64, w, h);
        for y in 0..self.height {
            for x in 0..self.width {
                let s = self.states[y * self.width + x];
                let c = MapCell::new(x / factor, y / factor);
                let cur = out.state(c);
                let merged = match (cur, s) {
                    (CellState::Obstacle, _) | (_, CellState::Obstacle) => CellState::Obstacle,
                    (CellState::Free, _) | (_, CellState::Free) => CellState::Free,
                    _ => CellState::Unknown,
                };
                out.set(c, merged);
            }
        }
        out
    }

    /// Refresh the cells of `coarse` (a `coarsen(factor)` of `self`) that
    /// cover any of the given fine cells.
    pub fn coarsen_into(&self, coarse: &mut OccupancyMap, factor: usize, fine_cells: &BTreeSet<MapCell>) {
        let blocks: BTreeSet<MapCell> = fine_cells
            .iter()
            .map(|c| MapCell::new(c.x / factor, c.y / factor))
            .collect();
        for b in blocks {
            if !coarse.contains(b) {
                continue;
            }
            let mut merged = CellState::Unknown;
            'block: for y in b.y * factor..((b.y + 1) * factor).min(self.height) {
                for x in b.x * factor..((b.x + 1) * factor).min(self.width) {
                    match self.states[y * self.width + x] {
                        CellState::Obstacle => {
                            merged = CellState::Obstacle;
                            break 'block;
                        }
                        CellState::Free => merged = CellState::Free,
                        CellState::Unknown => {}
                    }
                }
            }
            coarse.set(b, merged);
        }
    }

    /// Write the map as a binary PGM (top row = highest y) plus a JSON sidecar
    /// with the georeferencing.
    pub fn export(&self, pgm_path: &Path, sidecar_path: &Path) -> Result<(), GridError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(pgm_path)?);
        write!(f, "P5\n{} {}\n255\n", self.width, self.height)?;
        let mut row = Vec::with_capacity(self.width);
        for y in (0..self.height).rev() {
            row.clear();
            row.extend(
                self.states[y * self.width..(y + 1) * self.width]
                    .iter()
                    .map(|s| pixel_value(*s)),
            );
            f.write_all(&row)?;
        }
        f.flush()?;
        let meta = MapMetadata {
            origin: self.origin,
            resolution: self.resolution,
            width: self.width,
            height: self.height,
            row_order: "top_row_is_max_y".into(),
            obstacle_value: 0,
            unknown_value: 128,
            free_value: 255,
        };
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

pub fn pixel_value(state: CellState) -> u8 {
    match state {
        CellState::Obstacle => 0,
        CellState::Unknown => 128,
        CellState::Free => 255,
    }
}

/// Sidecar record written next to an exported occupancy image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub row_order: String,
    pub obstacle_value: u8,
    pub unknown_value: u8,
    pub free_value: u8,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_grid(n: i64, h: f64) -> VolumeGrid {
        let mut g = VolumeGrid::default();
        for x in 0..n {
            for y in 0..n {
                let c = g.cell_center((x, y));
                g.observe_point(Point3::new(c[0], c[1], h));
            }
        }
        g
    }

    #[test]
    fn block_must_be_multiple_of_cell() {
        assert!(VolumeGrid::new([0.0, 0.0], 0.5, 0.15).is_err());
        assert_eq!(VolumeGrid::new([0.0, 0.0], 0.5, 0.1).unwrap().cells_per_block(), 5);
    }

    #[test]
    fn empty_frame_leaves_grid_unchanged() {
        let mut g = VolumeGrid::default();
        let intr = Intrinsics::from_fov(8, 8, 90.0);
        let depth = DepthImage::new(8, 8);
        let pose = camera_pose(Point3::new(0.0, 0.0, 1.6), 0.0, 0.5);
        let touched = g.integrate_depth_frame(&pose, &depth, &intr).unwrap();
        assert!(touched.is_empty());
        assert!(g.is_empty());
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let mut g = VolumeGrid::default();
        let intr = Intrinsics::from_fov(8, 8, 90.0);
        let depth = DepthImage::new(4, 8);
        let pose = camera_pose(Point3::new(0.0, 0.0, 1.6), 0.0, 0.0);
        assert!(matches!(
            g.integrate_depth_frame(&pose, &depth, &intr),
            Err(GridError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn overhang_keeps_floor_height() {
        let mut g = VolumeGrid::default();
        g.observe_point(Point3::new(0.05, 0.05, 3.0));
        g.observe_point(Point3::new(0.05, 0.05, 0.0));
        assert_eq!(g.height((0, 0)), Some(0.0));
        // A ledge at 1 m removes the floor's headroom but has 2 m under the roof.
        g.observe_point(Point3::new(0.05, 0.05, 1.0));
        assert_eq!(g.height((0, 0)), Some(1.0));
        g.observe_point(Point3::new(0.05, 0.05, 2.0));
        assert_eq!(g.height((0, 0)), Some(3.0));
    }

    #[test]
    fn uniform_height_has_no_obstacles() {
        let map = build_occupancy(&flat_grid(10, 0.7), DEFAULT_OBSTACLE_THRESHOLD);
        assert_eq!(map.count(CellState::Obstacle), 0);
        assert_eq!(map.count(CellState::Free), 100);
    }

    #[test]
    fn empty_grid_gives_empty_map() {
        let map = build_occupancy(&VolumeGrid::default(), 0.5);
        assert_eq!(map.width(), 0);
        assert_eq!(map.query_state(1.0, 1.0), CellState::Unknown);
    }

    #[test]
    fn unknown_neighbors_do_not_fence() {
        let mut g = VolumeGrid::default();
        g.observe_point(Point3::new(0.05, 0.05, 0.0));
        g.observe_point(Point3::new(0.25, 0.05, 5.0));
        let map = build_occupancy(&g, 0.5);
        assert_eq!(map.query_state(0.05, 0.05), CellState::Free);
        assert_eq!(map.query_state(0.25, 0.05), CellState::Free);
        assert_eq!(map.query_state(0.15, 0.05), CellState::Unknown);
        assert_eq!(map.query_state(-3.0, 0.05), CellState::Unknown);
    }

    #[test]
    fn coarsen_prefers_obstacle_then_free() {
        use CellState::*;
        let m = OccupancyMap::from_states(
            [0.0, 0.0],
            0.1,
            4,
            2,
            vec![Unknown, Free, Unknown, Unknown, Unknown, Unknown, Obstacle, Free],
        );
        let c = m.coarsen(2);
        assert_eq!(c.width(), 2);
        assert_eq!(c.height(), 1);
        assert_eq!(c.states(), &[Free, Obstacle]);
        assert!((c.resolution() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn export_writes_pgm_and_sidecar() {
        use CellState::*;
        let dir = tempfile::tempdir().unwrap();
        let m = OccupancyMap::from_states([1.0, 2.0], 0.5, 2, 2, vec![Free, Obstacle, Unknown, Free]);
        let pgm = dir.path().join("map.pgm");
        let meta = dir.path().join("map.json");
        m.export(&pgm, &meta).unwrap();
        let bytes = std::fs::read(&pgm).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        // top row is y = 1
        assert_eq!(&bytes[header.len()..], &[128, 255, 255, 0]);
        let md: MapMetadata = serde_json::from_str(&std::fs::read_to_string(meta).unwrap()).unwrap();
        assert_eq!(md.origin, [1.0, 2.0]);
        assert_eq!(md.resolution, 0.5);
    }
}
