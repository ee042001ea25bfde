mod common;

use std::collections::BTreeSet;

use common::{oracle_occupancy, random_heightfield, Heightfield};
use lifemem::spatial_grid::{
    build_occupancy, build_occupancy_within, camera_pose, update_occupancy, CellState, DepthImage, Intrinsics, MapCell,
    OccupancyMap, VolumeGrid, DEFAULT_OBSTACLE_THRESHOLD, PERSON_CLEARANCE,
};
use nalgebra::Point3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CELL: f64 = 0.1;

fn grid_from(field: &Heightfield) -> VolumeGrid {
    let mut g = VolumeGrid::new([0.0, 0.0], 0.5, CELL).unwrap();
    for (x, col) in field.iter().enumerate() {
        for (y, cell) in col.iter().enumerate() {
            for &z in cell.iter().flatten() {
                g.observe_point(Point3::new((x as f64 + 0.5) * CELL, (y as f64 + 0.5) * CELL, z));
            }
        }
    }
    g
}

fn assert_matches(map: &OccupancyMap, want: &[Vec<CellState>]) -> Result<(), TestCaseError> {
    prop_assert_eq!(map.width(), want.len());
    prop_assert_eq!(map.height(), want[0].len());
    for (x, col) in want.iter().enumerate() {
        for (y, s) in col.iter().enumerate() {
            prop_assert_eq!(map.state(MapCell::new(x, y)), *s, "cell ({}, {})", x, y);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn occupancy_matches_neighbor_scan(seed in any::<u64>(), w in 2usize..40, h in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = random_heightfield(&mut rng, w, h);
        let map = build_occupancy(&grid_from(&field), DEFAULT_OBSTACLE_THRESHOLD);
        assert_matches(&map, &oracle_occupancy(&field, DEFAULT_OBSTACLE_THRESHOLD, PERSON_CLEARANCE))?;
    }

    #[test]
    fn incremental_update_equals_rebuild(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = random_heightfield(&mut rng, 24, 24);
        let mut grid = grid_from(&field);
        let bounds = grid.known_bounds().unwrap();
        let mut map = build_occupancy_within(&grid, DEFAULT_OBSTACLE_THRESHOLD, bounds);
        let mut touched = BTreeSet::new();
        for _ in 0..40 {
            let (x, y) = (rng.random_range(0..24), rng.random_range(0..24));
            let p = Point3::new((x as f64 + 0.5) * CELL, (y as f64 + 0.5) * CELL, rng.random_range(0..8) as f64 * 0.3);
            if grid.observe_point(p) {
                touched.insert(grid.cell_of(p.x, p.y));
            }
        }
        update_occupancy(&mut map, &grid, DEFAULT_OBSTACLE_THRESHOLD, &touched);
        prop_assert_eq!(map, build_occupancy_within(&grid, DEFAULT_OBSTACLE_THRESHOLD, bounds));
    }

    #[test]
    fn depth_integration_is_idempotent_and_monotone(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let intr = Intrinsics::from_fov(16, 12, 90.0);
        let mut grid = VolumeGrid::default();
        let mut known = 0;
        for _ in 0..3 {
            let pose = camera_pose(
                Point3::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), 1.6),
                rng.random_range(-3.0..3.0),
                0.3,
            );
            let mut depth = DepthImage::new(16, 12);
            for v in 0..12 {
                for u in 0..16 {
                    if rng.random_bool(0.8) {
                        depth.set(u, v, rng.random_range(0.5f32..8.0));
                    }
                }
            }
            grid.integrate_depth_frame(&pose, &depth, &intr).unwrap();
            let once = grid.clone();
            let again = grid.integrate_depth_frame(&pose, &depth, &intr).unwrap();
            prop_assert!(again.is_empty());
            prop_assert_eq!(&grid, &once);
            prop_assert!(grid.known_cells() >= known);
            known = grid.known_cells();
        }
    }
}

#[test]
fn step_edge_is_obstacle_on_both_sides() {
    // 1 m step between columns 4 and 5 of a 10 x 3 strip
    let field: Heightfield = (0..10)
        .map(|x| (0..3).map(|_| Some(vec![if x < 5 { 0.0 } else { 1.0 }])).collect())
        .collect();
    let map = build_occupancy(&grid_from(&field), DEFAULT_OBSTACLE_THRESHOLD);
    for y in 0..3 {
        for x in 0..10 {
            let want = if x == 4 || x == 5 {
                CellState::Obstacle
            } else {
                CellState::Free
            };
            assert_eq!(map.state(MapCell::new(x, y)), want);
        }
    }
    assert_eq!(map.query_state(0.05, 0.05), CellState::Free);
    assert_eq!(map.query_state(0.45, 0.05), CellState::Obstacle);
    assert_eq!(map.query_state(50.0, 50.0), CellState::Unknown);
}

#[test]
fn low_roof_lifts_the_standable_height() {
    // ground at 0 with a roof 1 m above: a person cannot stand there, so the
    // roof is the standable surface and the cell walls off its neighbours
    let mut field: Heightfield = vec![vec![Some(vec![0.0]); 3]; 3];
    field[1][1] = Some(vec![0.0, 1.0]);
    let map = build_occupancy(&grid_from(&field), DEFAULT_OBSTACLE_THRESHOLD);
    assert_eq!(map.state(MapCell::new(1, 1)), CellState::Obstacle);
    assert_eq!(map.state(MapCell::new(0, 0)), CellState::Free);
    // a 2.5 m canopy leaves room underneath
    field[1][1] = Some(vec![0.0, 2.5]);
    let map = build_occupancy(&grid_from(&field), DEFAULT_OBSTACLE_THRESHOLD);
    assert_eq!(map.count(CellState::Obstacle), 0);
}

#[test]
fn coarsening_prefers_obstacle_then_free() {
    use CellState::*;
    let states = vec![
        Unknown, Obstacle, Unknown, Free, Unknown, Unknown, //
        Free, Free, Unknown, Unknown, Unknown, Unknown,
    ];
    let fine = OccupancyMap::from_states([0.0, 0.0], 0.1, 6, 2, states);
    let coarse = fine.coarsen(2);
    assert_eq!((coarse.width(), coarse.height()), (3, 1));
    assert_eq!(coarse.states(), &[Obstacle, Free, Unknown]);
}
