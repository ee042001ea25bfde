mod common;

use common::{close, oracle_dijkstra, oracle_dijkstra_avoiding, random_states};
use lifemem::navigation::{plan, replan_or_reuse, NavError, NavPath, NavWeights};
use lifemem::spatial_grid::{CellState, MapCell, OccupancyMap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn map(states: Vec<CellState>, w: usize, h: usize) -> OccupancyMap {
    OccupancyMap::from_states([0.0, 0.0], 1.0, w, h, states)
}

fn check_path(m: &OccupancyMap, p: &NavPath, start: MapCell, goal: MapCell) -> Result<(), TestCaseError> {
    prop_assert_eq!(p.waypoints.first().copied(), Some(start));
    prop_assert_eq!(p.waypoints.last().copied(), Some(goal));
    for c in &p.waypoints {
        prop_assert_ne!(m.state(*c), CellState::Obstacle);
    }
    for w in p.waypoints.windows(2) {
        let (dx, dy) = (w[0].x.abs_diff(w[1].x), w[0].y.abs_diff(w[1].y));
        prop_assert!(dx <= 1 && dy <= 1 && dx + dy > 0);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn astar_cost_equals_dijkstra(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (32, 32);
        let states = random_states(&mut rng, w, h, 0.2, 0.1);
        let m = map(states.clone(), w, h);
        let start = MapCell::new(rng.random_range(0..w), rng.random_range(0..h));
        let goal = MapCell::new(rng.random_range(0..w), rng.random_range(0..h));
        let want = oracle_dijkstra(&states, w, h, (start.x, start.y), (goal.x, goal.y));
        match (plan(&m, start, goal, &NavWeights::default(), 0.0), want) {
            (Ok(p), Some(c)) => {
                prop_assert!(close(p.total_cost, c), "planner {} vs oracle {}", p.total_cost, c);
                check_path(&m, &p, start, goal)?;
            }
            (Err(NavError::NoPath(_)) | Err(NavError::StartBlocked(_)), None) => {}
            (got, want) => prop_assert!(false, "planner {:?} vs oracle {:?}", got.map(|p| p.total_cost), want),
        }
    }

    #[test]
    fn unchanged_map_reuses_the_previous_path(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = random_states(&mut rng, 24, 24, 0.1, 0.0);
        let m = map(states, 24, 24);
        let start = MapCell::new(0, 0);
        let goal = MapCell::new(23, 23);
        let Ok(first) = plan(&m, start, goal, &NavWeights::default(), 0.0) else { return Ok(()) };
        let mid = first.waypoints[first.waypoints.len() / 2];
        let again = replan_or_reuse(&first, &m, mid, goal, &NavWeights::default(), 5.0).unwrap();
        prop_assert_eq!(again.expansions, 0);
        prop_assert_eq!(again.waypoints.first().copied(), Some(mid));
        prop_assert_eq!(again.computed_at, 0.0);
    }
}

#[test]
fn open_field_corner_to_corner() {
    let m = map(vec![CellState::Free; 100], 10, 10);
    let p = plan(&m, MapCell::new(0, 0), MapCell::new(9, 9), &NavWeights::default(), 0.0).unwrap();
    assert!((p.total_cost - 9.0 * 2f64.sqrt()).abs() < 1e-9);
    assert_eq!(p.waypoints.len(), 10);
}

#[test]
fn blocked_path_triggers_a_new_search() {
    let mut m = map(vec![CellState::Free; 100], 10, 10);
    let first = plan(&m, MapCell::new(0, 5), MapCell::new(9, 5), &NavWeights::default(), 0.0).unwrap();
    let on_path = first.waypoints[5];
    m.set(on_path, CellState::Obstacle);
    let again = replan_or_reuse(
        &first,
        &m,
        MapCell::new(0, 5),
        MapCell::new(9, 5),
        &NavWeights::default(),
        3.0,
    )
    .unwrap();
    assert!(again.expansions > 0);
    assert!(!again.waypoints.contains(&on_path));
    assert_eq!(again.computed_at, 3.0);
}

/// A 5-cell-thick wall across the map with a 1-cell slot straight between
/// start and goal and a 3-cell gap further along.
fn slot_and_gap() -> (OccupancyMap, MapCell, MapCell) {
    let (w, h) = (40, 21);
    let mut states = vec![CellState::Free; w * h];
    for y in 8..13 {
        for x in 0..w {
            let slot = x == 10;
            let gap = (15..18).contains(&x);
            if !slot && !gap {
                states[y * w + x] = CellState::Obstacle;
            }
        }
    }
    (map(states, w, h), MapCell::new(10, 0), MapCell::new(10, 20))
}

fn through_slot(p: &NavPath) -> bool {
    p.waypoints.iter().any(|c| c.x == 10 && c.y == 10)
}

#[test]
fn proximity_penalty_prefers_the_wide_gap() {
    let (m, start, goal) = slot_and_gap();
    let (w, h) = (m.width(), m.height());
    let states = m.states();
    // best cost through the slot only, and through the gap only, on the same cost field
    let in_wall = |y: usize| (8..13).contains(&y);
    let slot_cost = oracle_dijkstra_avoiding(states, w, h, (start.x, start.y), (goal.x, goal.y), &|x, y| {
        in_wall(y) && x != 10
    })
    .unwrap();
    let gap_cost = oracle_dijkstra_avoiding(states, w, h, (start.x, start.y), (goal.x, goal.y), &|x, y| {
        in_wall(y) && x == 10
    })
    .unwrap();
    assert!(gap_cost < slot_cost, "gap {gap_cost} vs slot {slot_cost}");

    let p = plan(&m, start, goal, &NavWeights::default(), 0.0).unwrap();
    assert!(!through_slot(&p));
    assert!(close(p.total_cost, gap_cost));

    // without the penalty the short slot wins
    let flat = NavWeights {
        proximity_coeff: 0.0,
        ..NavWeights::default()
    };
    let p = plan(&m, start, goal, &flat, 0.0).unwrap();
    assert!(through_slot(&p));
    assert!((p.total_cost - 20.0).abs() < 1e-9);
}
