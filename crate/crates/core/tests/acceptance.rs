//! Acceptance runner. One line per criterion; exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::{
    close, commute_table, oracle_dijkstra, oracle_occupancy, oracle_retrieve, oracle_schedule_ok, random_heightfield,
    random_raw_schedule, random_states, random_store, small_vec, Heightfield,
};
use lifemem::action::Action;
use lifemem::agent::{repair, AgentContext};
use lifemem::episodic::{MemoryQuery, RetrievalConfig};
use lifemem::features::{cosine, normalize};
use lifemem::geometry::{distance, point_in_polygon, rectangle};
use lifemem::navigation::{plan, NavError, NavWeights};
use lifemem::providers::{HashEmbedder, ScriptedReasoner};
use lifemem::scene_graph::{
    build_region_layer, compute_gvd, spectral_partition, BuildingNode, DetectionCandidate, Mask, SceneGraph,
    SceneGraphConfig,
};
use lifemem::sim::growth::growth_series;
use lifemem::sim::scenarios::canned;
use lifemem::sim::{run_scenario, RunSummary, Trace, World, WorldConfig};
use lifemem::spatial_grid::{
    build_occupancy, CellState, MapCell, OccupancyMap, VolumeGrid, DEFAULT_OBSTACLE_THRESHOLD, PERSON_CLEARANCE,
};
use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// 1
fn retrieval_oracle() -> Outcome {
    let t0 = Instant::now();
    let cfg = RetrievalConfig::default();
    let mut r = rng(1);
    let mut queries = 0;
    for store_no in 0..100 {
        let n = r.random_range(0..=200);
        let (mut store, mut mirror, mut t) = random_store(&mut r, n);
        for _ in 0..5 {
            t += r.random_range(0..2000) as f64;
            let q = MemoryQuery {
                time: t,
                location: [r.random_range(0..5) as f64, r.random_range(0..5) as f64, 0.0],
                text: "q".into(),
                text_feature: small_vec(&mut r, 4),
                image_feature: r.random_bool(0.5).then(|| small_vec(&mut r, 3)),
                k: r.random_range(1..12),
            };
            let got: Vec<u64> = store
                .retrieve(&q, &cfg)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|s| s.event.id)
                .collect();
            let want = oracle_retrieve(
                &mut mirror,
                q.time,
                q.location,
                &q.text_feature,
                q.image_feature.as_deref(),
                q.k,
                cfg.epsilon,
                cfg.recency_tau,
            );
            ensure!(got == want, "store {store_no}: got {got:?}, oracle {want:?}");
            queries += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1} s");
    Ok(format!("100 stores, {queries} queries, {secs:.2} s"))
}

// 2
fn grid_from(field: &Heightfield, cell: f64) -> VolumeGrid {
    let mut g = VolumeGrid::new([0.0, 0.0], 0.5, cell).expect("valid grid");
    for (x, col) in field.iter().enumerate() {
        for (y, c) in col.iter().enumerate() {
            for &z in c.iter().flatten() {
                g.observe_point(Point3::new((x as f64 + 0.5) * cell, (y as f64 + 0.5) * cell, z));
            }
        }
    }
    g
}

fn occupancy() -> Outcome {
    let mut r = rng(2);
    for i in 0..50 {
        let field = random_heightfield(&mut r, 64, 64);
        let map = build_occupancy(&grid_from(&field, 0.1), DEFAULT_OBSTACLE_THRESHOLD);
        let want = oracle_occupancy(&field, DEFAULT_OBSTACLE_THRESHOLD, PERSON_CLEARANCE);
        ensure!(
            (map.width(), map.height()) == (64, 64),
            "field {i}: map is {}x{}",
            map.width(),
            map.height()
        );
        for (x, col) in want.iter().enumerate() {
            for (y, s) in col.iter().enumerate() {
                let got = map.state(MapCell::new(x, y));
                ensure!(got == *s, "field {i} cell ({x}, {y}): {got:?} vs oracle {s:?}");
            }
        }
    }
    Ok("50 fields of 64x64 match cell for cell".into())
}

// 3
fn astar() -> Outcome {
    let mut r = rng(3);
    let (w, h) = (32, 32);
    let (mut solved, mut unreachable) = (0, 0);
    for i in 0..100 {
        let states = random_states(&mut r, w, h, 0.2, 0.0);
        let m = OccupancyMap::from_states([0.0, 0.0], 1.0, w, h, states.clone());
        let free: Vec<usize> = (0..w * h).filter(|&i| states[i] != CellState::Obstacle).collect();
        let mut pick = || {
            let i = free[r.random_range(0..free.len())];
            MapCell::new(i % w, i / w)
        };
        let (start, goal) = (pick(), pick());
        let want = oracle_dijkstra(&states, w, h, (start.x, start.y), (goal.x, goal.y));
        match (plan(&m, start, goal, &NavWeights::default(), 0.0), want) {
            (Ok(p), Some(c)) => {
                ensure!(close(p.total_cost, c), "map {i}: cost {} vs oracle {c}", p.total_cost);
                ensure!(
                    p.waypoints.iter().all(|c| m.state(*c) != CellState::Obstacle),
                    "map {i}: waypoint on an obstacle"
                );
                ensure!(
                    p.waypoints.first() == Some(&start) && p.waypoints.last() == Some(&goal),
                    "map {i}: path does not join start and goal"
                );
                solved += 1;
            }
            (Err(NavError::NoPath(_) | NavError::StartBlocked(_)), None) => unreachable += 1,
            (got, want) => {
                return Err(format!(
                    "map {i}: planner {:?} vs oracle {want:?}",
                    got.map(|p| p.total_cost)
                ))
            }
        }
    }
    Ok(format!("{solved} optimal paths, {unreachable} agreed unreachable"))
}

// 4
fn lattice(n: usize, side: usize, spacing: f64, offset: [f64; 2], prefix: &str) -> Vec<BuildingNode> {
    (0..n)
        .map(|i| {
            let x0 = offset[0] + (i % side) as f64 * spacing;
            let y0 = offset[1] + (i / side) as f64 * spacing;
            BuildingNode::new(
                format!("{prefix}{i}"),
                "office",
                rectangle([x0, y0], [x0 + 4.0, y0 + 4.0]),
            )
        })
        .collect()
}

fn map_with(buildings: &[BuildingNode], w: usize, h: usize) -> OccupancyMap {
    let states = (0..w * h)
        .map(|i| {
            let p = [(i % w) as f64 + 0.5, (i / w) as f64 + 0.5];
            if buildings.iter().any(|b| point_in_polygon(p, &b.footprint)) {
                CellState::Obstacle
            } else {
                CellState::Free
            }
        })
        .collect();
    OccupancyMap::from_states([0.0, 0.0], 1.0, w, h, states)
}

fn regions() -> Outcome {
    let mut counts = Vec::new();
    for (n, side) in [(1, 1), (4, 2), (9, 3), (16, 4)] {
        let b = lattice(n, side, 12.0, [4.0, 4.0], "b");
        let layer = build_region_layer(&compute_gvd(&map_with(&b, 60, 60), &b), &b);
        let want = ((n as f64).sqrt().round() as usize).max(1);
        ensure!(
            layer.regions.len() == want,
            "|B| = {n}: {} regions, want {want}",
            layer.regions.len()
        );
        counts.push(layer.regions.len());
    }
    let mut b = lattice(2, 2, 8.0, [4.0, 4.0], "b");
    b.extend(lattice(2, 2, 8.0, [70.0, 4.0], "c"));
    let layer = build_region_layer(&compute_gvd(&map_with(&b, 90, 20), &b), &b);
    let labels = spectral_partition(&layer.adjacency, 4, 2);
    ensure!(
        labels[0] == labels[1] && labels[2] == labels[3] && labels[0] != labels[2],
        "two clusters labelled {labels:?}"
    );
    Ok(format!("counts {counts:?}, clusters split {labels:?}"))
}

// 5
fn unit(r: &mut impl Rng, dim: usize) -> Vec<f64> {
    normalize((0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
}

fn candidate(tag: &str, cloud: Vec<[f64; 3]>, feature: Vec<f64>, dynamic: bool) -> DetectionCandidate {
    DetectionCandidate {
        mask: Mask {
            width: 1,
            height: 1,
            bits: vec![true],
        },
        tag: tag.into(),
        point_cloud: cloud,
        visual_feature: feature,
        dynamic,
    }
}

fn scene_graph() -> Outcome {
    let mut r = rng(5);
    let n = 6;
    let objects: Vec<([f64; 3], Vec<f64>)> = (0..n)
        .map(|i| ([i as f64 * 5.0, r.random_range(0.0..3.0), 0.5], unit(&mut r, 16)))
        .collect();
    let mut frames = Vec::new();
    for _ in 0..20 {
        let mut frame = Vec::new();
        for (i, (c, f)) in objects.iter().enumerate() {
            if !r.random_bool(0.7) {
                continue;
            }
            let cloud = (0..60)
                .map(|_| {
                    [
                        c[0] + r.random_range(-0.5..0.5),
                        c[1] + r.random_range(-0.5..0.5),
                        c[2] + r.random_range(-0.5..0.5),
                    ]
                })
                .collect();
            let feature = normalize(f.iter().map(|x| x + r.random_range(-0.02..0.02)).collect());
            frame.push(candidate(&format!("thing{i}"), cloud, feature, false));
        }
        frames.push(frame);
    }
    let mut g = SceneGraph::new(SceneGraphConfig::default());
    for (t, f) in frames.iter().enumerate() {
        g.ingest_detections(f, t as f64);
    }
    let first: BTreeSet<u64> = g.objects().map(|o| o.id).collect();
    let seen: BTreeSet<&str> = frames.iter().flatten().map(|c| c.tag.as_str()).collect();
    ensure!(
        first.len() == seen.len(),
        "{} objects for {} distinct things",
        first.len(),
        seen.len()
    );
    for (t, f) in frames.iter().enumerate() {
        g.ingest_detections(f, 100.0 + t as f64);
    }
    let second: BTreeSet<u64> = g.objects().map(|o| o.id).collect();
    ensure!(first == second, "second pass changed the object set");

    let mut g = SceneGraph::new(SceneGraphConfig::default());
    let looks = [unit(&mut r, 16), unit(&mut r, 16)];
    let paths = [
        [[0.0, 0.0, 0.9], [1.0, 0.0, 0.9], [2.0, 0.0, 0.9]],
        [[0.0, 3.0, 0.9], [0.0, 2.0, 0.9], [0.0, 1.0, 0.9]],
    ];
    let mut tracks: [Vec<[f64; 3]>; 2] = [Vec::new(), Vec::new()];
    let mut ids = [None, None];
    for step in 0..3 {
        let order = if step % 2 == 0 { [0, 1] } else { [1, 0] };
        let frame: Vec<_> = order
            .iter()
            .map(|&a| candidate("person", vec![paths[a][step]], looks[a].clone(), true))
            .collect();
        g.ingest_detections(&frame, step as f64);
        for a in 0..2 {
            let node = g
                .objects()
                .filter(|o| o.dynamic)
                .max_by(|x, y| cosine(&x.visual_feature, &looks[a]).total_cmp(&cosine(&y.visual_feature, &looks[a])))
                .ok_or("no dynamic node")?;
            ensure!(
                ids[a].is_none_or(|id| id == node.id),
                "agent {a} changed identity at step {step}"
            );
            ids[a] = Some(node.id);
            tracks[a].push(node.location);
        }
    }
    let dynamic = g.objects().filter(|o| o.dynamic).count();
    ensure!(dynamic == 2 && ids[0] != ids[1], "{dynamic} dynamic nodes");
    for a in 0..2 {
        ensure!(tracks[a] == paths[a], "agent {a} track {:?}", tracks[a]);
    }
    Ok(format!(
        "{} static objects stable over 40 frames, 2 dynamic tracks",
        first.len()
    ))
}

// 6
fn memory_growth(dir: &Path) -> Outcome {
    let (cfg, policy) = canned("town_day").map_err(|e| e.to_string())?;
    let summary = run(&cfg, policy, dir)?;
    let trace = Trace::read(&summary.trace).map_err(|e| e.to_string())?;
    let rows = growth_series(&trace);
    ensure!(rows.len() == 600, "{} ticks", rows.len());
    ensure!(
        rows.iter().all(|r| r.per_agent.len() == 3),
        "missing agents in some tick"
    );
    for w in rows.windows(2) {
        for (name, now) in &w[1].per_agent {
            let before = w[0].per_agent[name];
            ensure!(
                now.0 >= before.0 && now.1 >= before.1,
                "{name} shrank at t = {}: {before:?} -> {now:?}",
                w[1].time
            );
        }
    }
    let (a, b) = (&rows[0], &rows[rows.len() - 1]);
    ensure!(
        b.episodic_total() > a.episodic_total() && b.semantic_total() > a.semantic_total(),
        "no growth: {}/{} -> {}/{}",
        a.episodic_total(),
        a.semantic_total(),
        b.episodic_total(),
        b.semantic_total()
    );
    let prefix = dir.join("growth");
    let status = Command::new(env!("CARGO_BIN_EXE_lifemem"))
        .arg("plot-growth")
        .arg(&summary.trace)
        .arg("--out")
        .arg(&prefix)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        status.status.success(),
        "plot-growth failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    let csv = std::fs::read_to_string(prefix.with_extension("csv")).map_err(|e| e.to_string())?;
    ensure!(csv.lines().count() == 601, "csv has {} lines", csv.lines().count());
    let png = std::fs::metadata(prefix.with_extension("png")).map_err(|e| e.to_string())?;
    ensure!(png.len() > 0, "empty png");
    Ok(format!(
        "episodic {} -> {}, semantic {} -> {}, curves written",
        a.episodic_total(),
        b.episodic_total(),
        a.semantic_total(),
        b.semantic_total()
    ))
}

// 7
const OPEN: &str = r#"
name = "open"
seed = 11
[map]
min = [0.0, 0.0]
max = [40.0, 40.0]
[camera]
width = 8
height = 6
max_range = 8.0
[tuning]
cell_size = 0.25
block_size = 0.5
[[agents]]
name = "Ada"
position = [5.0, 5.0]
[[agents]]
name = "Bo"
position = [10.0, 5.0]
[[agents]]
name = "Cy"
position = [5.0, 12.0]
"#;

fn message_locality() -> Outcome {
    let emb = HashEmbedder::default();
    let cfg = WorldConfig::from_toml(OPEN).map_err(|e| e.to_string())?;
    let mut r = rng(7);
    let (mut heard, mut missed) = (0, 0);
    for trial in 0..1000 {
        let mut w = World::new(cfg.clone(), &emb, 0.0).map_err(|e| e.to_string())?;
        for b in w.bodies.values_mut() {
            b.pose.position = [r.random_range(0.0..25.0), r.random_range(0.0..25.0), 0.0];
        }
        let pre = w.positions();
        let range = r.random_range(0.0..15.0);
        let msg = Action::Converse {
            conversation: format!("c{trial}"),
            to: vec![],
            message: "hello".into(),
            range,
        };
        w.apply_actions("Ada", &[msg], &pre).map_err(|e| e.to_string())?;
        let cap = range.min(10.0);
        for name in ["Bo", "Cy"] {
            let d = distance(pre["Ada"], pre[name]);
            let got = w.inbox.get(name).is_some_and(|m| !m.is_empty());
            ensure!(
                got == (d <= cap),
                "trial {trial}: {name} at {d:.2} m, range {range:.2}, heard {got}"
            );
            if got {
                heard += 1;
            } else {
                missed += 1;
            }
        }
    }
    Ok(format!("1000 trials, {heard} in range, {missed} out of range"))
}

// 8, 9, 11
fn run(cfg: &WorldConfig, policy: lifemem::providers::ScriptedPolicy, dir: &Path) -> Result<RunSummary, String> {
    let emb = HashEmbedder::default();
    let reasoner = ScriptedReasoner::new(policy);
    let ctx = AgentContext {
        reasoner: &reasoner,
        embedder: &emb,
    };
    run_scenario(cfg, dir, ctx).map_err(|e| e.to_string())
}

fn same_files(a: &[std::path::PathBuf], b: &[std::path::PathBuf]) -> Result<(), String> {
    ensure!(a.len() == b.len(), "{} vs {} files", a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        let (bx, by) = (
            std::fs::read(x).map_err(|e| e.to_string())?,
            std::fs::read(y).map_err(|e| e.to_string())?,
        );
        ensure!(bx == by, "{} differs from {}", x.display(), y.display());
    }
    Ok(())
}

fn influence_battle(dir: &Path) -> Outcome {
    let (cfg, policy) = canned("influence_battle").map_err(|e| e.to_string())?;
    let a = run(&cfg, policy.clone(), &dir.join("a"))?;
    let b = run(&cfg, policy, &dir.join("b"))?;
    let eval = a.eval.clone().ok_or("no evaluation")?;
    // each organizer reaches one neighbour, Cora never hears of either party
    ensure!(eval.show_up_rate == Some(0.8), "show-up {:?}", eval.show_up_rate);
    ensure!(
        eval.conversation_count == 2,
        "{} conversations",
        eval.conversation_count
    );
    same_files(&[a.trace], &[b.trace])?;
    Ok(format!(
        "show-up 0.8 ({:?}), 2 conversations, traces identical",
        eval.attendance
    ))
}

fn leadership_quest(dir: &Path) -> Result<(String, RunSummary), String> {
    let (cfg, policy) = canned("leadership_quest").map_err(|e| e.to_string())?;
    // run_scenario checks item conservation after every tick and aborts on a violation
    let s = run(&cfg, policy, dir)?;
    let eval = s.eval.clone().ok_or("no evaluation")?;
    // Plaza Crew gets the apple but loses the last loaf to the Hall Crew
    ensure!(
        eval.completion_rate == Some(0.75),
        "completion {:?}",
        eval.completion_rate
    );
    Ok((
        format!("completion 0.75, groups {:?}, conserved every tick", eval.group_rates),
        s,
    ))
}

fn determinism(first: &RunSummary, dir: &Path) -> Outcome {
    let (cfg, policy) = canned("leadership_quest").map_err(|e| e.to_string())?;
    let second = run(&cfg, policy, dir)?;
    same_files(&[first.trace.clone()], &[second.trace.clone()])?;
    same_files(&first.stage_one_memory, &second.stage_one_memory)?;
    same_files(&first.final_memory, &second.final_memory)?;
    Ok(format!(
        "trace and {} memory snapshots byte-identical",
        first.stage_one_memory.len() + first.final_memory.len()
    ))
}

// 10
fn schedules() -> Outcome {
    const PLACES: [&str; 5] = ["Home", "Cafe", "Office", "Park", "Store"];
    let mut r = rng(10);
    let mut commutes = 0;
    for i in 0..1000 {
        let table = commute_table(&PLACES, &mut r);
        let raw = random_raw_schedule(&mut r, &PLACES);
        let start_place = r.random_bool(0.8).then(|| PLACES[r.random_range(0..PLACES.len())]);
        let not_before = r.random_range(0..(6 * 3600)) as f64;
        let mut commute = |a: &str, b: &str| table[&(a.to_string(), b.to_string())];
        let s = repair(0, &raw, start_place, not_before, &mut commute);
        oracle_schedule_ok(&s, &raw, start_place, not_before, &table).map_err(|e| format!("schedule {i}: {e}"))?;
        s.validate(start_place, &mut commute)
            .map_err(|e| format!("schedule {i}: {e}"))?;
        commutes += s.entries.iter().filter(|e| e.commute).count();
    }
    Ok(format!("1000 repaired, {commutes} commute blocks inserted"))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let base = tmp.path();
    let mut lq_run = None;
    let mut failed = 0;
    let mut report = |n: u32, name: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
        Err(why) => {
            failed += 1;
            println!("FAIL {n:>2} {name}: {why}");
        }
    };
    report(1, "episodic retrieval oracle", retrieval_oracle());
    report(2, "occupancy oracle", occupancy());
    report(3, "a* optimality", astar());
    report(4, "region layer", regions());
    report(5, "scene graph idempotence", scene_graph());
    report(6, "memory growth", memory_growth(&base.join("town_day")));
    report(7, "message locality", message_locality());
    report(8, "influence battle", influence_battle(&base.join("influence")));
    let lq = leadership_quest(&base.join("leadership_a")).map(|(detail, s)| {
        lq_run = Some(s);
        detail
    });
    report(9, "leadership quest", lq);
    report(10, "schedule validity", schedules());
    let det = match &lq_run {
        Some(first) => determinism(first, &base.join("leadership_b")),
        None => Err("first leadership run failed".into()),
    };
    report(11, "end-to-end determinism", det);
    if failed == 0 {
        println!("all 11 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} of 11 criteria failed");
        ExitCode::FAILURE
    }
}
