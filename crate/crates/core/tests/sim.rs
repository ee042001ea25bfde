use std::collections::{BTreeMap, BTreeSet};

use lifemem::action::{Action, Hand};
use lifemem::agent::AgentContext;
use lifemem::clock::DAY;
use lifemem::geometry::distance;
use lifemem::providers::{HashEmbedder, ScriptedPolicy, ScriptedReasoner};
use lifemem::sim::config::PerceptionMode;
use lifemem::sim::perception::{apply_noise, eye_pose, intrinsics, oracle_detections};
use lifemem::sim::scenarios::canned;
use lifemem::sim::trace::HeldItem;
use lifemem::sim::world::SentMessage;
use lifemem::sim::{score_trace, Simulation, TickRecord, Trace, World, WorldConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

[[buildings]]
name = "Shed"
kind = "office"
footprint = [[30.0, 30.0], [34.0, 30.0], [34.0, 34.0], [30.0, 34.0]]
entrance = [32.0, 28.5]

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

fn open() -> WorldConfig {
    WorldConfig::from_toml(OPEN).unwrap()
}

#[test]
fn messages_reach_exactly_the_agents_in_range() {
    let emb = HashEmbedder::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..200 {
        let mut w = World::new(open(), &emb, 0.0).unwrap();
        for b in w.bodies.values_mut() {
            b.pose.position = [rng.random_range(0.0..25.0), rng.random_range(0.0..25.0), 0.0];
        }
        let pre = w.positions();
        let range = rng.random_range(0.0..15.0);
        let msg = Action::Converse {
            conversation: format!("c{trial}"),
            to: vec![],
            message: "hello".into(),
            range,
        };
        let report = w.apply_actions("Ada", &[msg], &pre).unwrap();
        let r = range.min(10.0);
        for name in ["Bo", "Cy"] {
            let d = distance(pre["Ada"], pre[name]);
            let heard = w.inbox.get(name).is_some_and(|m| !m.is_empty());
            assert_eq!(heard, d <= r, "trial {trial}: {name} at {d:.2} m, range {r:.2}");
        }
        assert!(w.inbox.get("Ada").is_none_or(|m| m.is_empty()));
        assert_eq!(report.sent[0].range, r);
    }
}

#[test]
fn noisy_perception_misses_at_the_configured_rate() {
    let emb = HashEmbedder::default();
    let mut cfg = open();
    cfg.perception.mode = PerceptionMode::Noisy;
    cfg.perception.p_miss = 0.2;
    let mut w = World::new(cfg, &emb, 0.0).unwrap();
    // everyone within touching distance, so the oracle always sees both
    w.bodies.get_mut("Bo").unwrap().pose.position = [5.5, 5.0, 0.0];
    w.bodies.get_mut("Cy").unwrap().pose.position = [5.0, 5.5, 0.0];
    let xy = w.body("Ada").unwrap().pose.xy();
    let pose = eye_pose(&w, xy, 0.0);
    let intr = intrinsics(&w);
    let (mut total, mut kept) = (0usize, 0usize);
    for _ in 0..1000 {
        let dets = oracle_detections(&w, "Ada", &pose, &intr);
        total += dets.len();
        kept += apply_noise(&mut w, dets).len();
    }
    assert_eq!(total, 2000);
    let miss = 1.0 - kept as f64 / total as f64;
    assert!((miss - 0.2).abs() <= 0.03, "miss rate {miss}");
}

fn ctx<'a>(r: &'a ScriptedReasoner, e: &'a HashEmbedder) -> AgentContext<'a> {
    AgentContext {
        reasoner: r,
        embedder: e,
    }
}

#[test]
fn idle_agents_tick_without_talking() {
    let emb = HashEmbedder::default();
    let reasoner = ScriptedReasoner::new(ScriptedPolicy::default());
    let mut sim = Simulation::new(open(), &emb, 9.0 * 3600.0, 1).unwrap();
    let mut records = Vec::new();
    for _ in 0..60 {
        records.extend(sim.tick(ctx(&reasoner, &emb)).unwrap());
    }
    assert_eq!(records.len(), 180);
    assert!(records.iter().all(|r| r.messages.is_empty()));
    let per_agent: BTreeMap<&str, usize> = records.iter().fold(BTreeMap::new(), |mut m, r| {
        *m.entry(r.agent.as_str()).or_default() += 1;
        m
    });
    assert_eq!(per_agent.values().copied().collect::<Vec<_>>(), vec![60, 60, 60]);
    assert_eq!(sim.world.time, 9.0 * 3600.0 + 60.0);
}

#[test]
fn saved_state_resumes_into_the_same_run() {
    let emb = HashEmbedder::default();
    let (cfg, policy) = canned("town_day").unwrap();
    let start = cfg.stages.start;
    let r1 = ScriptedReasoner::new(policy.clone());
    let mut straight = Simulation::new(cfg.clone(), &emb, start, 1).unwrap();
    let mut want = Vec::new();
    for _ in 0..80 {
        want.extend(straight.tick(ctx(&r1, &emb)).unwrap());
    }

    let r2 = ScriptedReasoner::new(policy);
    let mut sim = Simulation::new(cfg, &emb, start, 1).unwrap();
    let mut got = Vec::new();
    for _ in 0..40 {
        got.extend(sim.tick(ctx(&r2, &emb)).unwrap());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    sim.save(&path).unwrap();
    drop(sim);
    let mut sim = Simulation::load(&path, &emb).unwrap();
    for _ in 0..40 {
        got.extend(sim.tick(ctx(&r2, &emb)).unwrap());
    }
    assert_eq!(
        serde_json::to_string(&got).unwrap(),
        serde_json::to_string(&want).unwrap()
    );
    assert_eq!(sim.memory_snapshots(), straight.memory_snapshots());
}

#[test]
fn goal_injection_touches_only_the_named_agents() {
    let emb = HashEmbedder::default();
    let cfg = open();
    let sim = Simulation::new(cfg.clone(), &emb, 0.0, 1).unwrap();
    let memories = sim.memory_snapshots();
    let goals = BTreeMap::from([("Bo".to_string(), "throw a street party".to_string())]);
    let plain = Simulation::restore(cfg.clone(), memories.clone(), &BTreeMap::new(), &emb, DAY, 2).unwrap();
    let steered = Simulation::restore(cfg, memories, &goals, &emb, DAY, 2).unwrap();
    for name in ["Ada", "Cy"] {
        assert_eq!(plain.agents[name].profile, steered.agents[name].profile);
        assert_eq!(
            plain.agents[name].memory_snapshot(DAY),
            steered.agents[name].memory_snapshot(DAY)
        );
    }
    let (a, b) = (&plain.agents["Bo"].profile, &steered.agents["Bo"].profile);
    assert_eq!(b.community_goal, "throw a street party");
    let mut b = b.clone();
    b.community_goal = a.community_goal.clone();
    assert_eq!(a, &b);
    assert!(steered.agents["Bo"]
        .semantic()
        .node("Bo")
        .unwrap()
        .facts()
        .any(|f| f.contains("street party")));
}

fn record(stage: u8, time: f64, agent: &str, place: Option<&str>) -> TickRecord {
    TickRecord {
        stage,
        time,
        agent: agent.into(),
        position: [0.0, 0.0],
        yaw: 0.0,
        place: place.map(Into::into),
        vehicle: None,
        cash: 0.0,
        held: vec![],
        triggered: false,
        reaction: None,
        actions: vec![],
        messages: vec![],
        heard: 0,
        new_objects: 0,
        episodic: 0,
        semantic: 0,
        path: None,
        notes: vec![],
    }
}

fn message(conversation: &str, to: &[&str]) -> SentMessage {
    SentMessage {
        conversation: conversation.into(),
        to: to.iter().map(|s| s.to_string()).collect(),
        text: "come along".into(),
        range: 5.0,
        recipients: vec![],
    }
}

#[test]
fn influence_score_from_a_hand_built_trace() {
    let (cfg, _) = canned("influence_battle").unwrap();
    let mut trace = Trace::new(cfg);
    let day = DAY;
    let t0 = day + 9.0 * 3600.0;
    trace.stages = vec![(1, 9.0 * 3600.0), (2, t0)];
    // stage one activity is ignored
    trace.ticks.push(record(1, 9.0 * 3600.0 + 400.0, "Cora", Some("Cafe")));
    for k in 0..1200 {
        let t = t0 + k as f64;
        let tod = 9.0 * 3600.0 + k as f64;
        let in_window = (9.0 * 3600.0 + 300.0..=9.0 * 3600.0 + 900.0).contains(&tod);
        trace.ticks.push(record(2, t, "Olive", Some("Cafe")));
        trace.ticks.push(record(2, t, "Oscar", None));
        // Amy drops by the bar only inside the window, Ben only before it
        let amy = (in_window && k % 100 == 0).then_some("Bar");
        let ben = (k < 100).then_some("Cafe");
        trace.ticks.push(record(2, t, "Amy", amy));
        trace.ticks.push(record(2, t, "Ben", ben));
        trace.ticks.push(record(2, t, "Cora", Some("House C")));
    }
    // two conversations involve an organizer, one does not
    let msgs: [(usize, &str, &str, &[&str]); 4] = [
        (10, "Olive", "c1", &["Amy"]),
        (11, "Amy", "c1", &["Olive"]),
        (20, "Ben", "c2", &["Oscar"]),
        (30, "Ben", "c3", &["Cora"]),
    ];
    for (k, from, conv, to) in msgs {
        let i = 1 + k * 5;
        let r = trace.ticks[i..i + 5].iter_mut().find(|r| r.agent == from).unwrap();
        r.messages.push(message(conv, to));
    }
    let s = score_trace(&trace).unwrap();
    // Olive and Amy out of five
    assert_eq!(s.show_up_rate, Some(2.0 / 5.0));
    assert_eq!(s.attendance, vec!["Amy".to_string(), "Olive".to_string()]);
    assert_eq!(s.conversation_count, 2);
}

#[test]
fn leadership_score_from_a_hand_built_trace() {
    let (cfg, _) = canned("leadership_quest").unwrap();
    let mut trace = Trace::new(cfg);
    let t0 = DAY + 9.0 * 3600.0;
    trace.stages = vec![(1, 9.0 * 3600.0), (2, t0)];
    let deadline = t0 + 600.0;
    let held = |tag: &str| HeldItem {
        hand: Hand::Left,
        object: format!("{tag}-1"),
        tag: tag.into(),
    };
    for t in [t0, t0 + 300.0, deadline, deadline + 10.0] {
        let mut lena = record(2, t, "Lena", Some("Plaza"));
        let mut hugo = record(2, t, "Hugo", Some("Plaza"));
        let mut liam = record(2, t, "Liam", Some("Hall"));
        if t == t0 + 300.0 {
            hugo.held.push(held("apple"));
        }
        if t >= deadline {
            // too late to count
            lena.held.push(held("bread"));
            liam.held.push(held("bread"));
        }
        trace.ticks.extend([hugo, liam, lena]);
    }
    let s = score_trace(&trace).unwrap();
    assert_eq!(s.group_rates["Plaza Crew"], 0.5);
    assert_eq!(s.group_rates["Hall Crew"], 0.0);
    assert_eq!(s.completion_rate, Some(0.25));
    assert_eq!(s.fulfilled["Plaza Crew"], vec!["apple".to_string()]);
    let none: BTreeSet<String> = BTreeSet::new();
    assert_eq!(lifemem::sim::scoring::conversation_count(&trace.ticks, &none), 0);
}
