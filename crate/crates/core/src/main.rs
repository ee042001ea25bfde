use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lifemem::agent::{AgentContext, MemorySnapshot};
use lifemem::episodic::{EpisodicStore, MemoryQuery, RetrievalConfig};
use lifemem::providers::remote::{
    EndpointConfig, HttpTransport, PlaybackTransport, RecordingTransport, RemoteReasoner,
};
use lifemem::providers::{EmbeddingProvider, HashEmbedder, Reasoner, ScriptedPolicy, ScriptedReasoner};
use lifemem::sim::config::{EvaluationConfig, PerceptionMode};
use lifemem::sim::growth::write_growth;
use lifemem::sim::scenarios::{canned, load_scenario, CANNED};
use lifemem::sim::{run_scenario, score_trace, Trace, WorldConfig};

#[derive(Parser)]
#[command(
    name = "lifemem",
    version,
    about = "Embodied agents with lifelong memory in a desk-scale town"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    /// Rule tables from the scenario's policy file.
    Scripted,
    /// Chat-completion endpoint configured through LIFEMEM_API_* variables.
    Remote,
    /// Remote endpoint, appending every exchange to --fixture.
    Record,
    /// Answers replayed from --fixture; no network.
    Playback,
}

#[derive(Clone, Copy, ValueEnum)]
enum Perception {
    Oracle,
    Noisy,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalKind {
    InfluenceBattle,
    LeadershipQuest,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (file path or built-in name) and write trace and memories.
    Run {
        scenario: String,
        #[arg(long, default_value = "run-out")]
        out: PathBuf,
        /// Stage-one length in ticks (seconds).
        #[arg(long)]
        duration: Option<u64>,
        /// Stage-two length in ticks; 0 skips the evaluation stage.
        #[arg(long)]
        stage_two: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        perception: Option<Perception>,
        /// Detection miss probability in noisy mode.
        #[arg(long)]
        p_miss: Option<f64>,
        #[arg(long, value_enum, default_value = "scripted")]
        reasoner: Backend,
        /// Policy file overriding the scenario's own.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Fixture file for record/playback.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Score a trace with the evaluation embedded in its scenario.
    Score {
        trace: PathBuf,
        /// Fail unless the trace carries this evaluation.
        #[arg(long, value_enum)]
        eval: Option<EvalKind>,
    },
    /// Query an agent memory snapshot.
    InspectMemory {
        snapshot: PathBuf,
        query: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Query location as x,y (defaults to the latest event's location).
        #[arg(long, value_delimiter = ',')]
        at: Option<Vec<f64>>,
    },
    /// Per-tick episodic and semantic memory sizes as CSV plus a PNG chart.
    PlotGrowth {
        trace: PathBuf,
        /// Output prefix; writes <prefix>.csv and <prefix>.png.
        #[arg(long, default_value = "growth")]
        out: PathBuf,
    },
    /// List built-in scenarios.
    Scenarios,
}

type CliResult = Result<(), String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            duration,
            stage_two,
            seed,
            perception,
            p_miss,
            reasoner,
            policy,
            fixture,
        } => {
            let opts = RunArgs {
                duration,
                stage_two,
                seed,
                perception,
                p_miss,
            };
            run(&scenario, &out, opts, reasoner, policy.as_deref(), fixture.as_deref())
        }
        Command::Score { trace, eval } => score(&trace, eval),
        Command::InspectMemory { snapshot, query, k, at } => inspect(&snapshot, &query, k, at),
        Command::PlotGrowth { trace, out } => plot(&trace, &out),
        Command::Scenarios => {
            for c in CANNED {
                println!("{}", c.name);
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

struct RunArgs {
    duration: Option<u64>,
    stage_two: Option<u64>,
    seed: Option<u64>,
    perception: Option<Perception>,
    p_miss: Option<f64>,
}

fn load(scenario: &str) -> Result<(WorldConfig, Option<ScriptedPolicy>), String> {
    let path = Path::new(scenario);
    if path.exists() {
        load_scenario(path).map_err(|e| e.to_string())
    } else {
        canned(scenario)
            .map(|(c, p)| (c, Some(p)))
            .map_err(|_| format!("{scenario:?} is neither a file nor a built-in scenario"))
    }
}

fn run(
    scenario: &str,
    out: &Path,
    args: RunArgs,
    backend: Backend,
    policy: Option<&Path>,
    fixture: Option<&Path>,
) -> CliResult {
    let (mut cfg, own_policy) = load(scenario)?;
    if let Some(d) = args.duration {
        cfg.stages.stage_one = d;
    }
    if let Some(d) = args.stage_two {
        cfg.stages.stage_two = d;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.perception {
        cfg.perception.mode = match p {
            Perception::Oracle => PerceptionMode::Oracle,
            Perception::Noisy => PerceptionMode::Noisy,
        };
    }
    if let Some(p) = args.p_miss {
        cfg.perception.p_miss = p;
    }
    cfg.validate().map_err(|e| e.to_string())?;

    let reasoner: Box<dyn Reasoner> = match backend {
        Backend::Scripted => {
            let policy = match policy {
                Some(p) => ScriptedPolicy::load(p).map_err(|e| e.to_string())?,
                None => own_policy.ok_or("the scenario names no policy; pass --policy")?,
            };
            cfg.check_places(policy.places()).map_err(|e| e.to_string())?;
            Box::new(ScriptedReasoner::new(policy))
        }
        Backend::Remote => Box::new(RemoteReasoner::from_env().map_err(|e| e.to_string())?),
        Backend::Record => {
            let fixture = fixture.ok_or("--fixture is required for record")?;
            let endpoint = EndpointConfig::from_env().map_err(|e| e.to_string())?;
            let model = endpoint.model.clone();
            let http = HttpTransport::new(endpoint).map_err(|e| e.to_string())?;
            Box::new(RemoteReasoner::new(
                Box::new(RecordingTransport::new(http, fixture)),
                model,
            ))
        }
        Backend::Playback => {
            let fixture = fixture.ok_or("--fixture is required for playback")?;
            let transport = PlaybackTransport::load(fixture).map_err(|e| e.to_string())?;
            let model = std::env::var(lifemem::providers::remote::ENV_MODEL)
                .unwrap_or_else(|_| lifemem::providers::remote::DEFAULT_MODEL.into());
            Box::new(RemoteReasoner::new(Box::new(transport), model))
        }
    };
    let embedder = HashEmbedder::default();
    let ctx = AgentContext {
        reasoner: reasoner.as_ref(),
        embedder: &embedder,
    };
    let summary = run_scenario(&cfg, out, ctx).map_err(|e| e.to_string())?;
    println!("ticks: {}", summary.ticks);
    println!("trace: {}", summary.trace.display());
    println!("memories: {}", out.join("memory").display());
    if let Some(eval) = summary.eval {
        println!("{}", serde_json::to_string_pretty(&eval).map_err(|e| e.to_string())?);
    }
    Ok(())
}

fn score(trace: &Path, eval: Option<EvalKind>) -> CliResult {
    let trace = Trace::read(trace).map_err(|e| e.to_string())?;
    let actual = trace.scenario.evaluation.as_ref();
    match (eval, actual) {
        (Some(EvalKind::InfluenceBattle), Some(EvaluationConfig::InfluenceBattle { .. }))
        | (Some(EvalKind::LeadershipQuest), Some(EvaluationConfig::LeadershipQuest { .. }))
        | (None, _) => {}
        _ => return Err("the trace's scenario carries a different evaluation".into()),
    }
    let result = score_trace(&trace).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&result).map_err(|e| e.to_string())?);
    Ok(())
}

fn inspect(path: &Path, query: &str, k: usize, at: Option<Vec<f64>>) -> CliResult {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let snap: MemorySnapshot = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let dim = snap
        .episodic
        .first()
        .map(|e| e.text_feature.len())
        .unwrap_or(lifemem::providers::DEFAULT_EMBEDDING_DIM);
    let embedder = HashEmbedder::new(dim);
    let location = match at.as_deref() {
        Some([x, y]) => [*x, *y, 0.0],
        Some(_) => return Err("--at takes x,y".into()),
        None => snap.episodic.last().map(|e| e.location).unwrap_or([0.0; 3]),
    };
    let feature = embedder.embed_text(query).map_err(|e| e.to_string())?;
    println!("agent {} at t={}", snap.agent, snap.time);
    println!(
        "episodic events: {}, semantic nodes: {}",
        snap.episodic.len(),
        snap.semantic.len()
    );
    let mut store = EpisodicStore::from_events(snap.episodic).map_err(|e| e.to_string())?;
    let q = MemoryQuery {
        time: snap.time,
        location,
        text: query.to_string(),
        text_feature: feature.clone(),
        image_feature: None,
        k,
    };
    if !store.is_empty() {
        println!("\nepisodic:");
        for hit in store
            .retrieve(&q, &RetrievalConfig::default())
            .map_err(|e| e.to_string())?
        {
            println!(
                "  {:.3}  [{}] {}",
                hit.score,
                lifemem::clock::format_clock(hit.event.created_at),
                hit.event.text
            );
        }
    }
    println!("\nsemantic:");
    for hit in snap.semantic.retrieve_knowledge(&feature, None, k) {
        println!("  {:.3}  {}", hit.score, hit.render());
    }
    Ok(())
}

fn plot(trace: &Path, out: &Path) -> CliResult {
    let trace = Trace::read(trace).map_err(|e| e.to_string())?;
    let csv = out.with_extension("csv");
    let png = out.with_extension("png");
    let rows = write_growth(&trace, &csv, &png).map_err(|e| e.to_string())?;
    println!("{} ticks -> {} and {}", rows.len(), csv.display(), png.display());
    Ok(())
}
