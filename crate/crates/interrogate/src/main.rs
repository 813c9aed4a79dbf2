use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use interrogate::backend::Registry;
use interrogate::cache::CacheStore;
use interrogate::config::{PromptFile, RunConfig};
use interrogate::detector::Detector;
use interrogate::error::{Error, Result};
use interrogate::evaluation::baselines::{calibrate, load_pairs};
use interrogate::evaluation::harness::{self, load_records, write_records, EvalPlan, Method};
use interrogate::evaluation::report::{build_report, k_series, k_series_csv, render_table};
use interrogate::synthetic::{self, SyntheticConfig};
use interrogate_core::{AggregationMode, TaskKind};

/// Hallucination detection by reconstructing the query from the answer.
#[derive(Parser)]
#[command(name = "interrogate", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; every other seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Response cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Backward passes per backward model.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Similarity threshold; scores below it are hallucinations.
    #[arg(long, global = true, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// average or max
    #[arg(long, global = true)]
    aggregation: Option<AggregationMode>,
    /// Comma-separated subset of interrogate, embed-cosine, selfcheck.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Comma-separated subset of movies, books, gci.
    #[arg(long, global = true, value_delimiter = ',')]
    tasks: Vec<TaskKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Checks one query (and optionally a given answer). Exit 0 = no
    /// hallucination, 1 = hallucination, 2 = infeasible or error.
    Detect {
        #[arg(long)]
        query: String,
        /// Skip the forward pass and check this answer.
        #[arg(long)]
        answer: Option<String>,
        /// Task whose prompt to use.
        #[arg(long, default_value = "movies")]
        task: TaskKind,
        /// Forward backend (default: first in config).
        #[arg(long)]
        forward: Option<String>,
    },
    /// Runs every configured task through every selected method.
    Evaluate {
        /// Output directory (overrides config).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Take at most this many records per task.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Picks the embedding-similarity threshold from labelled question pairs.
    Calibrate {
        #[arg(long)]
        pairs: PathBuf,
        /// Embedding backend (default: the detector's).
        #[arg(long)]
        embedder: Option<String>,
    },
    /// Prints the metrics table for a records file and writes the K series.
    Report {
        #[arg(long)]
        records: PathBuf,
        /// Directory for report.json and k_series.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Writes a seeded synthetic benchmark with a ready config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        items: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.global.parallelism {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(d) = &g.cache_dir {
        cfg.cache_dir = Some(d.clone());
    }
    if let Some(k) = g.k {
        cfg.detector.k = k;
    }
    if let Some(t) = g.tau {
        cfg.detector.tau = t;
    }
    if let Some(a) = g.aggregation {
        cfg.detector.aggregation = a;
    }
    if !g.methods.is_empty() {
        cfg.methods = g.methods.clone();
    }
    cfg.validate()?;
    log::info!("base seed {}", cfg.seed);
    Ok(cfg)
}

fn registry(cfg: &RunConfig, prompts: &PromptFile) -> Result<Registry> {
    let raw = cfg.build_registry(prompts)?;
    Ok(match &cfg.cache_dir {
        Some(dir) => raw.cached(&Arc::new(CacheStore::open(dir)?)),
        None => raw,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    match cli.command {
        Command::Detect { query, answer, task, forward } => {
            let cfg = load_config(g)?;
            let prompts = cfg.prompt_file()?;
            let (_, spec) = prompts.for_task(task)?;
            let registry = registry(&cfg, &prompts)?;
            let detector = Detector::from_registry(cfg.detector_config(), &registry)?;
            let outcome = match answer {
                Some(a) => detector.detect_given_answer(&query, &a, &spec, cfg.seed)?,
                None => {
                    let id = forward
                        .or_else(|| cfg.forward.first().cloned())
                        .ok_or_else(|| Error::Config("no forward backend configured".into()))?;
                    detector.detect(&query, &spec, &*registry.generator(&id)?, cfg.seed)?
                }
            };
            if g.json {
                println!("{}", outcome.to_json_line()?);
            } else {
                println!("answer: {}", outcome.answer);
                for (r, s) in outcome.reconstructions.iter().zip(&outcome.per_reconstruction_similarity) {
                    println!("  [{} #{} t={:.2}] {:.4}  {}", r.backend_id, r.pass_index, r.temperature, s, r.text);
                }
                let verdict = if outcome.verdict { "HALLUCINATION" } else { "ok" };
                println!("score {:.4} (tau {}) -> {verdict}", outcome.score, cfg.detector.tau);
            }
            Ok(u8::from(outcome.verdict))
        }
        Command::Evaluate { output, limit } => {
            let cfg = load_config(g)?;
            let prompts = cfg.prompt_file()?;
            let registry = registry(&cfg, &prompts)?;
            let plan = EvalPlan {
                tasks: cfg.task_inputs(&prompts, &g.tasks)?,
                forward_backends: cfg.forward.clone(),
                methods: cfg.methods.clone(),
                detector: cfg.detector_config(),
                k_sweep: cfg.k_sweep.clone(),
                embed_cosine_threshold: cfg.embed_cosine_threshold(&registry)?,
                selfcheck: cfg.selfcheck_config(),
                seed: cfg.seed,
                limit,
            };
            if plan.tasks.is_empty() {
                return Err(Error::Config("no tasks selected".into()));
            }
            let out = output.or(cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            // in-flight items finish; the rest are skipped
            let _ = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst));
            let started = unix_now();
            let run = harness::run(&plan, &registry, &stop)?;
            write_records(&out.join("records.jsonl"), &run.records)?;
            let meta = serde_json::json!({
                "started_unix": started,
                "finished_unix": unix_now(),
                "seed": cfg.seed,
                "planned": run.planned,
                "completed": run.records.len(),
                "interrupted": run.interrupted,
            });
            write_file(&out.join("run_meta.json"), &serde_json::to_string_pretty(&meta)?)?;
            if run.records.is_empty() {
                return Err(Error::Config("no records were evaluated".into()));
            }
            emit_report(&run.records, &out, g.json)?;
            if run.interrupted {
                eprintln!("interrupted: {} of {} items evaluated; rerun to resume from the cache", run.records.len(), run.planned);
                return Ok(2);
            }
            Ok(0)
        }
        Command::Calibrate { pairs, embedder } => {
            let cfg = load_config(g)?;
            let prompts = cfg.prompt_file()?;
            let registry = registry(&cfg, &prompts)?;
            let id = embedder.unwrap_or_else(|| cfg.detector.embedding.clone());
            let t = calibrate(&load_pairs(&pairs)?, &*registry.embedder(&id)?)?;
            if g.json {
                println!("{}", serde_json::json!({ "threshold": t.value, "balanced_accuracy": t.balanced_accuracy }));
            } else {
                println!("threshold {} (balanced accuracy {:.4})", t.value, t.balanced_accuracy);
            }
            Ok(0)
        }
        Command::Report { records, output } => {
            let records = load_records(&records)?;
            let out = output.unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            emit_report(&records, &out, g.json)?;
            Ok(0)
        }
        Command::Synth { out, items } => {
            let seed = g.seed.unwrap_or(SyntheticConfig::default().seed);
            let bench = synthetic::build(&SyntheticConfig { items, seed, ..Default::default() });
            let path = synthetic::write_bundle(&bench, &out, seed)?;
            println!("{}", path.display());
            Ok(0)
        }
    }
}

fn emit_report(records: &[harness::EvalRecord], out: &Path, json: bool) -> Result<()> {
    let report = build_report(records)?;
    write_file(&out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    let table = render_table(&report);
    write_file(&out.join("report.txt"), &table)?;
    let series = k_series(&report);
    if !series.is_empty() {
        write_file(&out.join("k_series.csv"), &k_series_csv(&series))?;
    }
    if json {
        println!("{}", serde_json::to_string(&report)?);
    } else {
        print!("{table}");
    }
    Ok(())
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
