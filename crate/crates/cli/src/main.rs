//! `arsent`: preprocessing, baseline training, annotator benchmarking,
//! active-learning runs, reports and the labeling service.
//!
//! Results go to stdout as JSON. Failures exit with status 1 after printing
//! one `{"error": ..., "code": ...}` line to stderr.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use arsent_core::annotators::{
    benchmark_annotators, Annotator, HumanAnnotator, LlmAnnotator, LlmConfig, OracleAnnotator, TaskQueue,
};
use arsent_core::models::{split_dataset, Arch, Checkpoint, ModelSpec, SplitSpec, TrainConfig};
use arsent_core::orchestrator::service::{serve, ServiceState};
use arsent_core::orchestrator::{
    report, run_active_learning, train_baseline, ExperimentConfig, OrchestratorError, RunConfig, RunStore,
};
use arsent_core::synthetic::{generate, write_csv, SyntheticSpec};
use arsent_core::textprep::{load_dataset_csv, Dataset, Preprocessor, Vocabulary};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "arsent", version, about = "Active-learning sentiment experiments")]
struct Cli {
    /// Directory holding run records and the task queue.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnnotatorKind {
    Llm,
    Human,
    Oracle,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess and split a dataset; writes tokens, vocabulary and split ids.
    Prep {
        dataset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic keyword-labeled corpus as CSV.
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the full training split and evaluate on test.
    Baseline {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also save the trained weights here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score LLM annotators against gold labels on one seeded draw.
    BenchLlm {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// JSON object mapping annotator names to endpoint settings.
        #[arg(long)]
        annotators: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run or resume an active-learning loop.
    AlRun {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long, value_enum)]
        annotator: AnnotatorKind,
        /// Which configured LLM to use when several are defined.
        #[arg(long)]
        llm: Option<String>,
        /// JSON object mapping annotator names to endpoint settings.
        #[arg(long)]
        annotators: Option<PathBuf>,
        /// Baseline run whose split and accuracy this run is compared with.
        #[arg(long)]
        target_from: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_cycles: Option<usize>,
        #[arg(long)]
        stop_at_target: bool,
        /// Port of the labeling service started for human runs.
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Accuracy series of stored runs as JSON, optionally also as CSV.
    Report {
        #[arg(required = true)]
        run_ids: Vec<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Serve the labeling and run-inspection API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

struct Env {
    config: ExperimentConfig,
    data_dir: PathBuf,
}

impl Env {
    fn store(&self) -> Result<RunStore, OrchestratorError> {
        RunStore::open(self.data_dir.join("runs"))
    }

    fn queue(&self) -> Result<Arc<TaskQueue>, OrchestratorError> {
        fs::create_dir_all(&self.data_dir).map_err(|e| OrchestratorError::Store(e.to_string()))?;
        let queue = TaskQueue::open(&self.data_dir.join("tasks.json")).map_err(|e| OrchestratorError::Store(e.to_string()))?;
        Ok(Arc::new(queue))
    }

    fn dataset(&self, name: &str) -> Result<Dataset, OrchestratorError> {
        Ok(load_dataset_csv(&self.config.dataset_path(name))?)
    }

    fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.config.seed).unwrap_or(0)
    }

    fn arch(&self, flag: Option<Arch>) -> Arch {
        flag.or(self.config.arch).unwrap_or(Arch::Lstm)
    }

    /// LLM settings from `--annotators` when given, else from the config.
    fn llm_configs(&self, file: Option<&Path>) -> Result<BTreeMap<String, LlmConfig>, OrchestratorError> {
        let configs: BTreeMap<String, LlmConfig> = match file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| config_err(path, e))?;
                serde_json::from_str(&text).map_err(|e| config_err(path, e))?
            }
            None => self.config.annotators.clone(),
        };
        for (name, c) in &configs {
            c.validate().map_err(|e| OrchestratorError::Config(format!("annotator `{name}`: {e}")))?;
        }
        Ok(configs)
    }
}

fn config_err(path: &Path, e: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::Config(format!("{}: {e}", path.display()))
}

fn print_json(value: &impl serde::Serialize) {
    let text = serde_json::to_string_pretty(value).expect("results serialize");
    println!("{text}");
}

fn prep(env: &Env, dataset: &str, out: &Path, seed: u64) -> Result<(), OrchestratorError> {
    let ds = env.dataset(dataset)?;
    let pre = Preprocessor::default();
    let (train, val, test) = split_dataset(&ds.samples, &SplitSpec::standard(seed))?;
    let processed: Vec<_> = ds.samples.iter().map(|s| pre.process_sample(s)).collect();
    let train_ids: std::collections::HashSet<&str> = train.iter().map(|s| s.id.as_str()).collect();
    let train_processed: Vec<_> = processed.iter().filter(|p| train_ids.contains(p.id.as_str())).cloned().collect();
    let vocab = Vocabulary::build(&train_processed, arsent_core::textprep::DEFAULT_MAX_VOCAB)?;

    fs::create_dir_all(out).map_err(|e| config_err(out, e))?;
    let write = |name: &str, bytes: Vec<u8>| -> Result<(), OrchestratorError> {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(|e| config_err(&path, e))
    };
    let mut lines = Vec::new();
    for (sample, p) in ds.samples.iter().zip(&processed) {
        let row = json!({"id": p.id, "tokens": p.tokens, "label": sample.gold_label});
        writeln!(lines, "{row}").expect("write to memory");
    }
    write("processed.jsonl", lines)?;
    write("vocab.json", serde_json::to_vec_pretty(&json!({"words": vocab.words(), "size": vocab.size(), "hash": vocab.content_hash()})).expect("json"))?;
    let ids = |v: &[arsent_core::textprep::RawSample]| v.iter().map(|s| s.id.clone()).collect::<Vec<_>>();
    let splits = json!({"seed": seed, "train": ids(&train), "val": ids(&val), "test": ids(&test)});
    write("splits.json", serde_json::to_vec_pretty(&splits).expect("json"))?;
    let empty = processed.iter().filter(|p| p.tokens.is_empty()).count();
    print_json(&json!({
        "dataset": ds.name,
        "content_hash": ds.content_hash,
        "samples": ds.len(),
        "empty_after_preprocessing": empty,
        "splits": [train.len(), val.len(), test.len()],
        "vocab_size": vocab.size(),
        "out": out,
    }));
    Ok(())
}

fn build_annotator(
    env: &Env,
    kind: AnnotatorKind,
    dataset: &Dataset,
    llm: Option<&str>,
    file: Option<&Path>,
) -> Result<Box<dyn Annotator>, OrchestratorError> {
    Ok(match kind {
        AnnotatorKind::Oracle => Box::new(OracleAnnotator::from_dataset(dataset)),
        AnnotatorKind::Human => {
            return Err(OrchestratorError::InvalidArgument(
                "human annotation runs through the labeling service".into(),
            ))
        }
        AnnotatorKind::Llm => {
            let mut configs = env.llm_configs(file)?;
            let config = match llm {
                Some(name) => configs
                    .remove(name)
                    .ok_or_else(|| OrchestratorError::Config(format!("no annotator named `{name}`")))?,
                None if configs.len() == 1 => configs.into_values().next().expect("one entry"),
                None => {
                    return Err(OrchestratorError::Config(
                        "name one configured annotator with --llm".into(),
                    ))
                }
            };
            Box::new(LlmAnnotator::new(config).map_err(|e| OrchestratorError::Config(e.to_string()))?)
        }
    })
}

/// Runs the labeling service on a background thread until `stop` fires or
/// Ctrl-C cancels the queue.
fn spawn_service(
    state: Arc<ServiceState>,
    port: u16,
) -> Result<(std::thread::JoinHandle<()>, tokio::sync::oneshot::Sender<()>), OrchestratorError> {
    let listener = std::net::TcpListener::bind(("0.0.0.0", port))
        .map_err(|e| OrchestratorError::Config(format!("cannot bind port {port}: {e}")))?;
    listener.set_nonblocking(true).map_err(|e| OrchestratorError::Config(e.to_string()))?;
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let handle = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            let queue = state.queue.clone();
            let shutdown = async move {
                tokio::select! {
                    _ = stop_rx => {}
                    _ = tokio::signal::ctrl_c() => queue.cancel(),
                }
            };
            if let Err(e) = serve(listener, state, shutdown).await {
                log::error!("service stopped: {e}");
            }
        });
    });
    Ok((handle, stop_tx))
}

fn run(cli: Cli) -> Result<(), OrchestratorError> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let data_dir = cli
        .data_dir
        .clone()
        .or_else(|| config.data_dir.clone())
        .unwrap_or_else(|| PathBuf::from("arsent-data"));
    let env = Env { config, data_dir };

    match cli.command {
        Command::Prep { dataset, out, seed } => prep(&env, &dataset, &out, seed),
        Command::Synth { n, seed, out } => {
            let ds = generate(&SyntheticSpec::new(n, seed));
            write_csv(&ds, &out)?;
            print_json(&json!({"out": out, "samples": ds.len(), "seed": seed}));
            Ok(())
        }
        Command::Baseline {
            dataset,
            arch,
            seed,
            checkpoint,
        } => {
            let ds = env.dataset(&dataset)?;
            let (arch, seed) = (env.arch(arch), env.seed(seed));
            let spec = ModelSpec::preset(arch, ds.label_set.len());
            let store = env.store()?;
            let (record, model) = train_baseline(&ds, &spec, &TrainConfig::preset(arch, seed), Some(&store))?;
            if let Some(path) = checkpoint {
                Checkpoint::from_model(&model, &record.vocab_hash).save(&path)?;
            }
            print_json(&record);
            Ok(())
        }
        Command::BenchLlm {
            dataset,
            n,
            annotators,
            seed,
        } => {
            let ds = env.dataset(&dataset)?;
            let configs = env.llm_configs(annotators.as_deref())?;
            if configs.is_empty() {
                return Err(OrchestratorError::Config("no LLM annotators configured".into()));
            }
            let clients = configs
                .into_iter()
                .map(|(name, c)| Ok((name, LlmAnnotator::new(c).map_err(|e| OrchestratorError::Config(e.to_string()))?)))
                .collect::<Result<Vec<_>, OrchestratorError>>()?;
            let named: Vec<(&str, &dyn Annotator)> = clients.iter().map(|(n, c)| (n.as_str(), c as &dyn Annotator)).collect();
            let report = benchmark_annotators(&ds, n, &named, env.seed(seed))
                .map_err(|e| OrchestratorError::InvalidArgument(e.to_string()))?;
            print_json(&report);
            Ok(())
        }
        Command::AlRun {
            dataset,
            arch,
            annotator,
            llm,
            annotators,
            target_from,
            seed,
            max_cycles,
            stop_at_target,
            port,
        } => {
            let ds = env.dataset(&dataset)?;
            let (arch, seed) = (env.arch(arch), env.seed(seed));
            let store = env.store()?;
            let split_seed = match &target_from {
                Some(id) => store.load(id)?.config.split_seed,
                None => seed,
            };
            let mut rule = env.config.stopping.clone().unwrap_or_default();
            if let Some(m) = max_cycles {
                rule.max_cycles = m;
            }
            rule.stop_at_target |= stop_at_target;
            let config = RunConfig {
                seed,
                split_seed,
                train: TrainConfig::preset(arch, seed),
                stopping: None,
                target_from,
            };
            let spec = ModelSpec::preset(arch, ds.label_set.len());
            let record = if let AnnotatorKind::Human = annotator {
                let state = Arc::new(ServiceState {
                    store: store.clone(),
                    queue: env.queue()?,
                });
                // the service and the annotator share one queue
                let human = HumanAnnotator::new(state.queue.clone());
                let (handle, stop) = spawn_service(state, port)?;
                log::info!("labeling service on port {port}");
                let result = run_active_learning(&ds, &spec, &config, &human, &rule, Some(&store));
                let _ = stop.send(());
                let _ = handle.join();
                result?
            } else {
                let annotator = build_annotator(&env, annotator, &ds, llm.as_deref(), annotators.as_deref())?;
                run_active_learning(&ds, &spec, &config, annotator.as_ref(), &rule, Some(&store))?
            };
            print_json(&record);
            Ok(())
        }
        Command::Report { run_ids, csv } => {
            let doc = report(&env.store()?, &run_ids)?;
            if let Some(path) = csv {
                fs::write(&path, doc.to_csv()?).map_err(|e| config_err(&path, e))?;
            }
            print_json(&doc);
            Ok(())
        }
        Command::Serve { port } => {
            let state = Arc::new(ServiceState {
                store: env.store()?,
                queue: env.queue()?,
            });
            let (handle, _stop) = spawn_service(state, port)?;
            log::info!("serving on port {port}");
            let _ = handle.join();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.to_string(), "code": e.code()}));
            ExitCode::FAILURE
        }
    }
}
