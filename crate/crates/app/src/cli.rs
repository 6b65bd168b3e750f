use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gendebunk_core::corpus::{load_corpus, CorpusKind, MythCorpus};
use gendebunk_core::evaluation::{read_ratings_tsv, write_ratings_tsv, RatingRow};
use gendebunk_core::pipeline::{DebunkRequest, DebunkResult, Strategy};
use tracing::{info, warn};

use crate::config::{AppConfig, Categories, Engine, Mode};
use crate::reports::{self, Format};
use crate::service::{self, AppState};
use crate::study::Annotations;

pub const DEFAULT_CONFIG: &str = "gendebunk.toml";

#[derive(Debug, Parser)]
#[command(
    name = "gendebunk",
    version,
    about = "Generate and evaluate truth-sandwich debunkings of climate myths"
)]
pub struct Cli {
    /// Configuration file. Defaults to ./gendebunk.toml when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Debunk one myth, or every myth in a file.
    Debunk(DebunkArgs),
    /// Run several strategies over a myth corpus.
    Batch(BatchArgs),
    /// Corpus file checks.
    Datasets {
        #[command(subcommand)]
        command: DatasetsCommand,
    },
    /// Agreement and score reports.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct BackendArgs {
    /// Replay every backend call from this cassette.
    #[arg(long, value_name = "CASSETTE", conflicts_with_all = ["record", "live"])]
    pub replay: Option<PathBuf>,
    /// Call live backends and record the exchanges into this cassette.
    #[arg(long, value_name = "CASSETTE", conflicts_with = "live")]
    pub record: Option<PathBuf>,
    /// Call live backends without recording.
    #[arg(long)]
    pub live: bool,
}

impl BackendArgs {
    fn apply(&self, cfg: &mut AppConfig) {
        if let Some(p) = &self.replay {
            cfg.gateways.mode = Mode::Replay;
            cfg.gateways.cassette = Some(p.clone());
        } else if let Some(p) = &self.record {
            cfg.gateways.mode = Mode::Record;
            cfg.gateways.cassette = Some(p.clone());
        } else if self.live {
            cfg.gateways.mode = Mode::Live;
        }
    }
}

#[derive(Debug, Args)]
pub struct DebunkArgs {
    #[arg(long)]
    pub strategy: Strategy,
    /// Myth text.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub myth: Option<String>,
    /// Myth corpus (JSON lines with id and text).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file for the results; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// Myth corpus; the configured test myths when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "generic,contextual,structured"
    )]
    pub strategies: Vec<Strategy>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Subcommand)]
pub enum DatasetsCommand {
    /// Load and validate corpus files; the configured ones by default.
    Validate {
        #[arg(long)]
        exemplars: Option<PathBuf>,
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long)]
        myths: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Clone)]
pub struct RatingsSource {
    /// Annotation store; ratings of completed sessions are used.
    #[arg(long, conflicts_with = "ratings", required_unless_present = "ratings")]
    pub store: Option<PathBuf>,
    /// Tab-separated ratings file.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
}

impl RatingsSource {
    fn rows(&self) -> Result<Vec<RatingRow>> {
        if let Some(store) = &self.store {
            if !store.exists() {
                bail!("store {} does not exist", store.display());
            }
            let ann = Annotations::open(store)?;
            for w in ann.warnings() {
                warn!("{w}");
            }
            return Ok(ann.study().completed_ratings());
        }
        let path = self.ratings.as_ref().expect("clap enforces one source");
        let file =
            std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(read_ratings_tsv(file)?)
    }
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Pairwise agreement per model and annotator grouping.
    Agreement {
        #[command(flatten)]
        source: RatingsSource,
        /// Category set; the configured one by default.
        #[arg(long)]
        categories: Option<Categories>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Mean scores per model and annotator population.
    Scores {
        #[command(flatten)]
        source: RatingsSource,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Write completed-session ratings from a store as a TSV file.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Batch output files whose results form the study items.
    #[arg(long = "study")]
    pub study: Vec<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

pub fn load_config(path: Option<&Path>) -> Result<AppConfig> {
    match path {
        Some(p) => AppConfig::load(p),
        None if Path::new(DEFAULT_CONFIG).exists() => AppConfig::load(Path::new(DEFAULT_CONFIG)),
        None => Ok(AppConfig::default()),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_myths(path: &Path) -> Result<MythCorpus> {
    MythCorpus::load(path).with_context(|| format!("loading myths from {}", path.display()))
}

/// Runs requests in order, writing one canonical result per line. Returns
/// the number of failures.
fn run_requests(engine: &Engine, requests: &[DebunkRequest], out: &mut dyn Write) -> Result<usize> {
    let mut failures = 0;
    for req in requests {
        match engine.debunk(req) {
            Ok(result) => writeln!(out, "{}", result.canonical_json())?,
            Err(e) => {
                failures += 1;
                eprintln!("error: {e}");
            }
        }
    }
    out.flush()?;
    engine.save_cassette()?;
    Ok(failures)
}

/// Parses a batch output file back into results.
pub fn read_results(path: &Path) -> Result<Vec<DebunkResult>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1))
        })
        .collect()
}

fn status(failures: usize) -> ExitCode {
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Debunk(args) => {
            args.backend.apply(&mut cfg);
            let engine = Engine::from_config(&cfg)?;
            let myths: Vec<String> = match (&args.myth, &args.input) {
                (Some(m), _) => vec![m.clone()],
                (None, Some(p)) => read_myths(p)?
                    .records()
                    .iter()
                    .map(|r| r.text.clone())
                    .collect(),
                (None, None) => unreachable!("clap requires a myth source"),
            };
            let requests: Vec<DebunkRequest> = myths
                .into_iter()
                .map(|myth| DebunkRequest {
                    myth,
                    strategy: args.strategy,
                    run_seed: args.seed,
                })
                .collect();
            let mut out = open_output(args.output.as_deref())?;
            Ok(status(run_requests(&engine, &requests, &mut out)?))
        }
        Command::Batch(args) => {
            args.backend.apply(&mut cfg);
            let engine = Engine::from_config(&cfg)?;
            let input = args
                .input
                .clone()
                .or(cfg.corpora.myths.clone())
                .context("no myth corpus given (--input) or configured")?;
            let myths = read_myths(&input)?;
            let mut requests = Vec::new();
            for strategy in &args.strategies {
                for m in myths.records() {
                    requests.push(DebunkRequest {
                        myth: m.text.clone(),
                        strategy: *strategy,
                        run_seed: args.seed,
                    });
                }
            }
            info!(requests = requests.len(), "batch");
            let mut out = open_output(args.output.as_deref())?;
            let failures = run_requests(&engine, &requests, &mut out)?;
            eprintln!("{} results, {failures} failures", requests.len() - failures);
            Ok(status(failures))
        }
        Command::Datasets {
            command:
                DatasetsCommand::Validate {
                    exemplars,
                    evidence,
                    myths,
                },
        } => {
            let targets = [
                (
                    exemplars.or(cfg.corpora.exemplars.clone()),
                    CorpusKind::Exemplars,
                ),
                (
                    evidence.or(cfg.corpora.evidence.clone()),
                    CorpusKind::Evidence,
                ),
                (myths.or(cfg.corpora.myths.clone()), CorpusKind::Myths),
            ];
            let mut failures = 0;
            let mut checked = 0;
            for (path, kind) in targets {
                let Some(path) = path else { continue };
                checked += 1;
                match load_corpus(&path, kind) {
                    Ok(c) => {
                        println!("ok  {kind:?} {}: {} records", path.display(), c.len());
                        for w in c.warnings() {
                            println!("    warning: {w}");
                        }
                    }
                    Err(e) => {
                        failures += 1;
                        println!("err {kind:?} {}: {e}", path.display());
                    }
                }
            }
            if checked == 0 {
                bail!("no corpus files given or configured");
            }
            Ok(status(failures))
        }
        Command::Eval { command } => {
            let text = match command {
                EvalCommand::Agreement {
                    source,
                    categories,
                    format,
                } => {
                    let cats = categories.unwrap_or(cfg.evaluation.categories);
                    reports::agreement(&source.rows()?, cats.into(), format)?
                }
                EvalCommand::Scores { source, format } => reports::scores(&source.rows()?, format)?,
                EvalCommand::Export { store, output } => {
                    let rows = RatingsSource {
                        store: Some(store),
                        ratings: None,
                    }
                    .rows()?;
                    write_ratings_tsv(&rows, open_output(output.as_deref())?)?;
                    return Ok(ExitCode::SUCCESS);
                }
            };
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve(args) => {
            args.backend.apply(&mut cfg);
            if let Some(a) = args.addr {
                cfg.service.addr = a;
            }
            if let Some(s) = args.store {
                cfg.service.store = Some(s);
            }
            cfg.service.study_results.extend(args.study);
            serve(&cfg)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn serve(cfg: &AppConfig) -> Result<()> {
    let engine = Arc::new(Engine::from_config(cfg)?);
    let store = cfg
        .service
        .store
        .clone()
        .context("no annotation store configured (--store)")?;
    let mut annotations = Annotations::open(&store)?;
    for w in annotations.warnings() {
        warn!("{w}");
    }
    for path in &cfg.service.study_results {
        let results = read_results(path)?;
        for r in results {
            annotations.add_result(r, true)?;
        }
    }
    info!(
        items = annotations.study().study_items().len(),
        "study items loaded"
    );
    let token = cfg
        .service
        .token_env
        .as_ref()
        .and_then(|v| std::env::var(v).ok())
        .filter(|t| !t.is_empty());
    let state = Arc::new(AppState {
        engine,
        annotations: Mutex::new(annotations),
        categories: cfg.evaluation.categories.into(),
        token,
    });
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(service::serve(state, &cfg.service.addr))
}
