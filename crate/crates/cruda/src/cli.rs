//! Command-line entry point. `main_with_args` returns the process exit code:
//! 0 on success, 1 when the work itself fails, 2 for bad usage.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use cruda_core::backend::{Backend, Clock, ScriptedBackend, ZeroClock};
use cruda_core::baseline::{MultiApi, SingleApi};
use cruda_core::dataset::{parse_dataset, QueryRecord};
use cruda_core::harness::{emit_report, ReportFormat};
use cruda_core::pipeline::{PlanFormat, Pipeline, Thor, ThorConfig};
use cruda_core::schema::{builtin_registry, Registry};
use cruda_core::sim::{CrmSim, Fixture};

use crate::config::{sha256_hex, validate_config, BackendSpec, ConfigLayer, PipelineKind, RunConfig};
use crate::eval::{blind_shuffle, EvalService};
use crate::http_backend::HttpBackend;
use crate::runner::{
    build_report, load_runs, read_cost_model, read_verdicts, run_suite, write_run, Realtime, ReportOptions,
    RunManifest, SuiteOptions, WallClock, CONFIG_FILE, COST_FILE, VERDICTS_FILE,
};
use crate::{golden, sim_server};

#[derive(Parser, Debug)]
#[command(name = "cruda", version, about = "CRM tool-use benchmark: planner pipeline, baselines, simulator and grading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// CRM simulator.
    Sim {
        #[command(subcommand)]
        command: SimCommand,
    },
    /// Benchmark runs and reports.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Dataset checks and the bundled corpus.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Blind human grading.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Subcommand, Debug)]
enum SimCommand {
    /// Serve the simulator over HTTP.
    Serve {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long)]
        schemas: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8099)]
        port: u16,
    },
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Run one pipeline over a dataset.
    Run(RunArgs),
    /// Metrics for one or more run directories.
    Report {
        /// A run directory or a directory of runs.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_enum, default_value = "md")]
        format: FormatArg,
        /// Verdict log; defaults to verdicts.jsonl under --runs.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        /// Prices for every run instead of each run's own copy.
        #[arg(long)]
        cost_model: Option<PathBuf>,
        /// Report accuracy over the graded subset when verdicts are missing.
        #[arg(long)]
        allow_sampled: bool,
    },
    /// Check a dataset file.
    Dataset {
        #[command(subcommand)]
        command: DatasetValidate,
    },
}

#[derive(Subcommand, Debug)]
enum DatasetValidate {
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct ValidateArgs {
    file: PathBuf,
    #[arg(long)]
    schemas: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum DatasetCommand {
    /// Check a dataset file and the fixtures it names.
    Validate(ValidateArgs),
    /// Write the bundled corpus, schemas, seed fixture and scripts.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// Serve passing runs for blind grading.
    Serve {
        /// A run directory or a directory of runs.
        #[arg(long)]
        runs: PathBuf,
        /// Verdict log; defaults to verdicts.jsonl under --runs.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[arg(long, env = "CRUDA_EVAL_TOKEN", hide_env_values = true)]
        token: Option<String>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8098)]
        port: u16,
        #[arg(long, default_value_t = 600)]
        lease_secs: u64,
        /// Seeds item tokens and per-session orders.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory holding an index.html to serve at /.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum FormatArg {
    Md,
    Json,
}

fn parse_plan_format(s: &str) -> Result<PlanFormat, String> {
    match s {
        "ir" => Ok(PlanFormat::Ir),
        "json" => Ok(PlanFormat::Json),
        _ => Err(format!("expected ir or json, got `{s}`")),
    }
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML file with any of the settings below; flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pipeline: Option<PipelineKind>,
    /// scripted:FILE or http:MODEL
    #[arg(long)]
    backend: Option<BackendSpec>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    schemas: Option<PathBuf>,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    max_attempts: Option<u32>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, value_parser = parse_plan_format)]
    plan_format: Option<PlanFormat>,
    #[arg(long)]
    cost_model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    sim_latency_s: Option<f64>,
    /// Sleep for scripted and simulator latencies.
    #[arg(long)]
    realtime: bool,
    #[arg(long)]
    owner_id: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

impl RunArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            dataset: self.dataset.clone(),
            pipeline: self.pipeline,
            backend: self.backend.clone(),
            model: self.model.clone(),
            schemas: self.schemas.clone(),
            repeats: self.repeats,
            max_attempts: self.max_attempts,
            max_steps: self.max_steps,
            plan_format: self.plan_format,
            cost_model: self.cost_model.clone(),
            out: self.out.clone(),
            parallelism: self.parallelism,
            sim_latency_s: self.sim_latency_s,
            realtime: self.realtime.then_some(true),
            owner_id: self.owner_id.clone(),
            max_in_flight: self.max_in_flight,
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Sim { command: SimCommand::Serve { fixture, schemas, host, port } } => {
            sim_serve(&fixture, schemas.as_deref(), &host, port)
        }
        Command::Bench { command } => match command {
            BenchCommand::Run(args) => bench_run(&args),
            BenchCommand::Report { runs, format, verdicts, cost_model, allow_sampled } => {
                bench_report(&runs, format, verdicts.as_deref(), cost_model.as_deref(), allow_sampled)
            }
            BenchCommand::Dataset { command: DatasetValidate::Validate(a) } => {
                dataset_validate(&a.file, a.schemas.as_deref())
            }
        },
        Command::Dataset { command } => match command {
            DatasetCommand::Validate(a) => dataset_validate(&a.file, a.schemas.as_deref()),
            DatasetCommand::Generate { out } => dataset_generate(&out),
        },
        Command::Eval {
            command: EvalCommand::Serve { runs, verdicts, token, host, port, lease_secs, seed, ui },
        } => eval_serve(EvalArgs { runs, verdicts, token, host, port, lease_secs, seed, ui }),
    }
}

fn load_registry(schemas: Option<&Path>) -> anyhow::Result<Registry> {
    match schemas {
        None => Ok(builtin_registry()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("schema file not found: {}", p.display()))?;
            Registry::from_json(&text).map_err(|e| anyhow!("{}: {e}", p.display()))
        }
    }
}

fn load_dataset(path: &Path, registry: &Registry) -> anyhow::Result<(Vec<QueryRecord>, String)> {
    let bytes = fs::read(path).map_err(|_| anyhow!("dataset not found: {}", path.display()))?;
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let records = parse_dataset(&text, registry).map_err(|e| anyhow!("{}:\n{e}", path.display()))?;
    Ok((records, sha256_hex(text.as_bytes())))
}

/// Every fixture the dataset names, read relative to the dataset file.
fn load_fixtures(
    dataset: &Path,
    records: &[QueryRecord],
    registry: &Registry,
) -> anyhow::Result<BTreeMap<String, Fixture>> {
    let base = dataset.parent().unwrap_or(Path::new("."));
    let mut out = BTreeMap::new();
    for r in records {
        if out.contains_key(&r.fixture) {
            continue;
        }
        let p = base.join(&r.fixture);
        let text = fs::read_to_string(&p)
            .map_err(|_| anyhow!("fixture not found: {} (named by query {})", p.display(), r.id))?;
        let fx: Fixture = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        CrmSim::from_fixture(registry.clone(), fx.clone()).map_err(|e| anyhow!("{}: {e}", p.display()))?;
        out.insert(r.fixture.clone(), fx);
    }
    Ok(out)
}

fn dataset_validate(file: &Path, schemas: Option<&Path>) -> anyhow::Result<()> {
    let registry = load_registry(schemas)?;
    let (records, hash) = load_dataset(file, &registry)?;
    let fixtures = load_fixtures(file, &records, &registry)?;
    println!("ok: {} records, {} fixture(s), sha256 {hash}", records.len(), fixtures.len());
    Ok(())
}

fn dataset_generate(out: &Path) -> anyhow::Result<()> {
    let registry = builtin_registry();
    let corpus = golden::build(&registry).map_err(|e| anyhow!("building corpus: {e}"))?;
    for (rel, content) in golden::files(&registry, &corpus, golden::EXAMPLE_PRICES) {
        let p = out.join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&p, content).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn config_errors(errors: Vec<String>) -> anyhow::Error {
    anyhow!("invalid configuration:\n  {}", errors.join("\n  "))
}

fn bench_run(args: &RunArgs) -> anyhow::Result<()> {
    let file_layer = match &args.config {
        None => ConfigLayer::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|_| anyhow!("config file not found: {}", p.display()))?;
            ConfigLayer::from_toml(&text).map_err(|e| anyhow!("{}: {e}", p.display()))?
        }
    };
    let config = RunConfig::resolve(args.layer().over(file_layer)).map_err(config_errors)?;
    validate_config(&config).map_err(config_errors)?;

    let cost = config.cost_model.as_deref().map(read_cost_model).transpose()?;
    if let Some(c) = &cost {
        if !c.models.contains_key(&config.model) {
            bail!("cost model has no price for model {}", config.model);
        }
    }
    let registry = load_registry(config.schemas.as_deref())?;
    let (records, dataset_hash) = load_dataset(&config.dataset, &registry)?;
    if let Some(n) = config.pipeline.fixed_calls() {
        if let Some(q) = records.iter().find(|q| q.n_calls != n) {
            bail!(
                "the {} pipeline handles {n}-call queries only; query {} needs {}",
                config.pipeline.label(),
                q.id,
                q.n_calls
            );
        }
    }
    let fixtures = load_fixtures(&config.dataset, &records, &registry)?;

    let scripted = matches!(config.backend, BackendSpec::Scripted(_));
    let backend: Box<dyn Backend + Send + Sync> = match &config.backend {
        BackendSpec::Scripted(p) => {
            let text = fs::read_to_string(p).map_err(|_| anyhow!("script not found: {}", p.display()))?;
            let b = ScriptedBackend::from_jsonl(&config.model, &text).map_err(|e| anyhow!("{}: {e}", p.display()))?;
            if config.realtime {
                Box::new(Realtime(b))
            } else {
                Box::new(b)
            }
        }
        BackendSpec::Http(m) => {
            Box::new(HttpBackend::from_env(m, config.max_in_flight).map_err(|e| anyhow!("{e}"))?)
        }
    };
    let backend: &dyn Backend = backend.as_ref();
    let pipeline: Box<dyn Pipeline + Sync + '_> = match config.pipeline {
        PipelineKind::Thor => Box::new(Thor::with_config(
            backend,
            registry.clone(),
            ThorConfig {
                max_attempts: config.max_attempts,
                max_steps: config.max_steps,
                plan_format: config.plan_format,
                owner_id: config.owner_id.clone(),
            },
        )),
        PipelineKind::Single => {
            let mut p = SingleApi::new(backend, registry.clone());
            p.owner_id = config.owner_id.clone();
            Box::new(p)
        }
        PipelineKind::Multi => {
            let mut p = MultiApi::new(backend, registry.clone());
            p.owner_id = config.owner_id.clone();
            Box::new(p)
        }
    };
    let clock: Box<dyn Clock> =
        if scripted && !config.realtime { Box::new(ZeroClock) } else { Box::new(WallClock::new()) };
    let opts = SuiteOptions {
        repeats: config.repeats,
        parallelism: config.parallelism,
        sim_latency_s: config.sim_latency_s,
        realtime: config.realtime,
    };
    let run = run_suite(pipeline.as_ref(), &records, &fixtures, &registry, &opts, clock.as_ref())?;

    let manifest = RunManifest::new(&run, &records, &dataset_hash, &config.hash());
    write_run(&config.out, &manifest, &run.results)?;
    fs::write(config.out.join(CONFIG_FILE), config.canonical_json())?;
    if let Some(p) = &config.cost_model {
        fs::copy(p, config.out.join(COST_FILE)).with_context(|| format!("copying {}", p.display()))?;
    }
    let passed = run.results.iter().filter(|r| r.success).count();
    println!(
        "{} / {}: {} queries x {} repeats, {passed}/{} runs passed; written to {}",
        manifest.pipeline,
        manifest.model,
        records.len(),
        config.repeats,
        run.results.len(),
        config.out.display()
    );
    Ok(())
}

fn bench_report(
    runs: &Path,
    format: FormatArg,
    verdicts: Option<&Path>,
    cost_model: Option<&Path>,
    allow_sampled: bool,
) -> anyhow::Result<()> {
    if !runs.exists() {
        bail!("runs not found: {}", runs.display());
    }
    let loaded = load_runs(runs)?;
    let verdict_path = verdicts.map(Path::to_path_buf).unwrap_or_else(|| runs.join(VERDICTS_FILE));
    if verdicts.is_some() && !verdict_path.is_file() {
        bail!("verdict log not found: {}", verdict_path.display());
    }
    let opts = ReportOptions {
        verdicts: read_verdicts(&verdict_path)?,
        allow_sampled,
        cost_model: cost_model.map(read_cost_model).transpose()?,
    };
    let report = build_report(&loaded, &opts)?;
    let format = match format {
        FormatArg::Md => ReportFormat::Markdown,
        FormatArg::Json => ReportFormat::Json,
    };
    let mut out = std::io::stdout().lock();
    out.write_all(emit_report(&report, format).as_bytes())?;
    Ok(())
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting async runtime")
}

async fn serve(router: axum::Router, host: &str, port: u16, banner: impl FnOnce(SocketAddr) -> String) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .with_context(|| format!("binding {host}:{port}"))?;
    let addr = listener.local_addr()?;
    // A closed stdout must not take the server down with it.
    let mut out = std::io::stdout().lock();
    let _ = write!(out, "listening on http://{addr}\n{}", banner(addr));
    let _ = out.flush();
    drop(out);
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn sim_serve(fixture: &Path, schemas: Option<&Path>, host: &str, port: u16) -> anyhow::Result<()> {
    let registry = load_registry(schemas)?;
    let text = fs::read_to_string(fixture).map_err(|_| anyhow!("fixture not found: {}", fixture.display()))?;
    let sim = CrmSim::from_json(registry, &text).map_err(|e| anyhow!("{}: {e}", fixture.display()))?;
    let router = sim_server::router(Arc::new(Mutex::new(sim)));
    runtime()?.block_on(serve(router, host, port, |addr| sim_server::endpoint_table(&format!("http://{addr}"))))
}

struct EvalArgs {
    runs: PathBuf,
    verdicts: Option<PathBuf>,
    token: Option<String>,
    host: String,
    port: u16,
    lease_secs: u64,
    seed: Option<u64>,
    ui: Option<PathBuf>,
}

fn eval_serve(a: EvalArgs) -> anyhow::Result<()> {
    let token = a.token.filter(|t| !t.is_empty()).ok_or_else(|| anyhow!("a bearer token is required: pass --token or set CRUDA_EVAL_TOKEN"))?;
    if !a.runs.exists() {
        bail!("runs not found: {}", a.runs.display());
    }
    let runs = load_runs(&a.runs)?;
    let log = a.verdicts.unwrap_or_else(|| a.runs.join(VERDICTS_FILE));
    let seed = a.seed.unwrap_or_else(rand::random);
    let mut queue = blind_shuffle(&runs, seed, Duration::from_secs(a.lease_secs)).map_err(|e| anyhow!("{e}"))?;
    queue.resume(&read_verdicts(&log)?);
    let ui = match &a.ui {
        None => None,
        Some(dir) => {
            let p = dir.join("index.html");
            Some(fs::read_to_string(&p).map_err(|_| anyhow!("UI not found: {}", p.display()))?)
        }
    };
    let progress = queue.progress();
    let service = Arc::new(EvalService { queue: Mutex::new(queue), token, log: log.clone(), ui });
    runtime()?.block_on(serve(crate::eval::router(service), &a.host, a.port, |_| {
        format!(
            "  {} of {} items graded; verdicts append to {}\n  GET /eval/next  POST /eval/verdict  GET /eval/progress\n",
            progress.graded,
            progress.total,
            log.display()
        )
    }))
}
