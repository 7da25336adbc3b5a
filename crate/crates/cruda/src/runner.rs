//! Suite execution over a bounded worker pool, and the on-disk run logs the
//! report and the evaluation service read back.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use cruda_core::backend::{Backend, BackendError, Clock, Completion, CostModel, PromptBundle};
use cruda_core::dataset::QueryRecord;
use cruda_core::harness::{
    compute_metrics, scaling_rows, Cell, HumanVerdict, MetricsError, MetricsInput, Report, ReportMetadata, RunMatrix,
};
use cruda_core::pipeline::{Pipeline, PipelineResult, SimClient};
use cruda_core::schema::{ApiCall, Category, Registry};
use cruda_core::sim::{ApiResponse, CrmClient, CrmSim, Fixture};
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "run.json";
pub const CELLS_FILE: &str = "cells.jsonl";
pub const COST_FILE: &str = "cost-model.toml";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";

/// Elapsed real time since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn sleep_s(s: f64) {
    if s > 0.0 && s.is_finite() {
        std::thread::sleep(Duration::from_secs_f64(s));
    }
}

/// Makes scripted latencies real by sleeping for them.
pub struct Realtime<B>(pub B);

impl<B: Backend> Backend for Realtime<B> {
    fn model(&self) -> &str {
        self.0.model()
    }

    fn complete(&self, prompt: &PromptBundle) -> Result<Completion, BackendError> {
        let c = self.0.complete(prompt)?;
        sleep_s(c.latency_s);
        Ok(c)
    }
}

struct CellClient {
    inner: SimClient,
    realtime: bool,
}

impl CrmClient for CellClient {
    fn execute(&mut self, call: &ApiCall) -> (ApiResponse, f64) {
        let (resp, latency) = self.inner.execute(call);
        if self.realtime {
            sleep_s(latency);
        }
        (resp, latency)
    }
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub repeats: u32,
    pub parallelism: usize,
    pub sim_latency_s: f64,
    pub realtime: bool,
}

pub struct SuiteRun {
    pub matrix: RunMatrix,
    /// In (query, repeat) order.
    pub results: Vec<PipelineResult>,
}

/// Runs every (query, repeat) cell on a freshly reset simulator. Pipeline
/// failures become failing cells; only a missing fixture aborts.
pub fn run_suite(
    pipeline: &dyn Pipeline,
    queries: &[QueryRecord],
    fixtures: &BTreeMap<String, Fixture>,
    registry: &Registry,
    opts: &SuiteOptions,
    clock: &dyn Clock,
) -> anyhow::Result<SuiteRun> {
    for q in queries {
        if !fixtures.contains_key(&q.fixture) {
            bail!("query {} needs fixture {} which was not loaded", q.id, q.fixture);
        }
    }
    let repeats = opts.repeats;
    let total = queries.len() * repeats as usize;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<PipelineResult>>> = Mutex::new(vec![None; total]);
    std::thread::scope(|s| {
        for _ in 0..opts.parallelism.max(1).min(total.max(1)) {
            s.spawn(|| {
                let mut clients: BTreeMap<&str, CellClient> = BTreeMap::new();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= total {
                        break;
                    }
                    let q = &queries[i / repeats as usize];
                    let repeat = (i % repeats as usize) as u32;
                    let client = clients.entry(q.fixture.as_str()).or_insert_with(|| CellClient {
                        inner: SimClient {
                            sim: CrmSim::from_fixture(registry.clone(), fixtures[&q.fixture].clone())
                                .expect("fixture validated on load"),
                            latency_s: opts.sim_latency_s,
                        },
                        realtime: opts.realtime,
                    });
                    client.inner.sim.reset();
                    let r = pipeline.run(q, repeat, client, clock);
                    slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
                }
            });
        }
    });
    let results: Vec<PipelineResult> =
        slots.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().map(|r| r.expect("every cell ran")).collect();
    let ids = queries.iter().map(|q| q.id.clone()).collect();
    let mut matrix = RunMatrix::new(pipeline.label(), pipeline.model(), ids, repeats);
    for (i, r) in results.iter().enumerate() {
        matrix.insert(Cell::from_result(r, queries[i / repeats as usize].n_calls))?;
    }
    Ok(SuiteRun { matrix, results })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryMeta {
    pub id: String,
    pub text: String,
    pub category: Category,
    pub n_calls: usize,
}

/// `run.json`: what a run directory holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub pipeline: String,
    pub model: String,
    pub repeats: u32,
    pub queries: Vec<QueryMeta>,
    pub dataset_hash: String,
    pub config_hash: String,
}

impl RunManifest {
    pub fn new(run: &SuiteRun, queries: &[QueryRecord], dataset_hash: &str, config_hash: &str) -> Self {
        RunManifest {
            pipeline: run.matrix.pipeline.clone(),
            model: run.matrix.model.clone(),
            repeats: run.matrix.repeats,
            queries: queries
                .iter()
                .map(|q| QueryMeta { id: q.id.clone(), text: q.text.clone(), category: q.category, n_calls: q.n_calls })
                .collect(),
            dataset_hash: dataset_hash.into(),
            config_hash: config_hash.into(),
        }
    }
}

pub fn write_run(dir: &Path, manifest: &RunManifest, results: &[PipelineResult]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)? + "\n")?;
    let mut cells = String::new();
    for r in results {
        cells.push_str(&serde_json::to_string(r)?);
        cells.push('\n');
    }
    fs::write(dir.join(CELLS_FILE), cells)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub results: Vec<PipelineResult>,
}

impl LoadedRun {
    pub fn matrix(&self) -> Result<RunMatrix, MetricsError> {
        let ids = self.manifest.queries.iter().map(|q| q.id.clone()).collect();
        let n: BTreeMap<&str, usize> = self.manifest.queries.iter().map(|q| (q.id.as_str(), q.n_calls)).collect();
        let mut m = RunMatrix::new(&self.manifest.pipeline, &self.manifest.model, ids, self.manifest.repeats);
        for r in &self.results {
            m.insert(Cell::from_result(r, n.get(r.query_id.as_str()).copied().unwrap_or(0)))?;
        }
        Ok(m)
    }

    pub fn categories(&self) -> BTreeMap<String, Category> {
        self.manifest.queries.iter().map(|q| (q.id.clone(), q.category)).collect()
    }
}

pub fn load_run(dir: &Path) -> anyhow::Result<LoadedRun> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: RunManifest = serde_json::from_str(
        &fs::read_to_string(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?,
    )
    .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let cells_path = dir.join(CELLS_FILE);
    let text = fs::read_to_string(&cells_path).with_context(|| format!("reading {}", cells_path.display()))?;
    let mut results = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        results.push(
            serde_json::from_str(line).with_context(|| format!("{} line {}", cells_path.display(), i + 1))?,
        );
    }
    Ok(LoadedRun { dir: dir.to_path_buf(), manifest, results })
}

/// `dir` itself when it is a run directory, otherwise its run
/// subdirectories in name order.
pub fn find_runs(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    out.sort();
    if out.is_empty() {
        bail!("no runs found under {}", dir.display());
    }
    Ok(out)
}

pub fn load_runs(dir: &Path) -> anyhow::Result<Vec<LoadedRun>> {
    find_runs(dir)?.iter().map(|d| load_run(d)).collect()
}

pub fn read_verdicts(path: &Path) -> anyhow::Result<Vec<HumanVerdict>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

pub fn read_cost_model(path: &Path) -> anyhow::Result<CostModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: CostModel = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    m.check()?;
    Ok(m)
}

pub struct ReportOptions {
    pub verdicts: Vec<HumanVerdict>,
    pub allow_sampled: bool,
    /// Used for every run; otherwise each run's own copy is read.
    pub cost_model: Option<CostModel>,
}

pub fn build_report(runs: &[LoadedRun], opts: &ReportOptions) -> anyhow::Result<Report> {
    let mut reports = Vec::new();
    let mut matrices = Vec::new();
    for run in runs {
        let m = run.matrix().with_context(|| format!("run {}", run.dir.display()))?;
        let cost = match &opts.cost_model {
            Some(c) => c.clone(),
            None => read_cost_model(&run.dir.join(COST_FILE))?,
        };
        let categories = run.categories();
        let input = MetricsInput {
            categories: &categories,
            verdicts: &opts.verdicts,
            allow_sampled: opts.allow_sampled,
            metadata: ReportMetadata {
                dataset_hash: run.manifest.dataset_hash.clone(),
                config_hash: run.manifest.config_hash.clone(),
            },
        };
        reports.push(compute_metrics(&m, &input, &cost).with_context(|| format!("run {}", run.dir.display()))?);
        matrices.push(m);
    }
    Ok(Report { runs: reports, scaling: scaling_rows(&matrices) })
}
