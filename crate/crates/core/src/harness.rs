//! Suite bookkeeping and metrics: the run matrix, reliability, two-stage
//! accuracy, latency, cost and latency scaling fits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::backend::{per_thousand, CostError, CostModel, Usage};
use crate::pipeline::PipelineResult;
use crate::schema::Category;

/// One (query, repeat) outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub query_id: String,
    pub repeat: u32,
    /// Software evaluation: every call of the run returned 2xx.
    pub pass: bool,
    pub latency_s: f64,
    pub usage: Usage,
    pub completions: usize,
    pub n_calls: usize,
}

impl Cell {
    pub fn from_result(r: &PipelineResult, n_calls: usize) -> Self {
        Cell {
            query_id: r.query_id.clone(),
            repeat: r.repeat,
            pass: r.success,
            latency_s: r.latency_s(),
            usage: r.usage,
            completions: r.completions(),
            n_calls,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("run matrix has holes: {0:?}")]
    Holes(Vec<(String, u32)>),
    #[error("reliability needs at least 2 repeats, got {0}")]
    TooFewRepeats(u32),
    #[error("cell ({0}, {1}) is outside the matrix")]
    OutOfGrid(String, u32),
    #[error("passing runs without a human verdict: {0:?}")]
    MissingVerdicts(Vec<String>),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("matrix is empty")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMatrix {
    pub pipeline: String,
    pub model: String,
    pub repeats: u32,
    /// Query ids in dataset order.
    pub query_ids: Vec<String>,
    cells: BTreeMap<String, BTreeMap<u32, Cell>>,
}

impl RunMatrix {
    pub fn new(pipeline: &str, model: &str, query_ids: Vec<String>, repeats: u32) -> Self {
        RunMatrix { pipeline: pipeline.into(), model: model.into(), repeats, query_ids, cells: BTreeMap::new() }
    }

    pub fn insert(&mut self, cell: Cell) -> Result<(), MetricsError> {
        if cell.repeat >= self.repeats || !self.query_ids.contains(&cell.query_id) {
            return Err(MetricsError::OutOfGrid(cell.query_id, cell.repeat));
        }
        self.cells.entry(cell.query_id.clone()).or_default().insert(cell.repeat, cell);
        Ok(())
    }

    pub fn get(&self, query_id: &str, repeat: u32) -> Option<&Cell> {
        self.cells.get(query_id)?.get(&repeat)
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.values().flat_map(|row| row.values())
    }

    pub fn holes(&self) -> Vec<(String, u32)> {
        let mut out = Vec::new();
        for q in &self.query_ids {
            for r in 0..self.repeats {
                if self.get(q, r).is_none() {
                    out.push((q.clone(), r));
                }
            }
        }
        out
    }

    pub fn check_complete(&self) -> Result<(), MetricsError> {
        if self.query_ids.is_empty() || self.repeats == 0 {
            return Err(MetricsError::Empty);
        }
        let holes = self.holes();
        if holes.is_empty() {
            Ok(())
        } else {
            Err(MetricsError::Holes(holes))
        }
    }

    /// A query is consistent when its repeats all pass or all fail.
    pub fn is_consistent(&self, query_id: &str) -> bool {
        let mut passes = (0..self.repeats).filter_map(|r| self.get(query_id, r)).map(|c| c.pass);
        match passes.next() {
            Some(first) => passes.all(|p| p == first),
            None => true,
        }
    }

    pub fn fluctuating(&self) -> Vec<&str> {
        self.query_ids.iter().filter(|q| !self.is_consistent(q)).map(String::as_str).collect()
    }
}

/// Consistent queries over all queries, in percent.
pub fn reliability(m: &RunMatrix) -> Result<f64, MetricsError> {
    m.check_complete()?;
    if m.repeats < 2 {
        return Err(MetricsError::TooFewRepeats(m.repeats));
    }
    let consistent = m.query_ids.iter().filter(|q| m.is_consistent(q)).count();
    Ok(percent(consistent, m.query_ids.len()))
}

pub fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 * 100.0 / whole as f64
    }
}

/// Identifies the run a human verdict grades.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunRef {
    pub pipeline: String,
    pub model: String,
    pub query_id: String,
    pub repeat: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanVerdict {
    pub run: RunRef,
    pub function_selection: bool,
    pub task_representation: bool,
    pub structural_integrity: bool,
    pub functional_integrity: bool,
    pub instruction_containment: bool,
    pub evaluator_id: String,
    pub timestamp: String,
}

impl HumanVerdict {
    pub fn all_true(&self) -> bool {
        self.function_selection
            && self.task_representation
            && self.structural_integrity
            && self.functional_integrity
            && self.instruction_containment
    }
}

/// Latest verdict per run; later entries supersede earlier ones.
pub fn latest_verdicts(log: &[HumanVerdict]) -> BTreeMap<RunRef, &HumanVerdict> {
    let mut out = BTreeMap::new();
    for v in log {
        out.insert(v.run.clone(), v);
    }
    out
}

/// The repeat whose outcome counts for accuracy.
pub const DESIGNATED_REPEAT: u32 = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyOutcome {
    pub correct: Vec<String>,
    pub graded: usize,
    pub total: usize,
    /// Passing designated runs without a verdict; only non-empty when
    /// sampled coverage is allowed.
    pub ungraded: Vec<String>,
}

impl AccuracyOutcome {
    /// Percentage over the queries that could be judged.
    pub fn percent(&self) -> f64 {
        percent(self.correct.len(), self.graded)
    }
}

/// Correct = the designated run passed software evaluation and its human
/// verdict has all five criteria true.
pub fn accuracy(
    m: &RunMatrix,
    verdicts: &[HumanVerdict],
    allow_sampled: bool,
) -> Result<AccuracyOutcome, MetricsError> {
    m.check_complete()?;
    let latest = latest_verdicts(verdicts);
    let mut correct = Vec::new();
    let mut ungraded = Vec::new();
    for q in &m.query_ids {
        let cell = m.get(q, DESIGNATED_REPEAT).expect("complete matrix");
        if !cell.pass {
            continue;
        }
        let key = RunRef { pipeline: m.pipeline.clone(), model: m.model.clone(), query_id: q.clone(), repeat: DESIGNATED_REPEAT };
        match latest.get(&key) {
            Some(v) if v.all_true() => correct.push(q.clone()),
            Some(_) => {}
            None => ungraded.push(q.clone()),
        }
    }
    if !ungraded.is_empty() && !allow_sampled {
        return Err(MetricsError::MissingVerdicts(ungraded));
    }
    let total = m.query_ids.len();
    Ok(AccuracyOutcome { correct, graded: total - ungraded.len(), total, ungraded })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingClass {
    Sublinear,
    Linear,
    Superlinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub alpha: f64,
    pub points: Vec<(f64, f64)>,
    pub class: ScalingClass,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ScalingError {
    #[error("need latencies at two or more distinct N, all positive")]
    DegenerateInput,
}

/// Least-squares slope of log(latency) against log(N).
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit, ScalingError> {
    let ok = points.iter().all(|&(n, l)| n > 0.0 && l > 0.0 && n.is_finite() && l.is_finite());
    let distinct: BTreeSet<u64> = points.iter().map(|p| p.0.to_bits()).collect();
    if !ok || distinct.len() < 2 {
        return Err(ScalingError::DegenerateInput);
    }
    let alpha = if let [(n1, l1), (n2, l2)] = points {
        libm::log(l2 / l1) / libm::log(n2 / n1)
    } else {
        let xs: Vec<f64> = points.iter().map(|p| libm::log(p.0)).collect();
        let ys: Vec<f64> = points.iter().map(|p| libm::log(p.1)).collect();
        let k = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    };
    if !alpha.is_finite() {
        return Err(ScalingError::DegenerateInput);
    }
    let class = if alpha < 1.0 {
        ScalingClass::Sublinear
    } else if alpha > 1.0 {
        ScalingClass::Superlinear
    } else {
        ScalingClass::Linear
    };
    Ok(ScalingFit { alpha, points: points.to_vec(), class })
}

/// Relative change from `l1` to `l2`, in percent.
pub fn growth_percent(l1: f64, l2: f64) -> f64 {
    (l2 - l1) / l1 * 100.0
}

/// Signed whole-percent rendering, e.g. "+55%".
pub fn format_growth(pct: f64) -> String {
    let r = libm::round(pct) as i64;
    if r >= 0 {
        format!("+{r}%")
    } else {
        format!("{r}%")
    }
}

pub fn format_pct(p: f64, decimals: usize) -> String {
    format!("{p:.decimals$}%")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset_hash: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pipeline: String,
    pub model: String,
    pub queries: usize,
    pub repeats: u32,
    /// `None` when no run could be graded.
    pub accuracy: Option<f64>,
    pub accuracy_graded: usize,
    pub accuracy_sampled: bool,
    pub reliability: Option<f64>,
    pub mean_latency_s: f64,
    pub cost_per_1000: f64,
    pub mean_completions: f64,
    /// `None` for categories with no queries.
    pub per_category: BTreeMap<Category, Option<f64>>,
    pub fluctuating: Vec<String>,
    pub metadata: ReportMetadata,
}

#[derive(Clone, Debug)]
pub struct MetricsInput<'a> {
    pub categories: &'a BTreeMap<String, Category>,
    pub verdicts: &'a [HumanVerdict],
    pub allow_sampled: bool,
    pub metadata: ReportMetadata,
}

pub fn compute_metrics(m: &RunMatrix, input: &MetricsInput<'_>, cost: &CostModel) -> Result<MetricsReport, MetricsError> {
    m.check_complete()?;
    let acc = accuracy(m, input.verdicts, input.allow_sampled)?;
    let reliability = match reliability(m) {
        Ok(r) => Some(r),
        Err(MetricsError::TooFewRepeats(_)) => None,
        Err(e) => return Err(e),
    };
    let cells: Vec<&Cell> = m.cells().collect();
    let n = cells.len() as f64;
    let mean_latency_s = cells.iter().map(|c| c.latency_s).sum::<f64>() / n;
    let mut cost_sum = 0.0;
    for c in &cells {
        cost_sum += cost.cost_of(&m.model, c.usage)?;
    }
    let mean_completions = cells.iter().map(|c| c.completions as f64).sum::<f64>() / n;

    let correct: BTreeSet<&str> = acc.correct.iter().map(String::as_str).collect();
    let ungraded: BTreeSet<&str> = acc.ungraded.iter().map(String::as_str).collect();
    let mut per_category = BTreeMap::new();
    for cat in Category::ALL {
        let qs: Vec<&String> = m
            .query_ids
            .iter()
            .filter(|q| input.categories.get(*q) == Some(&cat) && !ungraded.contains(q.as_str()))
            .collect();
        let pct = (!qs.is_empty()).then(|| percent(qs.iter().filter(|q| correct.contains(q.as_str())).count(), qs.len()));
        per_category.insert(cat, pct);
    }
    Ok(MetricsReport {
        pipeline: m.pipeline.clone(),
        model: m.model.clone(),
        queries: m.query_ids.len(),
        repeats: m.repeats,
        accuracy: (acc.graded > 0).then(|| acc.percent()),
        accuracy_graded: acc.graded,
        accuracy_sampled: !acc.ungraded.is_empty(),
        reliability,
        mean_latency_s,
        cost_per_1000: per_thousand(cost_sum / n),
        mean_completions,
        per_category,
        fluctuating: m.fluctuating().into_iter().map(String::from).collect(),
        metadata: input.metadata.clone(),
    })
}

/// Latency growth of one system from one-call to two-call queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub system: String,
    pub model: String,
    pub fit: ScalingFit,
    /// Growth between the first two points, in percent.
    pub growth_pct: f64,
}

/// Groups runs into systems (the planner on its own, the two baselines
/// together) and fits latency against the number of calls per query.
pub fn scaling_rows(matrices: &[RunMatrix]) -> Vec<ScalingRow> {
    let mut groups: BTreeMap<(String, String), BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for m in matrices {
        let system = if m.pipeline == "single" || m.pipeline == "multi" { "baseline" } else { m.pipeline.as_str() };
        let by_n = groups.entry((system.to_string(), m.model.clone())).or_default();
        for c in m.cells() {
            let e = by_n.entry(c.n_calls).or_insert((0.0, 0));
            e.0 += c.latency_s;
            e.1 += 1;
        }
    }
    let mut out = Vec::new();
    for ((system, model), by_n) in groups {
        let points: Vec<(f64, f64)> = by_n.iter().map(|(n, (sum, k))| (*n as f64, sum / *k as f64)).collect();
        if let Ok(fit) = fit_scaling(&points) {
            let growth_pct = growth_percent(points[0].1, points[1].1);
            out.push(ScalingRow { system, model, fit, growth_pct });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<MetricsReport>,
    pub scaling: Vec<ScalingRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

fn opt_pct(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".to_string(), |p| format_pct(p, 1))
}

pub fn emit_report(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => markdown(report),
    }
}

fn markdown(report: &Report) -> String {
    let mut s = String::new();
    s.push_str("## Metrics\n\n");
    s.push_str("| Pipeline | Model | Queries | Accuracy | Reliability | Latency (s) | Cost ($/1000 queries) |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for r in &report.runs {
        let acc = match (r.accuracy, r.accuracy_sampled) {
            (Some(a), true) => format!("{} (sampled, {} graded)", format_pct(a, 1), r.accuracy_graded),
            (a, _) => opt_pct(a),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {:.2} | {:.2} |",
            r.pipeline,
            r.model,
            r.queries,
            acc,
            opt_pct(r.reliability),
            r.mean_latency_s,
            r.cost_per_1000
        );
    }
    s.push_str("\n## Accuracy by category\n\n| Pipeline | Model |");
    for c in Category::ALL {
        let _ = write!(s, " {c} |");
    }
    s.push_str("\n|---|---|");
    for _ in Category::ALL {
        s.push_str("---|");
    }
    s.push('\n');
    for r in &report.runs {
        let _ = write!(s, "| {} | {} |", r.pipeline, r.model);
        for c in Category::ALL {
            let _ = write!(s, " {} |", opt_pct(r.per_category.get(&c).copied().flatten()));
        }
        s.push('\n');
    }
    if !report.scaling.is_empty() {
        s.push_str("\n## Latency scaling\n\n");
        s.push_str("| System | Model | Latency N=1 (s) | Latency N=2 (s) | Growth | Alpha | Class |\n");
        s.push_str("|---|---|---|---|---|---|---|\n");
        for row in &report.scaling {
            let p = &row.fit.points;
            let class = match row.fit.class {
                ScalingClass::Sublinear => "sublinear",
                ScalingClass::Linear => "linear",
                ScalingClass::Superlinear => "superlinear",
            };
            let _ = writeln!(
                s,
                "| {} | {} | {:.2} | {:.2} | {} | {:.3} | {} |",
                row.system,
                row.model,
                p[0].1,
                p[1].1,
                format_growth(row.growth_pct),
                row.fit.alpha,
                class
            );
        }
    }
    s
}
