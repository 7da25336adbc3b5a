//! Run configuration: a TOML file and command-line flags merged over
//! defaults, checked as a whole before anything runs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cruda_core::pipeline::{PlanFormat, DEFAULT_OWNER_ID};
use cruda_core::plan::DEFAULT_MAX_STEPS;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::http_backend::{api_key_var, Provider};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Thor,
    Single,
    Multi,
}

impl PipelineKind {
    pub fn label(self) -> &'static str {
        match self {
            PipelineKind::Thor => "thor",
            PipelineKind::Single => "single",
            PipelineKind::Multi => "multi",
        }
    }

    /// Number of calls per query the pipeline is built for, if fixed.
    pub fn fixed_calls(self) -> Option<usize> {
        match self {
            PipelineKind::Thor => None,
            PipelineKind::Single => Some(1),
            PipelineKind::Multi => Some(2),
        }
    }
}

/// `scripted:FILE` or `http:MODEL`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    Scripted(PathBuf),
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("scripted", f)) if !f.is_empty() => Ok(BackendSpec::Scripted(PathBuf::from(f))),
            Some(("http", m)) if !m.is_empty() => Ok(BackendSpec::Http(m.to_string())),
            _ => Err(format!("backend must be scripted:FILE or http:MODEL, got `{s}`")),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Scripted(p) => write!(f, "scripted:{}", p.display()),
            BackendSpec::Http(m) => write!(f, "http:{m}"),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every setting optional; used for both the config file and the flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub dataset: Option<PathBuf>,
    pub pipeline: Option<PipelineKind>,
    pub backend: Option<BackendSpec>,
    pub model: Option<String>,
    pub schemas: Option<PathBuf>,
    pub repeats: Option<u32>,
    pub max_attempts: Option<u32>,
    pub max_steps: Option<usize>,
    pub plan_format: Option<PlanFormat>,
    pub cost_model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub sim_latency_s: Option<f64>,
    pub realtime: Option<bool>,
    pub owner_id: Option<String>,
    pub max_in_flight: Option<usize>,
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Fields set in `self` win over `lower`.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            dataset: self.dataset.or(lower.dataset),
            pipeline: self.pipeline.or(lower.pipeline),
            backend: self.backend.or(lower.backend),
            model: self.model.or(lower.model),
            schemas: self.schemas.or(lower.schemas),
            repeats: self.repeats.or(lower.repeats),
            max_attempts: self.max_attempts.or(lower.max_attempts),
            max_steps: self.max_steps.or(lower.max_steps),
            plan_format: self.plan_format.or(lower.plan_format),
            cost_model: self.cost_model.or(lower.cost_model),
            out: self.out.or(lower.out),
            parallelism: self.parallelism.or(lower.parallelism),
            sim_latency_s: self.sim_latency_s.or(lower.sim_latency_s),
            realtime: self.realtime.or(lower.realtime),
            owner_id: self.owner_id.or(lower.owner_id),
            max_in_flight: self.max_in_flight.or(lower.max_in_flight),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub pipeline: PipelineKind,
    pub backend: BackendSpec,
    /// Name used for pricing and prompt selection.
    pub model: String,
    pub schemas: Option<PathBuf>,
    pub repeats: u32,
    pub max_attempts: u32,
    pub max_steps: usize,
    pub plan_format: PlanFormat,
    pub cost_model: Option<PathBuf>,
    pub out: PathBuf,
    pub parallelism: usize,
    /// Charged per simulator call, in seconds.
    pub sim_latency_s: f64,
    /// Sleep for scripted latencies instead of only recording them.
    pub realtime: bool,
    pub owner_id: String,
    pub max_in_flight: usize,
}

pub const DEFAULT_REPEATS: u32 = 10;
pub const DEFAULT_SIM_LATENCY_S: f64 = 0.1;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const SCRIPTED_MODEL: &str = "scripted";

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl RunConfig {
    /// Fills defaults. Only the settings without a default can be missing.
    pub fn resolve(layer: ConfigLayer) -> Result<RunConfig, Vec<String>> {
        let mut errors = Vec::new();
        let mut need = |name: &str, present: bool| {
            if !present {
                errors.push(format!("missing required setting `{name}`"));
            }
        };
        need("dataset", layer.dataset.is_some());
        need("pipeline", layer.pipeline.is_some());
        need("backend", layer.backend.is_some());
        need("out", layer.out.is_some());
        if !errors.is_empty() {
            return Err(errors);
        }
        let backend = layer.backend.expect("checked");
        let model = layer.model.unwrap_or_else(|| match &backend {
            BackendSpec::Scripted(_) => SCRIPTED_MODEL.to_string(),
            BackendSpec::Http(m) => m.clone(),
        });
        Ok(RunConfig {
            dataset: layer.dataset.expect("checked"),
            pipeline: layer.pipeline.expect("checked"),
            backend,
            model,
            schemas: layer.schemas,
            repeats: layer.repeats.unwrap_or(DEFAULT_REPEATS),
            max_attempts: layer.max_attempts.unwrap_or(3),
            max_steps: layer.max_steps.unwrap_or(DEFAULT_MAX_STEPS),
            plan_format: layer.plan_format.unwrap_or(PlanFormat::Ir),
            cost_model: layer.cost_model,
            out: layer.out.expect("checked"),
            parallelism: layer.parallelism.unwrap_or_else(default_parallelism),
            sim_latency_s: layer.sim_latency_s.unwrap_or(DEFAULT_SIM_LATENCY_S),
            realtime: layer.realtime.unwrap_or(false),
            owner_id: layer.owner_id.unwrap_or_else(|| DEFAULT_OWNER_ID.to_string()),
            max_in_flight: layer.max_in_flight.unwrap_or(DEFAULT_MAX_IN_FLIGHT),
        })
    }

    /// Pretty JSON with fields in declaration order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_file(errors: &mut Vec<String>, what: &str, p: &Path) {
    if !p.is_file() {
        errors.push(format!("{what} not found: {}", p.display()));
    }
}

/// Every problem with the configuration, not just the first.
pub fn validate_config(c: &RunConfig) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    if c.repeats < 1 {
        errors.push("repeats must be ≥ 1".to_string());
    }
    if c.parallelism < 1 {
        errors.push("parallelism must be ≥ 1".to_string());
    }
    if c.max_attempts < 1 {
        errors.push("max_attempts must be ≥ 1".to_string());
    }
    if c.max_steps < 1 {
        errors.push("max_steps must be ≥ 1".to_string());
    }
    if c.max_in_flight < 1 {
        errors.push("max_in_flight must be ≥ 1".to_string());
    }
    if !(c.sim_latency_s.is_finite() && c.sim_latency_s >= 0.0) {
        errors.push(format!("sim_latency_s must be a non-negative number, got {}", c.sim_latency_s));
    }
    if c.model.trim().is_empty() {
        errors.push("model must not be empty".to_string());
    }
    check_file(&mut errors, "dataset", &c.dataset);
    if let Some(p) = &c.schemas {
        check_file(&mut errors, "schema file", p);
    }
    if let Some(p) = &c.cost_model {
        check_file(&mut errors, "cost model", p);
    }
    match &c.backend {
        BackendSpec::Scripted(p) => check_file(&mut errors, "script", p),
        BackendSpec::Http(m) => {
            if c.model != *m {
                errors.push(format!("model `{}` differs from the http backend model `{m}`", c.model));
            }
            let var = api_key_var(Provider::for_model(m));
            if std::env::var(var).map_or(true, |v| v.is_empty()) {
                errors.push(format!("http backend for {m} needs the {var} environment variable"));
            }
        }
    }
    if c.out.is_file() {
        errors.push(format!("output path is a file: {}", c.out.display()));
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
