//! Chat-completion contract, the scripted backend used for deterministic
//! runs, token estimates, pricing and latency accounting.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }
}

/// One model request. `stage`, `attempt` and `repeat` identify the request
/// within a run so scripted responses can be looked up by key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub query_id: String,
    pub stage: String,
    pub attempt: u32,
    pub repeat: u32,
    pub messages: Vec<Message>,
}

impl PromptBundle {
    pub fn text_len(&self) -> usize {
        self.messages.iter().map(|m| m.content.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Seconds.
    pub latency_s: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("no scripted response for query {query_id}, stage {stage}, attempt {attempt}, repeat {repeat}")]
    MissingScript { query_id: String, stage: String, attempt: u32, repeat: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("bad script line {line}: {message}")]
    BadScript { line: usize, message: String },
}

pub trait Backend: Send + Sync {
    /// Model name used for pricing and prompt selection.
    fn model(&self) -> &str;
    fn complete(&self, prompt: &PromptBundle) -> Result<Completion, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn model(&self) -> &str {
        (**self).model()
    }

    fn complete(&self, prompt: &PromptBundle) -> Result<Completion, BackendError> {
        (**self).complete(prompt)
    }
}

/// Rough token count: one token per four bytes, rounded up. Only used when
/// no provider-reported usage exists.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptLine {
    pub query_id: String,
    pub stage: String,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<u32>,
    pub response: String,
    #[serde(default)]
    pub latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
}

type ScriptKey = (String, String, u32, Option<u32>);

/// Replays canned responses keyed by (query, stage, attempt). An entry that
/// also names a repeat overrides the generic entry for that repeat only.
#[derive(Clone, Debug, Default)]
pub struct ScriptedBackend {
    model: String,
    entries: BTreeMap<ScriptKey, ScriptLine>,
}

impl ScriptedBackend {
    pub fn new(model: &str) -> Self {
        ScriptedBackend { model: model.to_string(), entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, line: ScriptLine) -> Result<(), BackendError> {
        let key = (line.query_id.clone(), line.stage.clone(), line.attempt, line.repeat);
        if self.entries.contains_key(&key) {
            return Err(BackendError::BadScript {
                line: self.entries.len() + 1,
                message: format!(
                    "duplicate key ({}, {}, {}, {:?})",
                    line.query_id, line.stage, line.attempt, line.repeat
                ),
            });
        }
        if !(line.latency_s >= 0.0) {
            return Err(BackendError::BadScript {
                line: self.entries.len() + 1,
                message: "latency_s must be a non-negative number".into(),
            });
        }
        self.entries.insert(key, line);
        Ok(())
    }

    pub fn from_lines(model: &str, lines: impl IntoIterator<Item = ScriptLine>) -> Result<Self, BackendError> {
        let mut b = Self::new(model);
        for l in lines {
            b.insert(l)?;
        }
        Ok(b)
    }

    /// Parses a JSONL script. Blank lines are skipped.
    pub fn from_jsonl(model: &str, text: &str) -> Result<Self, BackendError> {
        let mut b = Self::new(model);
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: ScriptLine = serde_json::from_str(raw)
                .map_err(|e| BackendError::BadScript { line: i + 1, message: e.to_string() })?;
            b.insert(line).map_err(|e| match e {
                BackendError::BadScript { message, .. } => BackendError::BadScript { line: i + 1, message },
                other => other,
            })?;
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lines(&self) -> impl Iterator<Item = &ScriptLine> {
        self.entries.values()
    }

    pub fn merge(&mut self, other: ScriptedBackend) -> Result<(), BackendError> {
        for l in other.entries.into_values() {
            self.insert(l)?;
        }
        Ok(())
    }
}

impl Backend for ScriptedBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, p: &PromptBundle) -> Result<Completion, BackendError> {
        let specific = (p.query_id.clone(), p.stage.clone(), p.attempt, Some(p.repeat));
        let generic = (p.query_id.clone(), p.stage.clone(), p.attempt, None);
        let line = self
            .entries
            .get(&specific)
            .or_else(|| self.entries.get(&generic))
            .ok_or_else(|| BackendError::MissingScript {
                query_id: p.query_id.clone(),
                stage: p.stage.clone(),
                attempt: p.attempt,
                repeat: p.repeat,
            })?;
        let prompt_tokens: u64 = p.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
        Ok(Completion {
            text: line.response.clone(),
            input_tokens: line.input_tokens.unwrap_or(prompt_tokens),
            output_tokens: line.output_tokens.unwrap_or_else(|| estimate_tokens(&line.response)),
            latency_s: line.latency_s,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    pub fn add(&mut self, c: &Completion) {
        self.input_tokens += c.input_tokens;
        self.output_tokens += c.output_tokens;
    }
}

/// Prices in currency per million tokens.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(default)]
    pub models: BTreeMap<String, Price>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("no price configured for model {0}")]
    UnknownModel(String),
    #[error("price for model {0} is negative")]
    NegativePrice(String),
}

impl CostModel {
    pub fn with_price(mut self, model: &str, input_per_million: f64, output_per_million: f64) -> Self {
        self.models.insert(model.to_string(), Price { input_per_million, output_per_million });
        self
    }

    pub fn check(&self) -> Result<(), CostError> {
        for (name, p) in &self.models {
            if !(p.input_per_million >= 0.0 && p.output_per_million >= 0.0) {
                return Err(CostError::NegativePrice(name.clone()));
            }
        }
        Ok(())
    }

    pub fn cost_of(&self, model: &str, usage: Usage) -> Result<f64, CostError> {
        let p = self.models.get(model).ok_or_else(|| CostError::UnknownModel(model.to_string()))?;
        Ok(usage.input_tokens as f64 * p.input_per_million / 1e6
            + usage.output_tokens as f64 * p.output_per_million / 1e6)
    }
}

/// Mean per-query cost scaled to cost per 1000 queries.
pub fn per_thousand(mean_per_query: f64) -> f64 {
    mean_per_query * 1000.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyKind {
    Completion { stage: String },
    Execution { step: usize },
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyEntry {
    #[serde(flatten)]
    pub kind: LatencyKind,
    pub seconds: f64,
}

/// Everything a run spent time on. The total is the reported latency.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyLedger {
    pub entries: Vec<LatencyEntry>,
}

impl LatencyLedger {
    pub fn completion(&mut self, stage: &str, seconds: f64) {
        self.entries.push(LatencyEntry { kind: LatencyKind::Completion { stage: stage.to_string() }, seconds });
    }

    pub fn execution(&mut self, step: usize, seconds: f64) {
        self.entries.push(LatencyEntry { kind: LatencyKind::Execution { step }, seconds });
    }

    pub fn local(&mut self, seconds: f64) {
        self.entries.push(LatencyEntry { kind: LatencyKind::Local, seconds: seconds.max(0.0) });
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.seconds).sum()
    }

    pub fn completions(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e.kind, LatencyKind::Completion { .. })).count()
    }

    pub fn executions(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e.kind, LatencyKind::Execution { .. })).count()
    }

    pub fn local_total(&self) -> f64 {
        self.entries.iter().filter(|e| e.kind == LatencyKind::Local).map(|e| e.seconds).sum()
    }
}

/// Monotonic time source in seconds.
pub trait Clock: Sync {
    fn now_s(&self) -> f64;
}

/// Reports no elapsed time, making ledgers exact.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroClock;

impl Clock for ZeroClock {
    fn now_s(&self) -> f64 {
        0.0
    }
}
