//! Comparison pipelines: one retrieved tool call per query, and a
//! split/generate/rewrite/generate chain for two-call queries. Neither gets
//! a validator.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};

use crate::backend::{Backend, Clock, Message};
use crate::dataset::QueryRecord;
use crate::pipeline::{Failure, Pipeline, PipelineResult, Trace, DEFAULT_OWNER_ID};
use crate::schema::{ApiCall, FunctionSchema, ParamKind, ParamSpec, Registry};
use crate::sim::CrmClient;

pub const SINGLE_CLAUDE_PROMPT: &str = include_str!("../assets/single_claude.txt");
pub const SINGLE_GPT_PROMPT: &str = include_str!("../assets/single_gpt.txt");
pub const SINGLE_EXAMPLE: &str = include_str!("../assets/single_example.txt");
pub const MULTI_SPLIT_PROMPT: &str = include_str!("../assets/multi_split.txt");
pub const MULTI_REWRITE_PROMPT: &str = include_str!("../assets/multi_rewrite.txt");

pub const DEFAULT_K: usize = 5;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "of", "to", "in", "on", "for", "with", "by", "is", "are", "be", "it", "its", "all",
    "that", "this", "from", "as", "at", "my", "me", "i", "named", "name",
];

fn stem(w: &str) -> String {
    if let Some(s) = w.strip_suffix("ies") {
        if s.len() >= 2 {
            return format!("{s}y");
        }
    }
    match w.strip_suffix('s') {
        Some(s) if s.len() >= 3 && !s.ends_with('s') => s.to_string(),
        _ => w.to_string(),
    }
}

/// Lowercased word stems, without stopwords.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .map(|w| stem(&w))
        .collect()
}

fn relevance(query: &BTreeSet<String>, schema: &FunctionSchema) -> usize {
    let doc = tokens(&format!("{} {}", schema.name, schema.description));
    query.intersection(&doc).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub ranked: Vec<FunctionSchema>,
    pub gold_included: bool,
}

impl RetrievalResult {
    pub fn names(&self) -> Vec<&str> {
        self.ranked.iter().map(|s| s.name.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RetrievalError {
    #[error("gold function `{0}` is not registered")]
    UnknownGold(String),
}

/// Top `k` schemas by token overlap with the query, ties broken by name. The
/// gold schema replaces the last slot when it did not make the cut.
pub fn retrieve_top_k(
    query_id: &str,
    text: &str,
    registry: &Registry,
    gold: &str,
    k: usize,
) -> Result<RetrievalResult, RetrievalError> {
    let gold_schema = registry.get(gold).ok_or_else(|| RetrievalError::UnknownGold(gold.into()))?;
    let q = tokens(text);
    let mut scored: Vec<(usize, &FunctionSchema)> = registry.iter().map(|s| (relevance(&q, s), s)).collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.name.cmp(&b.1.name)));
    let mut ranked: Vec<FunctionSchema> = scored.into_iter().take(k).map(|(_, s)| s.clone()).collect();
    if k > 0 && !ranked.iter().any(|s| s.name == gold) {
        ranked.pop();
        ranked.push(gold_schema.clone());
    }
    let gold_included = ranked.iter().any(|s| s.name == gold);
    Ok(RetrievalResult { query_id: query_id.into(), ranked, gold_included })
}

fn param_schema(p: &ParamSpec) -> Json {
    let mut m = Map::new();
    let ty = match p.kind {
        ParamKind::String | ParamKind::Identifier => json!("string"),
        ParamKind::Timestamp => {
            m.insert("format".into(), json!("date-time"));
            json!("string")
        }
        ParamKind::Number => json!("number"),
        ParamKind::Boolean => json!("boolean"),
        ParamKind::Scalar => json!(["string", "number", "boolean"]),
        ParamKind::Array => {
            if let Some(c) = p.children.first() {
                m.insert("items".into(), param_schema(c));
            }
            json!("array")
        }
        ParamKind::Object => {
            let (props, required) = object_fields(&p.children, p.children.iter().filter(|c| c.required).map(|c| c.name.as_str()));
            m.insert("properties".into(), props);
            if !required.is_empty() {
                m.insert("required".into(), json!(required));
            }
            json!("object")
        }
    };
    m.insert("type".into(), ty);
    if !p.allowed.is_empty() {
        m.insert("enum".into(), json!(p.allowed));
    }
    if let Some(v) = p.minimum {
        m.insert("minimum".into(), json!(v));
    }
    if let Some(v) = p.maximum {
        m.insert("maximum".into(), json!(v));
    }
    if let Some(v) = p.max_items {
        m.insert("maxItems".into(), json!(v));
    }
    Json::Object(m)
}

fn object_fields<'a>(children: &[ParamSpec], required: impl Iterator<Item = &'a str>) -> (Json, Vec<&'a str>) {
    let props: Map<String, Json> = children.iter().map(|c| (c.name.clone(), param_schema(c))).collect();
    (Json::Object(props), required.collect())
}

/// Tool definition in the `{name, description, input_schema}` shape chat
/// APIs accept.
pub fn tool_definition(schema: &FunctionSchema) -> Json {
    let (props, required) = object_fields(&schema.parameters, schema.required.iter().map(String::as_str));
    json!({
        "name": schema.name,
        "description": schema.description,
        "input_schema": {"type": "object", "properties": props, "required": required},
    })
}

pub fn single_system_prompt(model: &str, owner_id: &str) -> String {
    let template = if model.to_ascii_lowercase().contains("claude") { SINGLE_CLAUDE_PROMPT } else { SINGLE_GPT_PROMPT };
    template.trim_end().replace("<owner_id>", owner_id)
}

pub fn single_user_message(tools: &[FunctionSchema], query: &str) -> String {
    let defs: Vec<Json> = tools.iter().map(tool_definition).collect();
    format!(
        "Tools:\n{}\n\nExample:\n{}\n\nQuery: {query}",
        serde_json::to_string_pretty(&defs).expect("tools serialize"),
        SINGLE_EXAMPLE.trim_end()
    )
}

/// Pulls the `{name, input}` tool call out of model output. Accepts bare
/// JSON, fenced JSON, a content list, or JSON surrounded by prose.
pub fn extract_tool_call(text: &str) -> Result<(String, Json), String> {
    let t = text.trim();
    let doc: Json = serde_json::from_str(t)
        .or_else(|_| {
            let (a, b) = (t.find(['{', '[']), t.rfind(['}', ']']));
            match (a, b) {
                (Some(a), Some(b)) if a < b => serde_json::from_str(&t[a..=b]),
                _ => serde_json::from_str::<Json>(""),
            }
        })
        .map_err(|_| "no JSON tool call found in the output".to_string())?;
    let call = match &doc {
        Json::Array(items) => items.iter().find(|i| i.get("name").is_some()).cloned(),
        Json::Object(_) => Some(doc.clone()),
        _ => None,
    }
    .ok_or("no tool call with a name found in the output")?;
    let name = call.get("name").and_then(Json::as_str).ok_or("tool call name must be a string")?;
    Ok((name.to_string(), call.get("input").cloned().unwrap_or(json!({}))))
}

/// Retrieval, one completion and the build of the emitted call.
fn generate_call(
    trace: &mut Trace<'_>,
    registry: &Registry,
    query_id: &str,
    text: &str,
    gold: &str,
    stage: &str,
    owner_id: &str,
) -> Result<ApiCall, Failure> {
    let bad = |message: String| Failure::BadOutput { stage: stage.to_string(), message };
    let retrieved = retrieve_top_k(query_id, text, registry, gold, DEFAULT_K).map_err(|e| bad(e.to_string()))?;
    let messages = alloc::vec![
        Message::system(single_system_prompt(trace.model(), owner_id)),
        Message::user(single_user_message(&retrieved.ranked, text)),
    ];
    let c = trace
        .complete(stage, 1, messages)
        .map_err(|e| Failure::Backend { stage: stage.to_string(), message: e.to_string() })?;
    let (name, input) = extract_tool_call(&c.text).map_err(bad)?;
    if !retrieved.ranked.iter().any(|s| s.name == name) {
        return Err(bad(format!("function `{name}` was not among the provided tools")));
    }
    registry.build_call(&name, &input).map_err(|e| bad(e.to_string()))
}

pub struct SingleApi<B> {
    pub backend: B,
    pub registry: Registry,
    pub owner_id: String,
}

impl<B: Backend> SingleApi<B> {
    pub fn new(backend: B, registry: Registry) -> Self {
        SingleApi { backend, registry, owner_id: DEFAULT_OWNER_ID.into() }
    }
}

fn gold_at(query: &QueryRecord, i: usize) -> &str {
    query.gold_functions.get(i).map(String::as_str).unwrap_or("")
}

impl<B: Backend> Pipeline for SingleApi<B> {
    fn label(&self) -> &str {
        "single"
    }

    fn model(&self) -> &str {
        self.backend.model()
    }

    fn run(&self, query: &QueryRecord, repeat: u32, crm: &mut dyn CrmClient, clock: &dyn Clock) -> PipelineResult {
        let mut trace = Trace::new(&self.backend, clock, &query.id, repeat);
        let failure = match generate_call(&mut trace, &self.registry, &query.id, &query.text, gold_at(query, 0), "gen", &self.owner_id) {
            Ok(call) => {
                let resp = trace.execute(crm, 1, call);
                (!resp.is_success()).then_some(Failure::Execution { step: 1, status: resp.status })
            }
            Err(f) => Some(f),
        };
        let out = trace.transcript.last().map(|t| t.response.clone());
        trace.finish("single", out, 1, Vec::new(), failure)
    }
}

pub struct MultiApi<B> {
    pub backend: B,
    pub registry: Registry,
    pub owner_id: String,
}

impl<B: Backend> MultiApi<B> {
    pub fn new(backend: B, registry: Registry) -> Self {
        MultiApi { backend, registry, owner_id: DEFAULT_OWNER_ID.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitResult {
    pub task_1: String,
    pub task_2: String,
}

/// Exactly two non-blank lines, in order.
pub fn parse_split(text: &str) -> Result<SplitResult, String> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    match lines.as_slice() {
        [a, b] => Ok(SplitResult { task_1: (*a).to_string(), task_2: (*b).to_string() }),
        other => Err(format!("expected two task lines, got {}", other.len())),
    }
}

pub fn rewrite_user_message(split: &SplitResult, first_response: &Json) -> String {
    format!(
        "First task: {}\nResponse of the first task: {}\nSecond task: {}",
        split.task_1,
        serde_json::to_string(first_response).expect("json serializes"),
        split.task_2
    )
}

impl<B: Backend> MultiApi<B> {
    fn steps(&self, query: &QueryRecord, trace: &mut Trace<'_>, crm: &mut dyn CrmClient) -> Result<(), Failure> {
        let backend_err = |stage: &str| {
            let stage = stage.to_string();
            move |e: crate::backend::BackendError| Failure::Backend { stage, message: e.to_string() }
        };
        let split_msgs = alloc::vec![Message::system(MULTI_SPLIT_PROMPT.trim_end()), Message::user(query.text.clone())];
        let c = trace.complete("split", 1, split_msgs).map_err(backend_err("split"))?;
        let split = parse_split(&c.text).map_err(|message| Failure::BadOutput { stage: "split".into(), message })?;

        let call = generate_call(trace, &self.registry, &query.id, &split.task_1, gold_at(query, 0), "gen-1", &self.owner_id)?;
        let first = trace.execute(crm, 1, call);
        if !first.is_success() {
            return Err(Failure::Execution { step: 1, status: first.status });
        }

        let rewrite_msgs = alloc::vec![
            Message::system(MULTI_REWRITE_PROMPT.trim_end()),
            Message::user(rewrite_user_message(&split, &first.body)),
        ];
        let c = trace.complete("rewrite", 1, rewrite_msgs).map_err(backend_err("rewrite"))?;
        let second_task = c.text.trim();
        if second_task.is_empty() {
            return Err(Failure::BadOutput { stage: "rewrite".into(), message: "empty query".into() });
        }

        let call = generate_call(trace, &self.registry, &query.id, second_task, gold_at(query, 1), "gen-2", &self.owner_id)?;
        let second = trace.execute(crm, 2, call);
        if !second.is_success() {
            return Err(Failure::Execution { step: 2, status: second.status });
        }
        Ok(())
    }
}

impl<B: Backend> Pipeline for MultiApi<B> {
    fn label(&self) -> &str {
        "multi"
    }

    fn model(&self) -> &str {
        self.backend.model()
    }

    fn run(&self, query: &QueryRecord, repeat: u32, crm: &mut dyn CrmClient, clock: &dyn Clock) -> PipelineResult {
        let mut trace = Trace::new(&self.backend, clock, &query.id, repeat);
        let failure = self.steps(query, &mut trace, crm).err();
        let out = trace.transcript.last().map(|t| t.response.clone());
        trace.finish("multi", out, 1, Vec::new(), failure)
    }
}
