//! The plan-validate-execute pipeline and the pieces the baselines share
//! with it: run tracing, step execution and result records.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::backend::{Backend, BackendError, Clock, Completion, LatencyLedger, Message, PromptBundle, Usage};
use crate::dataset::QueryRecord;
use crate::ir::{
    bind_placeholders, compile, decompile, value_text, BindError, Calc, CompileMode, IntermediateCall, Value,
};
use crate::plan::{Plan, DEFAULT_MAX_STEPS};
use crate::schema::{ApiCall, Registry};
use crate::sim::{ApiResponse, CrmClient, CrmSim};
use crate::validator::{render_feedback, RuleId, Validator, ValidatorVerdict, Violation};

pub const THOR_PLAN_PROMPT: &str = include_str!("../assets/thor_plan.txt");
pub const THOR_PLAN_JSON_PROMPT: &str = include_str!("../assets/thor_plan_json.txt");
pub const MATH_HELPER_PROMPT: &str = include_str!("../assets/math_helper.txt");
pub const DEFAULT_OWNER_ID: &str = "325420860";

/// How a pipeline run ended when it did not succeed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Failure {
    Backend { stage: String, message: String },
    MaxAttemptsExceeded { verdict: ValidatorVerdict },
    /// Model output a baseline could not use.
    BadOutput { stage: String, message: String },
    Helper { step: usize, message: String },
    Injection { step: usize, error: String },
    Compile { step: usize, message: String },
    Execution { step: usize, status: u16 },
}

impl Failure {
    pub fn stage(&self) -> &str {
        match self {
            Failure::Backend { stage, .. } | Failure::BadOutput { stage, .. } => stage,
            Failure::MaxAttemptsExceeded { .. } => "plan",
            Failure::Helper { .. } => "helper",
            Failure::Injection { .. } => "injection",
            Failure::Compile { .. } => "compile",
            Failure::Execution { .. } => "execution",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub stage: String,
    pub attempt: u32,
    pub messages: Vec<Message>,
    pub response: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub query_id: String,
    pub pipeline: String,
    pub model: String,
    pub repeat: u32,
    /// Final plan (IR text) or, for baselines, the model's last output.
    pub plan: Option<String>,
    pub calls: Vec<ApiCall>,
    pub responses: Vec<ApiResponse>,
    pub attempts_used: u32,
    pub verdicts: Vec<ValidatorVerdict>,
    pub ledger: LatencyLedger,
    pub usage: Usage,
    pub success: bool,
    pub failure: Option<Failure>,
    pub transcript: Vec<TranscriptEntry>,
}

impl PipelineResult {
    pub fn latency_s(&self) -> f64 {
        self.ledger.total()
    }

    pub fn completions(&self) -> usize {
        self.ledger.completions()
    }
}

pub trait Pipeline: Send + Sync {
    fn label(&self) -> &str;
    fn model(&self) -> &str;
    fn run(&self, query: &QueryRecord, repeat: u32, crm: &mut dyn CrmClient, clock: &dyn Clock) -> PipelineResult;
}

/// A client that charges a fixed simulated latency for every call.
pub struct SimClient {
    pub sim: CrmSim,
    pub latency_s: f64,
}

impl CrmClient for SimClient {
    fn execute(&mut self, call: &ApiCall) -> (ApiResponse, f64) {
        (self.sim.execute(call), self.latency_s)
    }
}

/// Bookkeeping for one pipeline run: every completion and execution goes
/// through here so the ledger, usage and transcript stay consistent.
pub struct Trace<'a> {
    backend: &'a dyn Backend,
    clock: &'a dyn Clock,
    query_id: String,
    repeat: u32,
    start: f64,
    /// Wall time spent inside backend and client calls.
    outside: f64,
    pub ledger: LatencyLedger,
    pub usage: Usage,
    pub transcript: Vec<TranscriptEntry>,
    pub calls: Vec<ApiCall>,
    pub responses: Vec<ApiResponse>,
}

impl<'a> Trace<'a> {
    pub fn new(backend: &'a dyn Backend, clock: &'a dyn Clock, query_id: &str, repeat: u32) -> Self {
        Trace {
            backend,
            clock,
            query_id: query_id.to_string(),
            repeat,
            start: clock.now_s(),
            outside: 0.0,
            ledger: LatencyLedger::default(),
            usage: Usage::default(),
            transcript: Vec::new(),
            calls: Vec::new(),
            responses: Vec::new(),
        }
    }

    pub fn model(&self) -> &str {
        self.backend.model()
    }

    pub fn complete(&mut self, stage: &str, attempt: u32, messages: Vec<Message>) -> Result<Completion, BackendError> {
        let bundle = PromptBundle {
            query_id: self.query_id.clone(),
            stage: stage.to_string(),
            attempt,
            repeat: self.repeat,
            messages,
        };
        let t0 = self.clock.now_s();
        let out = self.backend.complete(&bundle);
        self.outside += self.clock.now_s() - t0;
        let c = out?;
        self.ledger.completion(stage, c.latency_s);
        self.usage.add(&c);
        self.transcript.push(TranscriptEntry {
            stage: bundle.stage,
            attempt,
            messages: bundle.messages,
            response: c.text.clone(),
        });
        Ok(c)
    }

    /// Runs one call and records it; `step` is 1-based.
    pub fn execute(&mut self, crm: &mut dyn CrmClient, step: usize, call: ApiCall) -> ApiResponse {
        let t0 = self.clock.now_s();
        let (resp, latency) = crm.execute(&call);
        self.outside += self.clock.now_s() - t0;
        self.ledger.execution(step, latency);
        self.calls.push(call);
        self.responses.push(resp.clone());
        resp
    }

    pub fn finish(
        mut self,
        pipeline: &str,
        plan: Option<String>,
        attempts_used: u32,
        verdicts: Vec<ValidatorVerdict>,
        failure: Option<Failure>,
    ) -> PipelineResult {
        let wall = self.clock.now_s() - self.start;
        self.ledger.local(wall - self.outside);
        let success = failure.is_none() && !self.responses.is_empty() && self.responses.iter().all(ApiResponse::is_success);
        PipelineResult {
            query_id: self.query_id,
            pipeline: pipeline.to_string(),
            model: self.backend.model().to_string(),
            repeat: self.repeat,
            plan,
            calls: self.calls,
            responses: self.responses,
            attempts_used,
            verdicts,
            ledger: self.ledger,
            usage: self.usage,
            success,
            failure,
            transcript: self.transcript,
        }
    }
}

/// What later steps can reference from a response: the first result's
/// fields, plus `ids` (every result id) and `total`. A response without a
/// result list is used as is, with `ids` holding its own id.
pub fn binding_view(body: &Json) -> Json {
    let mut view = serde_json::Map::new();
    match body.get("results").and_then(Json::as_array) {
        Some(results) => {
            if let Some(Json::Object(first)) = results.first() {
                view.extend(first.clone());
            }
            let ids: Vec<Json> = results.iter().filter_map(|r| r.get("id").cloned()).collect();
            view.insert("total".into(), body.get("total").cloned().unwrap_or(json!(results.len())));
            view.insert("ids".into(), Json::Array(ids));
        }
        None => {
            if let Json::Object(m) = body {
                view.extend(m.clone());
            }
            let ids: Vec<Json> = body.get("id").cloned().into_iter().collect();
            view.insert("ids".into(), Json::Array(ids));
        }
    }
    Json::Object(view)
}

/// Value of an instruction that needs no arithmetic, e.g. "set amount to 500".
pub fn static_value(instruction: &str) -> Option<Value> {
    let lower = instruction.trim().to_ascii_lowercase();
    let rest = lower.strip_prefix("set ")?;
    let (_, n) = rest.rsplit_once(" to ")?;
    parse_number(n)
}

/// Reads a bare number from helper output, allowing thousands separators, a
/// currency sign and a trailing period.
pub fn parse_number(text: &str) -> Option<Value> {
    let t = text.trim().trim_end_matches('.').trim_start_matches('$');
    let cleaned: String = t.chars().filter(|c| *c != ',').collect();
    if cleaned.is_empty() {
        return None;
    }
    if let Ok(i) = cleaned.parse::<i64>() {
        return Some(Value::Int(i));
    }
    let f: f64 = cleaned.parse().ok()?;
    if !f.is_finite() {
        return None;
    }
    if libm::trunc(f) == f && libm::fabs(f) < 9.0e15 {
        Some(Value::Int(f as i64))
    } else {
        Some(Value::Float(f))
    }
}

pub fn helper_messages(calc: &Calc) -> Vec<Message> {
    let mut user = format!("Instruction: {}", calc.instruction);
    if let Some(op) = &calc.operand {
        user.push_str(&format!("\nValue: {}", value_text(op)));
    }
    alloc::vec![Message::system(MATH_HELPER_PROMPT.trim_end()), Message::user(user)]
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum HelperError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("calc(\"{instruction}\") did not produce a number; helper replied {reply:?}")]
    NotNumeric { instruction: String, reply: String },
    #[error("calc(\"{0}\") operand still holds a placeholder")]
    Unresolved(String),
}

/// Resolves one calc whose operand is already a literal. Instructions that
/// just set a number skip the model.
pub fn math_helper(calc: &Calc, trace: &mut Trace<'_>, stage: &str, attempt: u32) -> Result<Value, HelperError> {
    if let Some(v) = static_value(&calc.instruction) {
        return Ok(v);
    }
    if calc.operand.as_deref().is_some_and(|o| !o_is_literal(o)) {
        return Err(HelperError::Unresolved(calc.instruction.clone()));
    }
    let c = trace.complete(stage, attempt, helper_messages(calc))?;
    parse_number(&c.text)
        .ok_or_else(|| HelperError::NotNumeric { instruction: calc.instruction.clone(), reply: c.text.clone() })
}

fn o_is_literal(v: &Value) -> bool {
    let mut refs = Vec::new();
    v.refs(&mut refs);
    refs.is_empty() && !v.has_calc()
}

/// Replaces every calc in `call` whose operand is literal (or absent).
/// Calcs over placeholders are left for execution time.
fn resolve_calcs(
    call: &mut IntermediateCall,
    step: usize,
    trace: &mut Trace<'_>,
    attempt: u32,
) -> Result<(), HelperError> {
    let mut k = 0;
    let mut slots: Vec<&mut Value> = Vec::new();
    if let Some(id) = &mut call.id {
        slots.push(id);
    }
    slots.extend(call.args.iter_mut().map(|a| &mut a.value));
    for slot in slots {
        resolve_in(slot, step, &mut k, trace, attempt)?;
    }
    Ok(())
}

fn resolve_in(v: &mut Value, step: usize, k: &mut usize, trace: &mut Trace<'_>, attempt: u32) -> Result<(), HelperError> {
    match v {
        Value::Calc(c) if c.operand.as_deref().is_none_or(o_is_literal) => {
            *k += 1;
            let stage = if *k == 1 { format!("helper-{step}") } else { format!("helper-{step}.{k}") };
            *v = math_helper(c, trace, &stage, attempt)?;
            Ok(())
        }
        Value::List(items) => items.iter_mut().try_for_each(|i| resolve_in(i, step, k, trace, attempt)),
        _ => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanFormat {
    /// One IR call per line.
    Ir,
    /// A JSON array of `{"name", "input"}` tool calls, placeholders written
    /// as `"{{$1.id}}"`.
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThorConfig {
    pub max_attempts: u32,
    pub max_steps: usize,
    pub plan_format: PlanFormat,
    pub owner_id: String,
}

impl Default for ThorConfig {
    fn default() -> Self {
        ThorConfig {
            max_attempts: 3,
            max_steps: DEFAULT_MAX_STEPS,
            plan_format: PlanFormat::Ir,
            owner_id: DEFAULT_OWNER_ID.into(),
        }
    }
}

pub struct Thor<B> {
    pub backend: B,
    pub registry: Registry,
    pub validator: Validator,
    pub config: ThorConfig,
}

fn synthetic_r0(feedback: String) -> ValidatorVerdict {
    ValidatorVerdict { violations: alloc::vec![Violation::new(RuleId::R0, None, feedback)] }
}

impl<B: Backend> Thor<B> {
    pub fn new(backend: B, registry: Registry) -> Self {
        Self::with_config(backend, registry, ThorConfig::default())
    }

    pub fn with_config(backend: B, registry: Registry, config: ThorConfig) -> Self {
        let mut validator = Validator::standard();
        validator.max_steps = config.max_steps;
        Thor { backend, registry, validator, config }
    }

    pub fn system_prompt(&self) -> String {
        let template = match self.config.plan_format {
            PlanFormat::Ir => THOR_PLAN_PROMPT,
            PlanFormat::Json => THOR_PLAN_JSON_PROMPT,
        };
        template.trim_end().replace("<owner_id>", &self.config.owner_id)
    }

    /// Turns model output into a plan. Errors are feedback text for the model.
    pub fn parse_output(&self, text: &str, attempt: u32) -> Result<Plan, ValidatorVerdict> {
        match self.config.plan_format {
            PlanFormat::Ir => Plan::parse(text, attempt).map_err(|e| ValidatorVerdict::unparseable(&e)),
            PlanFormat::Json => self.parse_json_plan(text, attempt).map_err(synthetic_r0),
        }
    }

    fn parse_json_plan(&self, text: &str, attempt: u32) -> Result<Plan, String> {
        let doc: Json = serde_json::from_str(strip_fence(text))
            .map_err(|e| format!("your reply is not a JSON array of tool calls ({e})"))?;
        let items = doc.as_array().ok_or("your reply must be a JSON array of tool calls")?;
        let mut steps = Vec::new();
        for (i, item) in items.iter().enumerate() {
            let n = i + 1;
            let name = item.get("name").and_then(Json::as_str).ok_or(format!("step {n}: missing \"name\""))?;
            let input = item.get("input").cloned().unwrap_or(json!({}));
            let call = self.registry.build_call(name, &input).map_err(|e| format!("step {n}: {e}"))?;
            let ir = decompile(&call, &self.registry).map_err(|e| format!("step {n}: {e}"))?;
            steps.push(ir);
        }
        Ok(Plan::new(steps, attempt))
    }

    /// Generates, checks and regenerates the plan until it passes or the
    /// attempt budget runs out. Every verdict is appended to `verdicts`; the
    /// attempt count is `verdicts.len()`.
    pub fn repair_loop(
        &self,
        query: &QueryRecord,
        trace: &mut Trace<'_>,
        verdicts: &mut Vec<ValidatorVerdict>,
    ) -> Result<Plan, Failure> {
        let mut messages = alloc::vec![Message::system(self.system_prompt()), Message::user(query.text.clone())];
        let max = self.config.max_attempts.max(1);
        for attempt in 1..=max {
            let c = trace
                .complete("plan", attempt, messages.clone())
                .map_err(|e| Failure::Backend { stage: "plan".into(), message: e.to_string() })?;
            let verdict = match self.parse_output(&c.text, attempt) {
                Err(v) => v,
                Ok(mut plan) => {
                    let mut helper_err = None;
                    for (i, step) in plan.steps.iter_mut().enumerate() {
                        match resolve_calcs(step, i + 1, trace, attempt) {
                            Ok(()) => {}
                            Err(HelperError::Backend(e)) => {
                                return Err(Failure::Backend { stage: format!("helper-{}", i + 1), message: e.to_string() })
                            }
                            Err(e) => {
                                helper_err = Some(format!("step {}: {e}", i + 1));
                                break;
                            }
                        }
                    }
                    let v = match helper_err {
                        Some(msg) => synthetic_r0(msg),
                        None => self.validator.validate_plan(&plan, &self.registry, Some(query.category)),
                    };
                    if v.pass() {
                        verdicts.push(v);
                        return Ok(plan);
                    }
                    v
                }
            };
            let feedback = render_feedback(&verdict).expect("failed verdict has feedback");
            verdicts.push(verdict);
            messages.push(Message::user(format!(
                "Your plan:\n{}\n\nwas rejected:\n{feedback}",
                c.text.trim_end()
            )));
        }
        Err(Failure::MaxAttemptsExceeded { verdict: verdicts.last().cloned().unwrap_or_default() })
    }
}

fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    match t.strip_prefix("```") {
        Some(rest) => {
            let rest = rest.split_once('\n').map_or(rest, |(_, body)| body);
            rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
        }
        None => t,
    }
}

/// Runs a validated plan step by step, injecting earlier results into later
/// steps. Stops at the first failure.
pub fn execute_plan(
    plan: &Plan,
    registry: &Registry,
    crm: &mut dyn CrmClient,
    trace: &mut Trace<'_>,
) -> Result<(), Failure> {
    let mut views: BTreeMap<u32, Json> = BTreeMap::new();
    for (i, step) in plan.steps.iter().enumerate() {
        let n = i + 1;
        let mut bound = bind_placeholders(step, &views).map_err(|e: BindError| Failure::Injection { step: n, error: e.to_string() })?;
        resolve_calcs(&mut bound, n, trace, plan.source_attempt).map_err(|e| match e {
            HelperError::Backend(b) => Failure::Backend { stage: format!("helper-{n}"), message: b.to_string() },
            other => Failure::Helper { step: n, message: other.to_string() },
        })?;
        let call = compile(&bound, registry, CompileMode::Resolved)
            .map_err(|e| Failure::Compile { step: n, message: e.to_string() })?;
        let resp = trace.execute(crm, n, call);
        if !resp.is_success() {
            return Err(Failure::Execution { step: n, status: resp.status });
        }
        views.insert(n as u32, binding_view(&resp.body));
    }
    Ok(())
}

impl<B: Backend> Pipeline for Thor<B> {
    fn label(&self) -> &str {
        "thor"
    }

    fn model(&self) -> &str {
        self.backend.model()
    }

    fn run(&self, query: &QueryRecord, repeat: u32, crm: &mut dyn CrmClient, clock: &dyn Clock) -> PipelineResult {
        let mut trace = Trace::new(&self.backend, clock, &query.id, repeat);
        let mut verdicts = Vec::new();
        let planned = self.repair_loop(query, &mut trace, &mut verdicts);
        let attempts = trace.transcript.iter().filter(|t| t.stage == "plan").count() as u32;
        match planned {
            Ok(plan) => {
                let failure = execute_plan(&plan, &self.registry, crm, &mut trace).err();
                trace.finish("thor", Some(plan.render().trim_end().to_string()), attempts, verdicts, failure)
            }
            Err(f) => {
                let last = trace.transcript.iter().rev().find(|t| t.stage == "plan").map(|t| t.response.clone());
                trace.finish("thor", last, attempts, verdicts, Some(f))
            }
        }
    }
}
