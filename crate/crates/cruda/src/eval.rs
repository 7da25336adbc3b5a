//! Blind grading service. Evaluators see a query, the calls that were sent
//! and what came back, under an opaque token. Which pipeline and model
//! produced the run never leaves the server.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cruda_core::harness::{HumanVerdict, RunRef, DESIGNATED_REPEAT};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::runner::LoadedRun;

pub const SESSION_HEADER: &str = "x-eval-session";
pub const EVALUATOR_HEADER: &str = "x-evaluator";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShownCall {
    pub function: String,
    pub method: String,
    pub path: String,
    pub body: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShownResponse {
    pub status: u16,
    pub body: Value,
}

/// What an evaluator sees for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub token: String,
    pub query: String,
    pub calls: Vec<ShownCall>,
    pub responses: Vec<ShownResponse>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub graded: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no runs to grade")]
    EmptyLogs,
    #[error("unknown item token")]
    UnknownToken,
    #[error("item is already graded")]
    AlreadyGraded,
    #[error("item is leased to another session")]
    LeaseConflict,
    #[error("lease expired or was never held by this session")]
    LeaseExpired,
    #[error("every remaining item is leased to another session")]
    AllLeased,
}

impl EvalError {
    pub fn status(&self) -> StatusCode {
        match self {
            EvalError::EmptyLogs => StatusCode::INTERNAL_SERVER_ERROR,
            EvalError::UnknownToken => StatusCode::NOT_FOUND,
            EvalError::AlreadyGraded | EvalError::LeaseConflict | EvalError::AllLeased => StatusCode::CONFLICT,
            EvalError::LeaseExpired => StatusCode::GONE,
        }
    }
}

/// The five criteria as submitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grades {
    pub function_selection: bool,
    pub task_representation: bool,
    pub structural_integrity: bool,
    pub functional_integrity: bool,
    pub instruction_containment: bool,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Submission {
    pub token: String,
    #[serde(flatten)]
    pub grades: Grades,
}

struct Lease {
    session: String,
    until: Instant,
}

struct Entry {
    item: EvalItem,
    run: RunRef,
    graded: bool,
    lease: Option<Lease>,
}

/// Queue state. Time is passed in so lease handling is testable.
pub struct EvalQueue {
    entries: Vec<Entry>,
    by_token: HashMap<String, usize>,
    orders: HashMap<String, Vec<usize>>,
    seed: u64,
    lease: Duration,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Passing designated runs from every log, anonymised under random tokens.
pub fn blind_shuffle(runs: &[LoadedRun], seed: u64, lease: Duration) -> Result<EvalQueue, EvalError> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for run in runs {
        let texts: HashMap<&str, &str> = run.manifest.queries.iter().map(|q| (q.id.as_str(), q.text.as_str())).collect();
        for r in run.results.iter().filter(|r| r.repeat == DESIGNATED_REPEAT && r.success) {
            let token = hex(&rng.gen::<[u8; 16]>());
            let item = EvalItem {
                token,
                query: texts.get(r.query_id.as_str()).copied().unwrap_or_default().to_string(),
                calls: r
                    .calls
                    .iter()
                    .map(|c| ShownCall {
                        function: c.function_name.clone(),
                        method: c.method.as_str().to_string(),
                        path: c.path.clone(),
                        body: c.body.clone(),
                    })
                    .collect(),
                responses: r.responses.iter().map(|x| ShownResponse { status: x.status, body: x.body.clone() }).collect(),
            };
            let run = RunRef {
                pipeline: r.pipeline.clone(),
                model: r.model.clone(),
                query_id: r.query_id.clone(),
                repeat: r.repeat,
            };
            entries.push(Entry { item, run, graded: false, lease: None });
        }
    }
    if entries.is_empty() {
        return Err(EvalError::EmptyLogs);
    }
    let by_token = entries.iter().enumerate().map(|(i, e)| (e.item.token.clone(), i)).collect();
    Ok(EvalQueue { entries, by_token, orders: HashMap::new(), seed, lease })
}

impl EvalQueue {
    /// Marks runs that already have a verdict as graded.
    pub fn resume(&mut self, verdicts: &[HumanVerdict]) {
        for v in verdicts {
            for e in self.entries.iter_mut().filter(|e| e.run == v.run) {
                e.graded = true;
            }
        }
    }

    pub fn progress(&self) -> Progress {
        Progress { graded: self.entries.iter().filter(|e| e.graded).count(), total: self.entries.len() }
    }

    /// Every item, for inspection. Served payloads are exactly these.
    pub fn items(&self) -> impl Iterator<Item = &EvalItem> {
        self.entries.iter().map(|e| &e.item)
    }

    /// Each session walks the queue in its own random order.
    fn order(&mut self, session: &str) -> &[usize] {
        let (n, seed) = (self.entries.len(), self.seed);
        self.orders.entry(session.to_string()).or_insert_with(|| {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(session.as_bytes());
            let digest = h.finalize();
            let mut s = [0u8; 32];
            s.copy_from_slice(&digest);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut StdRng::from_seed(s));
            order
        })
    }

    /// The item this session should grade next, leased to it. `None` once
    /// everything is graded.
    pub fn next(&mut self, session: &str, now: Instant) -> Result<Option<EvalItem>, EvalError> {
        let held = |e: &Entry| e.lease.as_ref().is_some_and(|l| l.until > now);
        if let Some(e) = self
            .entries
            .iter()
            .find(|e| !e.graded && e.lease.as_ref().is_some_and(|l| l.session == session && l.until > now))
        {
            return Ok(Some(e.item.clone()));
        }
        let order = self.order(session).to_vec();
        let mut blocked = false;
        for i in order {
            let e = &mut self.entries[i];
            if e.graded {
                continue;
            }
            if held(e) {
                blocked = true;
                continue;
            }
            e.lease = Some(Lease { session: session.to_string(), until: now + self.lease });
            return Ok(Some(e.item.clone()));
        }
        if blocked {
            Err(EvalError::AllLeased)
        } else {
            Ok(None)
        }
    }

    /// Records a verdict for an item this session holds.
    pub fn submit(
        &mut self,
        session: &str,
        token: &str,
        grades: Grades,
        evaluator_id: &str,
        timestamp: &str,
        now: Instant,
    ) -> Result<HumanVerdict, EvalError> {
        let i = *self.by_token.get(token).ok_or(EvalError::UnknownToken)?;
        let e = &mut self.entries[i];
        if e.graded {
            return Err(EvalError::AlreadyGraded);
        }
        match &e.lease {
            Some(l) if l.session == session && l.until > now => {}
            Some(l) if l.session != session && l.until > now => return Err(EvalError::LeaseConflict),
            _ => return Err(EvalError::LeaseExpired),
        }
        e.graded = true;
        e.lease = None;
        Ok(HumanVerdict {
            run: e.run.clone(),
            function_selection: grades.function_selection,
            task_representation: grades.task_representation,
            structural_integrity: grades.structural_integrity,
            functional_integrity: grades.functional_integrity,
            instruction_containment: grades.instruction_containment,
            evaluator_id: evaluator_id.to_string(),
            timestamp: timestamp.to_string(),
        })
    }
}

pub struct EvalService {
    pub queue: Mutex<EvalQueue>,
    pub token: String,
    /// Append-only verdict log.
    pub log: PathBuf,
    pub ui: Option<String>,
}

type Shared = Arc<EvalService>;

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/eval/next", get(next))
        .route("/eval/verdict", post(verdict))
        .route("/eval/progress", get(progress))
        .with_state(service)
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({"error": message}))).into_response()
}

/// Session id, or the response to send instead.
fn authorize(s: &EvalService, headers: &HeaderMap) -> Result<String, Response> {
    let bearer = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if bearer != Some(s.token.as_str()) {
        return Err(error(StatusCode::UNAUTHORIZED, "missing or wrong bearer token"));
    }
    match headers.get(SESSION_HEADER).and_then(|v| v.to_str().ok()).filter(|v| !v.is_empty()) {
        Some(id) => Ok(id.to_string()),
        None => Err(error(StatusCode::BAD_REQUEST, "missing X-Eval-Session header")),
    }
}

fn queue(s: &EvalService) -> std::sync::MutexGuard<'_, EvalQueue> {
    s.queue.lock().unwrap_or_else(|e| e.into_inner())
}

async fn index(State(s): State<Shared>) -> Response {
    match &s.ui {
        Some(html) => Html(html.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, "no evaluation UI was configured; use the /eval endpoints"),
    }
}

async fn next(State(s): State<Shared>, headers: HeaderMap) -> Response {
    let session = match authorize(&s, &headers) {
        Ok(id) => id,
        Err(r) => return r,
    };
    let mut q = queue(&s);
    match q.next(&session, Instant::now()) {
        Ok(Some(item)) => Json(json!({"done": false, "item": item, "progress": q.progress()})).into_response(),
        Ok(None) => Json(json!({"done": true, "progress": q.progress()})).into_response(),
        Err(e) => error(e.status(), &e.to_string()),
    }
}

async fn verdict(State(s): State<Shared>, headers: HeaderMap, Json(sub): Json<Submission>) -> Response {
    let session = match authorize(&s, &headers) {
        Ok(id) => id,
        Err(r) => return r,
    };
    let evaluator = headers.get(EVALUATOR_HEADER).and_then(|v| v.to_str().ok()).unwrap_or(&session).to_string();
    let stamp = humantime::format_rfc3339_millis(SystemTime::now()).to_string();
    let mut q = queue(&s);
    let v = match q.submit(&session, &sub.token, sub.grades, &evaluator, &stamp, Instant::now()) {
        Ok(v) => v,
        Err(e) => return error(e.status(), &e.to_string()),
    };
    // Written while the queue is locked so the log order matches grading order.
    let written = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&s.log)
        .and_then(|mut f| writeln!(f, "{}", serde_json::to_string(&v).expect("verdict serializes")));
    if let Err(e) = written {
        return error(StatusCode::INTERNAL_SERVER_ERROR, &format!("could not write verdict log: {e}"));
    }
    Json(json!({"ok": true, "progress": q.progress()})).into_response()
}

async fn progress(State(s): State<Shared>, headers: HeaderMap) -> Response {
    if let Err(r) = authorize(&s, &headers) {
        return r;
    }
    Json(queue(&s).progress()).into_response()
}
