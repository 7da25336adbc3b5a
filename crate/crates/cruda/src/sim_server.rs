//! REST front end for the CRM simulator.

use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use cruda_core::schema::HttpMethod;
use cruda_core::sim::CrmSim;
use serde_json::{json, Value};

pub type SharedSim = Arc<Mutex<CrmSim>>;

/// (method, path, what it does)
pub const ENDPOINTS: [(&str, &str, &str); 9] = [
    ("POST", "/objects/{type}", "create an object"),
    ("POST", "/objects/{type}/search", "search objects"),
    ("GET", "/objects/{type}/{id}", "read one object"),
    ("PATCH", "/objects/{type}/{id}", "update properties"),
    ("DELETE", "/objects/{type}/{id}", "archive an object"),
    ("PUT", "/associations/{ft}/{fid}/{tt}/{tid}", "associate two objects"),
    ("GET", "/associations/{ft}/{fid}/{tt}", "list associated ids"),
    ("POST", "/_sim/reset", "restore the seed fixture"),
    ("GET", "/_sim/snapshot", "dump the current store"),
];

pub fn endpoint_table(base: &str) -> String {
    let mut s = String::new();
    for (m, p, what) in ENDPOINTS {
        s.push_str(&format!("  {m:<7} {base}{p:<40} {what}\n"));
    }
    s
}

pub fn router(sim: SharedSim) -> Router {
    Router::new()
        .route("/objects/:t", post(crm))
        .route("/objects/:t/search", post(crm))
        .route("/objects/:t/:id", get(crm).patch(crm).delete(crm))
        .route("/associations/:ft/:fid/:tt/:tid", put(crm))
        .route("/associations/:ft/:fid/:tt", get(crm))
        .route("/_sim/reset", post(reset))
        .route("/_sim/snapshot", get(snapshot))
        .with_state(sim)
}

fn lock(sim: &SharedSim) -> std::sync::MutexGuard<'_, CrmSim> {
    sim.lock().unwrap_or_else(|e| e.into_inner())
}

async fn crm(State(sim): State<SharedSim>, method: Method, uri: Uri, body: Bytes) -> Response {
    let Some(m) = HttpMethod::parse(method.as_str()) else {
        return StatusCode::METHOD_NOT_ALLOWED.into_response();
    };
    let doc: Value = if body.iter().all(u8::is_ascii_whitespace) {
        json!({})
    } else {
        match serde_json::from_slice(&body) {
            Ok(v) => v,
            Err(e) => {
                let err = json!({"status": "error", "category": "VALIDATION_ERROR", "message": format!("invalid JSON body: {e}")});
                return (StatusCode::BAD_REQUEST, Json(err)).into_response();
            }
        }
    };
    let resp = lock(&sim).handle(m, uri.path(), &doc);
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if resp.body.is_null() {
        status.into_response()
    } else {
        (status, Json(resp.body)).into_response()
    }
}

async fn reset(State(sim): State<SharedSim>) -> StatusCode {
    lock(&sim).reset();
    StatusCode::NO_CONTENT
}

async fn snapshot(State(sim): State<SharedSim>) -> Json<Value> {
    Json(serde_json::to_value(lock(&sim).snapshot()).unwrap_or(Value::Null))
}
