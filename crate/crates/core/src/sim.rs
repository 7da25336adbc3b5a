//! In-memory CRM store with HubSpot-like object, search and association
//! semantics. Every request is checked against the registry first, so a
//! malformed call fails here exactly as it would against a strict API.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};

use crate::schema::{is_sentinel, ApiCall, FunctionSchema, HttpMethod, ObjectType, Registry, Route};
use crate::timestamp::SIMULATED_NOW;

pub const MAX_FILTERS_MESSAGE: &str = "max filters per filterGroup allowed is 3";
const MAX_FILTERS: usize = 3;
const DEFAULT_LIMIT: usize = 10;

fn now_default() -> String {
    SIMULATED_NOW.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CrmObject {
    pub id: u64,
    pub object_type: ObjectType,
    #[serde(default)]
    pub properties: BTreeMap<String, Json>,
    #[serde(default = "now_default")]
    pub created_at: String,
    #[serde(default = "now_default")]
    pub updated_at: String,
    #[serde(default)]
    pub archived: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectRef {
    pub object_type: ObjectType,
    pub id: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationRecord {
    pub from: ObjectRef,
    pub to: ObjectRef,
}

/// Seed and snapshot file format.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub now: Option<String>,
    #[serde(default)]
    pub objects: Vec<CrmObject>,
    #[serde(default)]
    pub associations: Vec<AssociationRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiResponse {
    pub status: u16,
    #[serde(default)]
    pub body: Json,
}

impl ApiResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    fn error(status: u16, category: &str, message: impl Into<String>) -> Self {
        ApiResponse {
            status,
            body: json!({"status": "error", "category": category, "message": message.into()}),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::error(400, "VALIDATION_ERROR", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::error(404, "OBJECT_NOT_FOUND", message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("cannot parse fixture: {0}")]
    Parse(String),
    #[error("fixture id {0} is used twice")]
    DuplicateId(u64),
    #[error("fixture ids must be positive")]
    ZeroId,
    #[error("fixture association {0:?} -> {1:?} names a missing or archived object")]
    DanglingAssociation(ObjectRef, ObjectRef),
}

/// Anything that can execute compiled calls. The returned latency is what
/// the run is charged for the call, in seconds.
pub trait CrmClient {
    fn execute(&mut self, call: &ApiCall) -> (ApiResponse, f64);
}

type Pair = (ObjectRef, ObjectRef);

fn pair(a: ObjectRef, b: ObjectRef) -> Pair {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug)]
pub struct CrmSim {
    registry: Registry,
    seed: Fixture,
    now: String,
    objects: BTreeMap<u64, CrmObject>,
    associations: BTreeSet<Pair>,
    next_id: u64,
}

impl CrmSim {
    /// An empty store.
    pub fn new(registry: Registry) -> Self {
        Self::from_fixture(registry, Fixture::default()).expect("empty fixture is valid")
    }

    pub fn from_fixture(registry: Registry, seed: Fixture) -> Result<Self, SimError> {
        let mut sim = CrmSim {
            registry,
            seed,
            now: now_default(),
            objects: BTreeMap::new(),
            associations: BTreeSet::new(),
            next_id: 1,
        };
        sim.load_seed()?;
        Ok(sim)
    }

    pub fn from_json(registry: Registry, text: &str) -> Result<Self, SimError> {
        let seed: Fixture = serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        Self::from_fixture(registry, seed)
    }

    fn load_seed(&mut self) -> Result<(), SimError> {
        self.objects.clear();
        self.associations.clear();
        self.now = self.seed.now.clone().unwrap_or_else(now_default);
        for o in &self.seed.objects {
            if o.id == 0 {
                return Err(SimError::ZeroId);
            }
            if self.objects.insert(o.id, o.clone()).is_some() {
                return Err(SimError::DuplicateId(o.id));
            }
        }
        for a in &self.seed.associations {
            if !self.is_live(a.from) || !self.is_live(a.to) || a.from == a.to {
                return Err(SimError::DanglingAssociation(a.from, a.to));
            }
            self.associations.insert(pair(a.from, a.to));
        }
        self.next_id = self.objects.keys().next_back().map_or(1, |m| m + 1);
        Ok(())
    }

    /// Restores exactly the seed fixture.
    pub fn reset(&mut self) {
        self.load_seed().expect("seed was validated on construction");
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn now(&self) -> &str {
        &self.now
    }

    pub fn object(&self, id: u64) -> Option<&CrmObject> {
        self.objects.get(&id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &CrmObject> {
        self.objects.values()
    }

    pub fn snapshot(&self) -> Fixture {
        Fixture {
            now: Some(self.now.clone()),
            objects: self.objects.values().cloned().collect(),
            associations: self
                .associations
                .iter()
                .map(|(a, b)| AssociationRecord { from: *a, to: *b })
                .collect(),
        }
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot()).unwrap_or_default()
    }

    /// Hex SHA-256 of the canonical snapshot.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.snapshot()).unwrap_or_default();
        let hash = Sha256::digest(&bytes);
        let mut s = String::with_capacity(64);
        for b in hash {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    fn is_live(&self, r: ObjectRef) -> bool {
        self.objects
            .get(&r.id)
            .is_some_and(|o| o.object_type == r.object_type && !o.archived)
    }

    fn live(&self, t: ObjectType, id: u64) -> Option<&CrmObject> {
        self.objects.get(&id).filter(|o| o.object_type == t && !o.archived)
    }

    /// Executes a compiled call.
    pub fn execute(&mut self, call: &ApiCall) -> ApiResponse {
        if !call.resolved || call.has_placeholders() {
            return ApiResponse::bad_request("call still contains unresolved placeholders");
        }
        let Some(schema) = self.registry.get(&call.function_name).cloned() else {
            return ApiResponse::not_found(format!("unknown function {}", call.function_name));
        };
        self.dispatch(&schema, call.method, &call.path, &call.body)
    }

    /// Executes a raw REST request, as the HTTP front end receives it.
    pub fn handle(&mut self, method: HttpMethod, path: &str, body: &Json) -> ApiResponse {
        let Some(schema) = self.registry.match_route(method, path).cloned() else {
            return ApiResponse::error(404, "NOT_FOUND", format!("no endpoint for {method} {path}"));
        };
        if path.split('/').any(is_sentinel) {
            return ApiResponse::bad_request("call still contains unresolved placeholders");
        }
        self.dispatch(&schema, method, path, body)
    }

    fn dispatch(&mut self, schema: &FunctionSchema, method: HttpMethod, path: &str, body: &Json) -> ApiResponse {
        let route = match schema.route() {
            Some(r) => r,
            None => return ApiResponse::error(501, "NOT_IMPLEMENTED", format!("{} has no known route", schema.name)),
        };
        if route == Route::Search {
            if let Err(resp) = precheck_search(body) {
                return resp;
            }
        }
        let violations = self.registry.validate_request(schema, method, path, body);
        if !violations.is_empty() {
            let errors: Vec<Json> = violations
                .iter()
                .map(|v| json!({"message": v.message, "in": v.path}))
                .collect();
            let message = violations.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; ");
            let mut resp = ApiResponse::bad_request(message);
            resp.body["errors"] = Json::Array(errors);
            return resp;
        }
        let caps = schema.path_captures(path).unwrap_or_default();
        let id_at = |i: usize| caps.get(i).and_then(|c| c.1.parse::<u64>().ok()).unwrap_or(0);
        let t = schema.object_type;
        let empty = Map::new();
        let fields = body.as_object().unwrap_or(&empty);
        match route {
            Route::Create => self.create(t, fields),
            Route::Get => self.get(t, id_at(0), fields),
            Route::Update => self.update(t, id_at(0), fields),
            Route::Delete => self.delete(t, id_at(0)),
            Route::Search => self.search(t, fields),
            Route::Associate => {
                let to = caps.get(1).and_then(|c| ObjectType::parse(c.1));
                match to {
                    Some(to) => self.associate(ObjectRef { object_type: t, id: id_at(0) }, ObjectRef { object_type: to, id: id_at(2) }),
                    None => ApiResponse::bad_request("unknown target object type"),
                }
            }
            Route::ListAssociations => {
                let to = caps.get(1).and_then(|c| ObjectType::parse(c.1));
                match to {
                    Some(to) => self.list_associations(t, id_at(0), to),
                    None => ApiResponse::bad_request("unknown target object type"),
                }
            }
        }
    }

    fn render(o: &CrmObject, only: Option<&[String]>) -> Json {
        let props: Map<String, Json> = match only {
            Some(names) if !names.is_empty() => names
                .iter()
                .filter_map(|n| o.properties.get(n).map(|v| (n.clone(), v.clone())))
                .collect(),
            _ => o.properties.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        };
        json!({
            "id": o.id,
            "properties": props,
            "createdAt": o.created_at,
            "updatedAt": o.updated_at,
            "archived": o.archived,
        })
    }

    fn create(&mut self, t: ObjectType, fields: &Map<String, Json>) -> ApiResponse {
        let id = self.next_id;
        self.next_id += 1;
        let mut properties: BTreeMap<String, Json> = fields
            .get("properties")
            .and_then(Json::as_object)
            .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .unwrap_or_default();
        properties.insert("hs_object_id".into(), Json::from(id));
        properties.insert("hs_createdate".into(), Json::String(self.now.clone()));
        properties.insert("hs_lastmodifieddate".into(), Json::String(self.now.clone()));
        let o = CrmObject {
            id,
            object_type: t,
            properties,
            created_at: self.now.clone(),
            updated_at: self.now.clone(),
            archived: false,
        };
        let body = Self::render(&o, None);
        self.objects.insert(id, o);
        ApiResponse { status: 201, body }
    }

    fn get(&self, t: ObjectType, id: u64, fields: &Map<String, Json>) -> ApiResponse {
        match self.live(t, id) {
            Some(o) => ApiResponse { status: 200, body: Self::render(o, requested(fields).as_deref()) },
            None => ApiResponse::not_found(format!("{t} {id} not found")),
        }
    }

    fn update(&mut self, t: ObjectType, id: u64, fields: &Map<String, Json>) -> ApiResponse {
        let now = self.now.clone();
        let Some(o) = self.objects.get_mut(&id).filter(|o| o.object_type == t && !o.archived) else {
            return ApiResponse::not_found(format!("{t} {id} not found"));
        };
        if let Some(props) = fields.get("properties").and_then(Json::as_object) {
            for (k, v) in props {
                o.properties.insert(k.clone(), v.clone());
            }
        }
        o.properties.insert("hs_lastmodifieddate".into(), Json::String(now.clone()));
        o.updated_at = now;
        ApiResponse { status: 200, body: Self::render(o, None) }
    }

    fn delete(&mut self, t: ObjectType, id: u64) -> ApiResponse {
        let Some(o) = self.objects.get_mut(&id).filter(|o| o.object_type == t) else {
            return ApiResponse::not_found(format!("{t} {id} not found"));
        };
        if !o.archived {
            o.archived = true;
            let me = ObjectRef { object_type: t, id };
            self.associations.retain(|(a, b)| *a != me && *b != me);
        }
        ApiResponse { status: 204, body: Json::Null }
    }

    fn associate(&mut self, from: ObjectRef, to: ObjectRef) -> ApiResponse {
        for r in [from, to] {
            if !self.is_live(r) {
                return ApiResponse::not_found(format!("{} {} not found", r.object_type, r.id));
            }
        }
        if from == to {
            return ApiResponse::bad_request("an object cannot be associated with itself");
        }
        if !self.associations.insert(pair(from, to)) {
            return ApiResponse::error(
                409,
                "CONFLICT",
                format!("{} {} is already associated with {} {}", from.object_type, from.id, to.object_type, to.id),
            );
        }
        ApiResponse {
            status: 201,
            body: json!({
                "from": {"id": from.id, "objectType": from.object_type},
                "to": {"id": to.id, "objectType": to.object_type},
            }),
        }
    }

    /// Ids of live objects of type `to` associated with `from`, ascending.
    pub fn associated_ids(&self, from: ObjectRef, to: ObjectType) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .associations
            .iter()
            .filter_map(|(a, b)| {
                if *a == from {
                    Some(*b)
                } else if *b == from {
                    Some(*a)
                } else {
                    None
                }
            })
            .filter(|r| r.object_type == to && self.is_live(*r))
            .map(|r| r.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    fn list_associations(&self, t: ObjectType, id: u64, to: ObjectType) -> ApiResponse {
        if self.live(t, id).is_none() {
            return ApiResponse::not_found(format!("{t} {id} not found"));
        }
        let kind = format!("{t}_to_{to}");
        let results: Vec<Json> = self
            .associated_ids(ObjectRef { object_type: t, id }, to)
            .into_iter()
            .map(|i| json!({"id": i, "type": kind}))
            .collect();
        ApiResponse { status: 200, body: json!({ "results": results }) }
    }

    fn search(&self, t: ObjectType, fields: &Map<String, Json>) -> ApiResponse {
        let groups = fields.get("filterGroups").and_then(Json::as_array).cloned().unwrap_or_default();
        let assoc: Vec<ObjectRef> = fields
            .get("associatedWith")
            .and_then(Json::as_array)
            .map(|list| {
                list.iter()
                    .filter_map(|a| {
                        let ty = ObjectType::parse(a.get("objectType")?.as_str()?)?;
                        Some(ObjectRef { object_type: ty, id: id_of(a.get("objectId")?)? })
                    })
                    .collect()
            })
            .unwrap_or_default();
        let assoc_sets: Vec<Vec<u64>> = assoc.iter().map(|r| self.associated_ids(*r, t)).collect();
        let mut hits: Vec<&CrmObject> = self
            .objects
            .values()
            .filter(|o| o.object_type == t && !o.archived)
            .filter(|o| assoc_sets.iter().all(|ids| ids.binary_search(&o.id).is_ok()))
            .filter(|o| {
                groups.is_empty()
                    || groups.iter().any(|g| {
                        g.get("filters")
                            .and_then(Json::as_array)
                            .is_none_or(|fs| fs.iter().all(|f| filter_matches(o, f)))
                    })
            })
            .collect();
        if let Some(sorts) = fields.get("sorts").and_then(Json::as_array) {
            // Apply the least significant key first; the sort is stable.
            for s in sorts.iter().rev() {
                let name = s.get("propertyName").and_then(Json::as_str).unwrap_or("id");
                let desc = s.get("direction").and_then(Json::as_str) == Some("DESCENDING");
                hits.sort_by(|a, b| {
                    let ord = compare_opt(prop(a, name).as_ref(), prop(b, name).as_ref());
                    if desc {
                        ord.reverse()
                    } else {
                        ord
                    }
                });
            }
        }
        let total = hits.len();
        let after = fields.get("after").and_then(Json::as_u64).unwrap_or(0) as usize;
        let limit = fields.get("limit").and_then(Json::as_u64).map_or(DEFAULT_LIMIT, |l| l as usize);
        let only = requested(fields);
        let results: Vec<Json> = hits
            .iter()
            .skip(after)
            .take(limit)
            .map(|o| Self::render(o, only.as_deref()))
            .collect();
        let mut body = json!({"total": total, "results": results});
        if after + limit < total {
            body["paging"] = json!({"next": {"after": after + limit}});
        }
        ApiResponse { status: 200, body }
    }
}

impl CrmClient for CrmSim {
    fn execute(&mut self, call: &ApiCall) -> (ApiResponse, f64) {
        (CrmSim::execute(self, call), 0.0)
    }
}

fn requested(fields: &Map<String, Json>) -> Option<Vec<String>> {
    fields.get("properties").and_then(Json::as_array).map(|a| {
        a.iter().filter_map(|v| v.as_str().map(String::from)).collect()
    })
}

fn id_of(v: &Json) -> Option<u64> {
    match v {
        Json::Number(n) => n.as_u64(),
        Json::String(s) => s.parse().ok(),
        _ => None,
    }
}

/// Search-specific rules checked before generic schema validation, so the
/// caller sees the same messages a strict CRM would return.
fn precheck_search(body: &Json) -> Result<(), ApiResponse> {
    let Some(groups) = body.get("filterGroups").and_then(Json::as_array) else {
        return Ok(());
    };
    for g in groups {
        let Some(filters) = g.get("filters").and_then(Json::as_array) else {
            continue;
        };
        if filters.len() > MAX_FILTERS {
            return Err(ApiResponse::bad_request(MAX_FILTERS_MESSAGE));
        }
        for f in filters {
            if let Some(op) = f.get("operator").and_then(Json::as_str) {
                if !crate::schema::FILTER_OPERATORS.contains(&op) {
                    return Err(ApiResponse::bad_request(format!("unknown operator {op}")));
                }
            }
            if let Some(name) = f.get("propertyName").and_then(Json::as_str) {
                if name.starts_with("associations.") || name == "associations" {
                    return Err(ApiResponse::bad_request(format!(
                        "{name} is not a property; search the associated object's id through associatedWith"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn prop(o: &CrmObject, name: &str) -> Option<Json> {
    match name {
        "id" | "hs_object_id" => Some(Json::from(o.id)),
        "createdAt" => Some(Json::String(o.created_at.clone())),
        "updatedAt" => Some(Json::String(o.updated_at.clone())),
        _ => o.properties.get(name).filter(|v| !v.is_null()).cloned(),
    }
}

fn as_number(v: &Json) -> Option<f64> {
    match v {
        Json::Number(n) => n.as_f64(),
        Json::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
}

fn as_text(v: &Json) -> String {
    match v {
        Json::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn loose_eq(a: &Json, b: &Json) -> bool {
    if let (Some(x), Some(y)) = (as_number(a), as_number(b)) {
        return x == y;
    }
    as_text(a).to_lowercase() == as_text(b).to_lowercase()
}

fn compare(a: &Json, b: &Json) -> Ordering {
    if let (Some(x), Some(y)) = (as_number(a), as_number(b)) {
        return x.partial_cmp(&y).unwrap_or(Ordering::Equal);
    }
    as_text(a).cmp(&as_text(b))
}

/// Missing values sort last.
fn compare_opt(a: Option<&Json>, b: Option<&Json>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => compare(x, y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

fn filter_matches(o: &CrmObject, f: &Json) -> bool {
    let name = f.get("propertyName").and_then(Json::as_str).unwrap_or_default();
    let op = f.get("operator").and_then(Json::as_str).unwrap_or_default();
    let actual = prop(o, name);
    let value = f.get("value");
    let values = f.get("values").and_then(Json::as_array);
    let contains = |needle: &Json| {
        let needle = as_text(needle).replace('*', "").to_lowercase();
        actual.as_ref().is_some_and(|a| as_text(a).to_lowercase().contains(&needle))
    };
    let ord = |pred: fn(Ordering) -> bool| match (actual.as_ref(), value) {
        (Some(a), Some(v)) => pred(compare(a, v)),
        _ => false,
    };
    let eq = |v: &Json| actual.as_ref().is_some_and(|a| loose_eq(a, v));
    match op {
        "EQ" => value.is_some_and(eq),
        "NEQ" => !value.is_some_and(eq),
        "GT" => ord(|o| o == Ordering::Greater),
        "GTE" => ord(|o| o != Ordering::Less),
        "LT" => ord(|o| o == Ordering::Less),
        "LTE" => ord(|o| o != Ordering::Greater),
        "CONTAINS" | "CONTAINS_TOKEN" => value.is_some_and(contains),
        "IN" => values.is_some_and(|vs| vs.iter().any(eq)),
        "NOT_IN" => !values.is_some_and(|vs| vs.iter().any(eq)),
        "HAS_PROPERTY" => actual.is_some_and(|a| a != Json::String(String::new())),
        "NOT_HAS_PROPERTY" => actual.is_none_or(|a| a == Json::String(String::new())),
        _ => false,
    }
}
