//! Function schemas for the simulated CRM and structural validation of
//! concrete API calls against them.

mod builtin;
mod check;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use builtin::{builtin_registry, FILTER_OPERATORS};
pub use check::{Violation, ViolationKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
    Patch,
    Delete,
    Put,
}

impl HttpMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
            HttpMethod::Patch => "PATCH",
            HttpMethod::Delete => "DELETE",
            HttpMethod::Put => "PUT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_uppercase().as_str() {
            "GET" => HttpMethod::Get,
            "POST" => HttpMethod::Post,
            "PATCH" => HttpMethod::Patch,
            "DELETE" => HttpMethod::Delete,
            "PUT" => HttpMethod::Put,
            _ => return None,
        })
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ObjectType {
    Contact,
    Company,
    Deal,
    Note,
    Task,
    Owner,
    LineItem,
    Quote,
    Product,
}

impl ObjectType {
    pub const ALL: [ObjectType; 9] = [
        ObjectType::Contact,
        ObjectType::Company,
        ObjectType::Deal,
        ObjectType::Note,
        ObjectType::Task,
        ObjectType::Owner,
        ObjectType::LineItem,
        ObjectType::Quote,
        ObjectType::Product,
    ];

    /// Singular name used in paths and in the intermediate language.
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectType::Contact => "contact",
            ObjectType::Company => "company",
            ObjectType::Deal => "deal",
            ObjectType::Note => "note",
            ObjectType::Task => "task",
            ObjectType::Owner => "owner",
            ObjectType::LineItem => "lineItem",
            ObjectType::Quote => "quote",
            ObjectType::Product => "product",
        }
    }

    /// Plural name used in function names (`crm_v3_objects_<plural>_...`).
    pub fn plural(self) -> &'static str {
        match self {
            ObjectType::Contact => "contacts",
            ObjectType::Company => "companies",
            ObjectType::Deal => "deals",
            ObjectType::Note => "notes",
            ObjectType::Task => "tasks",
            ObjectType::Owner => "owners",
            ObjectType::LineItem => "line_items",
            ObjectType::Quote => "quotes",
            ObjectType::Product => "products",
        }
    }

    /// Parses the singular name only.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Lenient match used to spot object-type names in free text:
    /// singular or plural, any case, `lineItems`/`line_items` alike.
    pub fn recognize(word: &str) -> Option<Self> {
        let w = word.to_ascii_lowercase().replace('_', "");
        Self::ALL.into_iter().find(|t| {
            let s = t.as_str().to_ascii_lowercase();
            let p = t.plural().to_ascii_lowercase().replace('_', "");
            w == s || w == p || w == format!("{s}s")
        })
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// CRUDA operation category.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    Create,
    Read,
    Update,
    Delete,
    Associate,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Create,
        Category::Read,
        Category::Update,
        Category::Delete,
        Category::Associate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Create => "CREATE",
            Category::Read => "READ",
            Category::Update => "UPDATE",
            Category::Delete => "DELETE",
            Category::Associate => "ASSOCIATE",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    String,
    Number,
    Boolean,
    Timestamp,
    Identifier,
    /// String, number or boolean. Used for search filter values.
    Scalar,
    Array,
    Object,
}

/// One node of a schema's parameter tree.
///
/// Arrays describe their element with a single child; objects list their
/// fields as children. An object without children is a free-form map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ParamSpec>,
    /// Only meaningful for nested fields; top-level requirements live in
    /// [`FunctionSchema::required`].
    #[serde(default, skip_serializing_if = "is_false")]
    pub required: bool,
    #[serde(default, rename = "enum", skip_serializing_if = "Vec::is_empty")]
    pub allowed: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maximum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_items: Option<usize>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ParamSpec {
    pub fn new(name: &str, kind: ParamKind) -> Self {
        ParamSpec {
            name: name.to_string(),
            kind,
            children: Vec::new(),
            required: false,
            allowed: Vec::new(),
            minimum: None,
            maximum: None,
            max_items: None,
        }
    }

    pub fn with_children(mut self, children: Vec<ParamSpec>) -> Self {
        self.children = children;
        self
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    pub fn one_of(mut self, values: &[&str]) -> Self {
        self.allowed = values.iter().map(|v| v.to_string()).collect();
        self
    }

    pub fn range(mut self, min: Option<f64>, max: Option<f64>) -> Self {
        self.minimum = min;
        self.maximum = max;
        self
    }

    pub fn max_items(mut self, n: usize) -> Self {
        self.max_items = Some(n);
        self
    }

    pub fn child(&self, name: &str) -> Option<&ParamSpec> {
        self.children.iter().find(|c| c.name == name)
    }
}

/// Endpoint shape of a schema, derived from its method and path template.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Route {
    /// `POST /objects/{type}`
    Create,
    /// `POST /objects/{type}/search`
    Search,
    /// `GET /objects/{type}/{id}`
    Get,
    /// `PATCH /objects/{type}/{id}`
    Update,
    /// `DELETE /objects/{type}/{id}`
    Delete,
    /// `PUT /associations/{type}/{id}/{toType}/{toId}`
    Associate,
    /// `GET /associations/{type}/{id}/{toType}`
    ListAssociations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FunctionSchema {
    pub name: String,
    pub description: String,
    pub method: HttpMethod,
    pub path: String,
    pub parameters: Vec<ParamSpec>,
    pub required: Vec<String>,
    pub object_type: ObjectType,
    pub category: Category,
}

/// A path template segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segment<'a> {
    Literal(&'a str),
    Param(&'a str),
}

pub fn segments(path: &str) -> impl Iterator<Item = Segment<'_>> {
    path.split('/').filter(|s| !s.is_empty()).map(|s| {
        match s.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
            Some(p) => Segment::Param(p),
            None => Segment::Literal(s),
        }
    })
}

impl FunctionSchema {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Names of `{param}` segments in template order.
    pub fn path_params(&self) -> Vec<&str> {
        segments(&self.path)
            .filter_map(|s| match s {
                Segment::Param(p) => Some(p),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    pub fn is_path_param(&self, name: &str) -> bool {
        self.path_params().contains(&name)
    }

    /// Values of the `{param}` segments of a concrete path, or `None` if the
    /// path does not fit the template.
    pub fn path_captures<'a>(&self, path: &'a str) -> Option<Vec<(String, &'a str)>> {
        check::match_path(&self.path, path)
            .map(|caps| caps.into_iter().map(|(n, v)| (n.to_string(), v)).collect())
    }

    pub fn route(&self) -> Option<Route> {
        let segs: Vec<Segment<'_>> = segments(&self.path).collect();
        let ty = self.object_type.as_str();
        use Segment::{Literal as L, Param as P};
        match (self.method, segs.as_slice()) {
            (HttpMethod::Post, [L("objects"), L(t)]) if *t == ty => Some(Route::Create),
            (HttpMethod::Post, [L("objects"), L(t), L("search")]) if *t == ty => Some(Route::Search),
            (HttpMethod::Get, [L("objects"), L(t), P(_)]) if *t == ty => Some(Route::Get),
            (HttpMethod::Patch, [L("objects"), L(t), P(_)]) if *t == ty => Some(Route::Update),
            (HttpMethod::Delete, [L("objects"), L(t), P(_)]) if *t == ty => Some(Route::Delete),
            (HttpMethod::Put, [L("associations"), L(t), P(_), P(_), P(_)]) if *t == ty => {
                Some(Route::Associate)
            }
            (HttpMethod::Get, [L("associations"), L(t), P(_), P(_)]) if *t == ty => {
                Some(Route::ListAssociations)
            }
            _ => None,
        }
    }

    /// Checks the structural invariants a schema must satisfy before it can
    /// be registered.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("name must be non-empty".into());
        }
        for r in &self.required {
            if self.param(r).is_none() {
                return Err(format!("required parameter `{r}` is not a top-level parameter"));
            }
        }
        for p in self.path_params() {
            if self.param(p).is_none() {
                return Err(format!("path parameter `{{{p}}}` is not declared in parameters"));
            }
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(format!("parameter `{}` declared twice", p.name));
            }
        }
        Ok(())
    }

    /// A call with every required parameter filled with a canonical value.
    pub fn minimal_call(&self) -> ApiCall {
        let mut body = Map::new();
        let mut path = String::new();
        for seg in segments(&self.path) {
            path.push('/');
            match seg {
                Segment::Literal(l) => path.push_str(l),
                Segment::Param(p) => {
                    let v = self.param(p).map(canonical_value).unwrap_or(Value::Null);
                    path.push_str(&path_text(&v));
                }
            }
        }
        for name in &self.required {
            if self.is_path_param(name) {
                continue;
            }
            if let Some(spec) = self.param(name) {
                body.insert(name.clone(), canonical_value(spec));
            }
        }
        ApiCall {
            function_name: self.name.clone(),
            method: self.method,
            path,
            body: Value::Object(body),
            resolved: true,
        }
    }
}

fn path_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn canonical_value(spec: &ParamSpec) -> Value {
    if let Some(first) = spec.allowed.first() {
        return Value::String(first.clone());
    }
    match spec.kind {
        ParamKind::String | ParamKind::Scalar => Value::String("x".into()),
        ParamKind::Number => {
            let n = spec.minimum.map_or(1.0, |m| m.max(1.0));
            if libm::trunc(n) == n {
                Value::from(n as i64)
            } else {
                serde_json::Number::from_f64(n).map_or(Value::from(1), Value::Number)
            }
        }
        ParamKind::Boolean => Value::Bool(false),
        ParamKind::Timestamp => Value::String(crate::timestamp::SIMULATED_NOW.into()),
        ParamKind::Identifier => Value::from(1u64),
        ParamKind::Array => Value::Array(Vec::new()),
        ParamKind::Object => {
            let mut m = Map::new();
            for c in spec.children.iter().filter(|c| c.required) {
                m.insert(c.name.clone(), canonical_value(c));
            }
            Value::Object(m)
        }
    }
}

/// A concrete API call, as emitted by a model or the compiler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiCall {
    pub function_name: String,
    pub method: HttpMethod,
    pub path: String,
    #[serde(default)]
    pub body: Value,
    /// False while placeholder sentinels remain in the path or body.
    #[serde(default = "default_true")]
    pub resolved: bool,
}

fn default_true() -> bool {
    true
}

/// Placeholder sentinels are strings of the form `{{...}}`.
pub fn is_sentinel(s: &str) -> bool {
    s.len() > 4 && s.starts_with("{{") && s.ends_with("}}")
}

pub fn sentinel_inner(s: &str) -> Option<&str> {
    if is_sentinel(s) {
        Some(&s[2..s.len() - 2])
    } else {
        None
    }
}

pub(crate) fn contains_sentinel(v: &Value) -> bool {
    match v {
        Value::String(s) => is_sentinel(s),
        Value::Array(a) => a.iter().any(contains_sentinel),
        Value::Object(m) => m.values().any(contains_sentinel),
        _ => false,
    }
}

impl ApiCall {
    /// True when neither the path nor the body carries a placeholder sentinel.
    pub fn has_placeholders(&self) -> bool {
        self.path.split('/').any(is_sentinel) || contains_sentinel(&self.body)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("duplicate function name: {0}")]
    DuplicateName(String),
    #[error("invalid schema `{name}`: {rule}")]
    InvalidSchema { name: String, rule: String },
    #[error("unknown function: {0}")]
    UnknownFunction(String),
    #[error("cannot parse schema document: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CallBuildError {
    #[error("unknown function: {0}")]
    UnknownFunction(String),
    #[error("tool input must be a JSON object")]
    NotAnObject,
    #[error("missing path parameter `{0}`")]
    MissingPathParam(String),
    #[error("path parameter `{0}` must be a string or integer")]
    BadPathParam(String),
}

/// Immutable set of function schemas, ordered by name.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    schemas: BTreeMap<String, FunctionSchema>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, schema: FunctionSchema) -> Result<&mut Self, RegistryError> {
        schema
            .check_invariants()
            .map_err(|rule| RegistryError::InvalidSchema { name: schema.name.clone(), rule })?;
        if self.schemas.contains_key(&schema.name) {
            return Err(RegistryError::DuplicateName(schema.name));
        }
        self.schemas.insert(schema.name.clone(), schema);
        Ok(self)
    }

    /// Loads a JSON array of schema documents.
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let docs: Vec<FunctionSchema> =
            serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        let mut reg = Registry::new();
        for d in docs {
            reg.register(d)?;
        }
        Ok(reg)
    }

    pub fn to_json(&self) -> String {
        let docs: Vec<&FunctionSchema> = self.schemas.values().collect();
        serde_json::to_string_pretty(&docs).unwrap_or_default()
    }

    pub fn get(&self, name: &str) -> Option<&FunctionSchema> {
        self.schemas.get(name)
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    /// All schemas in name order.
    pub fn iter(&self) -> impl Iterator<Item = &FunctionSchema> {
        self.schemas.values()
    }

    /// Schemas matching a category and, optionally, an object type, in
    /// name order.
    pub fn select_by_category(
        &self,
        category: Category,
        object_type: Option<ObjectType>,
    ) -> Vec<&FunctionSchema> {
        self.iter()
            .filter(|s| s.category == category && object_type.is_none_or(|t| s.object_type == t))
            .collect()
    }

    pub fn by_route(&self, object_type: ObjectType, route: Route) -> Vec<&FunctionSchema> {
        self.iter()
            .filter(|s| s.object_type == object_type && s.route() == Some(route))
            .collect()
    }

    /// Finds the schema whose method and path template match a raw request.
    pub fn match_route(&self, method: HttpMethod, path: &str) -> Option<&FunctionSchema> {
        self.iter().find(|s| s.method == method && check::match_path(&s.path, path).is_some())
    }

    /// Kind of a property of `object_type`, taken from the create/update
    /// schemas' `properties` field, plus the system properties every object
    /// carries.
    pub fn property_kind(&self, object_type: ObjectType, property: &str) -> Option<ParamKind> {
        match property {
            "id" | "hs_object_id" => return Some(ParamKind::Identifier),
            "hs_createdate" | "hs_lastmodifieddate" | "createdAt" | "updatedAt" => {
                return Some(ParamKind::Timestamp)
            }
            _ => {}
        }
        if let Some(p) = self.property_specs(object_type).into_iter().find(|p| p.name == property) {
            return Some(p.kind);
        }
        if object_type == ObjectType::Owner {
            return builtin::owner_catalog().into_iter().find(|p| p.name == property).map(|p| p.kind);
        }
        None
    }

    pub fn property_specs(&self, object_type: ObjectType) -> Vec<&ParamSpec> {
        let mut out: Vec<&ParamSpec> = Vec::new();
        for s in self.iter().filter(|s| s.object_type == object_type) {
            if !matches!(s.route(), Some(Route::Create) | Some(Route::Update)) {
                continue;
            }
            if let Some(props) = s.param("properties") {
                for c in &props.children {
                    if !out.iter().any(|o| o.name == c.name) {
                        out.push(c);
                    }
                }
            }
        }
        out
    }

    /// Validates a call. `Ok(vec![])` means the call is well-formed.
    ///
    /// Calls with `resolved = false` are checked in template mode, where
    /// placeholder sentinels stand in for any value.
    pub fn validate_call(&self, call: &ApiCall) -> Result<Vec<Violation>, RegistryError> {
        let schema = self
            .get(&call.function_name)
            .ok_or_else(|| RegistryError::UnknownFunction(call.function_name.clone()))?;
        Ok(check::check_call(schema, call.method, &call.path, &call.body, !call.resolved))
    }

    /// Validates a raw request against a specific schema.
    pub fn validate_request(
        &self,
        schema: &FunctionSchema,
        method: HttpMethod,
        path: &str,
        body: &Value,
    ) -> Vec<Violation> {
        check::check_call(schema, method, path, body, false)
    }

    /// Builds a call from a tool-use style `{name, input}` pair, where path
    /// parameters travel inside `input`.
    pub fn build_call(&self, name: &str, input: &Value) -> Result<ApiCall, CallBuildError> {
        let schema = self.get(name).ok_or_else(|| CallBuildError::UnknownFunction(name.into()))?;
        let obj = match input {
            Value::Object(m) => m.clone(),
            Value::Null => Map::new(),
            _ => return Err(CallBuildError::NotAnObject),
        };
        let mut body = obj;
        let mut path = String::new();
        for seg in segments(&schema.path) {
            path.push('/');
            match seg {
                Segment::Literal(l) => path.push_str(l),
                Segment::Param(p) => {
                    let v = body
                        .remove(p)
                        .ok_or_else(|| CallBuildError::MissingPathParam(p.into()))?;
                    match v {
                        Value::String(s) if !s.is_empty() && !s.contains('/') => path.push_str(&s),
                        Value::Number(n) => path.push_str(&n.to_string()),
                        _ => return Err(CallBuildError::BadPathParam(p.into())),
                    }
                }
            }
        }
        let body = Value::Object(body);
        let mut call = ApiCall {
            function_name: schema.name.clone(),
            method: schema.method,
            path,
            body,
            resolved: true,
        };
        call.resolved = !call.has_placeholders();
        Ok(call)
    }

    /// Inverse of [`Registry::build_call`]: folds path parameters back into
    /// the input object.
    pub fn tool_input(&self, call: &ApiCall) -> Result<Value, RegistryError> {
        let schema = self
            .get(&call.function_name)
            .ok_or_else(|| RegistryError::UnknownFunction(call.function_name.clone()))?;
        let mut input = match &call.body {
            Value::Object(m) => m.clone(),
            _ => Map::new(),
        };
        if let Some(captures) = check::match_path(&schema.path, &call.path) {
            for (name, raw) in captures {
                let v = match raw.parse::<u64>() {
                    Ok(n) if !raw.starts_with('0') || raw == "0" => Value::from(n),
                    _ => Value::String(raw.to_string()),
                };
                input.insert(name.to_string(), v);
            }
        }
        Ok(Value::Object(input))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn notes_search() -> ApiCall {
        ApiCall {
            function_name: "crm_v3_objects_notes_search_post".into(),
            method: HttpMethod::Post,
            path: "/objects/note/search".into(),
            body: json!({
                "after": 0,
                "filterGroups": [{"filters": [
                    {"operator": "EQ", "propertyName": "associations.deal", "value": "15860461964"}
                ]}],
                "limit": 10,
                "properties": ["hs_note_body", "hs_createdate"],
                "sorts": []
            }),
            resolved: true,
        }
    }

    #[test]
    fn register_and_lookup() {
        let reg = builtin_registry();
        let s = reg.get("crm_v3_objects_notes_search_post").expect("notes search registered");
        assert_eq!(s.category, Category::Read);
        assert_eq!(s.object_type, ObjectType::Note);
        assert_eq!(s.route(), Some(Route::Search));
    }

    #[test]
    fn duplicate_name_rejected() {
        let reg = builtin_registry();
        let s = reg.get("crm_v3_objects_notes_search_post").unwrap().clone();
        let mut fresh = Registry::new();
        fresh.register(s.clone()).unwrap();
        assert_eq!(
            fresh.register(s).unwrap_err(),
            RegistryError::DuplicateName("crm_v3_objects_notes_search_post".into())
        );
    }

    #[test]
    fn required_must_name_a_parameter() {
        let mut s = builtin_registry().get("crm_v3_objects_notes_search_post").unwrap().clone();
        s.required.push("ghost".into());
        let err = Registry::new().register(s).unwrap_err();
        match err {
            RegistryError::InvalidSchema { rule, .. } => assert!(rule.contains("ghost"), "{rule}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn path_param_must_be_declared() {
        let mut s = builtin_registry().get("crm_v3_objects_deals_archive_delete").unwrap().clone();
        s.parameters.clear();
        s.required.clear();
        assert!(matches!(
            Registry::new().register(s),
            Err(RegistryError::InvalidSchema { .. })
        ));
    }

    #[test]
    fn appendix_search_call_is_well_formed() {
        let reg = builtin_registry();
        assert_eq!(reg.validate_call(&notes_search()).unwrap(), vec![]);
    }

    #[test]
    fn missing_required_reported() {
        let reg = builtin_registry();
        let mut call = notes_search();
        call.body.as_object_mut().unwrap().remove("filterGroups");
        let v = reg.validate_call(&call).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::MissingRequired);
        assert_eq!(v[0].message, "missing required: filterGroups");
    }

    #[test]
    fn date_without_time_is_bad_timestamp() {
        let reg = builtin_registry();
        let call = ApiCall {
            function_name: "crm_v3_objects_notes_create_post".into(),
            method: HttpMethod::Post,
            path: "/objects/note".into(),
            body: json!({"properties": {"hs_note_body": "hi", "hs_timestamp": "2024-05-05"}}),
            resolved: true,
        };
        let v = reg.validate_call(&call).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::BadTimestamp);
        assert!(v[0].message.starts_with("bad timestamp format"), "{}", v[0].message);
    }

    #[test]
    fn unknown_top_level_parameter_is_violation() {
        let reg = builtin_registry();
        let mut call = notes_search();
        call.body.as_object_mut().unwrap().insert("bogus".into(), json!(1));
        let v = reg.validate_call(&call).unwrap();
        assert_eq!(v[0].kind, ViolationKind::UnknownParameter);
    }

    #[test]
    fn unknown_function_is_error() {
        let reg = builtin_registry();
        let mut call = notes_search();
        call.function_name = "nope".into();
        assert_eq!(reg.validate_call(&call), Err(RegistryError::UnknownFunction("nope".into())));
    }

    #[test]
    fn select_by_category_filters_and_sorts() {
        let reg = builtin_registry();
        let notes = reg.select_by_category(Category::Read, Some(ObjectType::Note));
        let names: Vec<&str> = notes.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "crm_v3_objects_notes_associations_get",
                "crm_v3_objects_notes_read_get",
                "crm_v3_objects_notes_search_post"
            ]
        );
        let deletes = reg.select_by_category(Category::Delete, None);
        assert_eq!(deletes.len(), 5);
        assert!(deletes.windows(2).all(|w| w[0].name < w[1].name));
        assert!(deletes.iter().all(|s| s.category == Category::Delete));
        assert!(Registry::new().select_by_category(Category::Associate, Some(ObjectType::Contact)).is_empty());
    }

    #[test]
    fn minimal_calls_validate() {
        let reg = builtin_registry();
        for s in reg.iter() {
            let call = s.minimal_call();
            assert_eq!(reg.validate_call(&call).unwrap(), vec![], "{}", s.name);
        }
    }

    #[test]
    fn build_call_moves_path_params() {
        let reg = builtin_registry();
        let call = reg
            .build_call("crm_v3_objects_companies_archive_delete", &json!({"companyId": 77}))
            .unwrap();
        assert_eq!(call.path, "/objects/company/77");
        assert_eq!(call.body, json!({}));
        assert_eq!(reg.tool_input(&call).unwrap(), json!({"companyId": 77}));
    }

    #[test]
    fn json_document_round_trip() {
        let reg = builtin_registry();
        let text = reg.to_json();
        assert!(text.contains("\"objectType\""));
        let back = Registry::from_json(&text).unwrap();
        assert_eq!(back.len(), reg.len());
        for s in reg.iter() {
            assert_eq!(back.get(&s.name), Some(s));
        }
    }

    #[test]
    fn recognize_object_type_words() {
        assert_eq!(ObjectType::recognize("notes"), Some(ObjectType::Note));
        assert_eq!(ObjectType::recognize("Companies"), Some(ObjectType::Company));
        assert_eq!(ObjectType::recognize("lineItems"), Some(ObjectType::LineItem));
        assert_eq!(ObjectType::recognize("amount"), None);
    }
}
