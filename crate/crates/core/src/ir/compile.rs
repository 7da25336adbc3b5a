use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{json, Map, Number, Value as Json};

use super::{
    parse_value, sentinel, value_text, Arg, AssociateTarget, IntermediateCall, Op, Value, Verb, ASSOC_PREFIX,
};
use crate::schema::{sentinel_inner, ApiCall, ObjectType, Registry, Route};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompileMode {
    /// Every value must be concrete.
    Resolved,
    /// Placeholders and calc expressions compile to `{{...}}` sentinels.
    Template,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("no schema for {verb} {object_type}")]
    NoMatchingSchema { verb: &'static str, object_type: String },
    #[error("{verb} {object_type} matches several schemas: {}", candidates.join(", "))]
    AmbiguousSchema { verb: &'static str, object_type: String, candidates: Vec<String> },
    #[error("{0}")]
    Mapping(String),
    #[error("unresolved value {0}")]
    Unresolved(String),
    #[error("unknown function: {0}")]
    UnknownFunction(String),
    #[error("call cannot be expressed in the intermediate language: {0}")]
    Unrepresentable(String),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BindError {
    #[error("placeholder {0} refers to a step with no result")]
    UnboundStep(String),
    #[error("placeholder {0} names a field missing from the step result")]
    MissingPath(String),
    #[error("placeholder {0} resolves to a value that is not a literal")]
    NotLiteral(String),
}

fn mapping(msg: impl Into<String>) -> CompileError {
    CompileError::Mapping(msg.into())
}

fn route_for(call: &IntermediateCall) -> Route {
    match call.verb {
        Verb::Create => Route::Create,
        Verb::Search if call.id.is_some() => Route::Get,
        Verb::Search => Route::Search,
        Verb::Update => Route::Update,
        Verb::Delete => Route::Delete,
        Verb::Associate => Route::Associate,
    }
}

/// Compiles one call into the registry's concrete request form.
pub fn compile(call: &IntermediateCall, registry: &Registry, mode: CompileMode) -> Result<ApiCall, CompileError> {
    let no_match = || CompileError::NoMatchingSchema {
        verb: call.verb.as_str(),
        object_type: call.object_type.clone(),
    };
    let t = ObjectType::parse(&call.object_type).ok_or_else(no_match)?;
    let route = route_for(call);
    let schema = match registry.by_route(t, route).as_slice() {
        [] => return Err(no_match()),
        [one] => *one,
        many => {
            return Err(CompileError::AmbiguousSchema {
                verb: call.verb.as_str(),
                object_type: call.object_type.clone(),
                candidates: many.iter().map(|s| s.name.clone()).collect(),
            })
        }
    };
    let verb = call.verb.as_str();
    if route != Route::Search {
        if let Some(a) = call.args.iter().find(|a| a.op != Op::Eq) {
            return Err(mapping(format!(
                "operator `{}` on `{}` is only allowed in SEARCH",
                a.op.symbol(),
                a.key
            )));
        }
        if let Some(a) = call.args.iter().find(|a| a.key.starts_with(ASSOC_PREFIX)) {
            return Err(mapping(format!("`{}` is only allowed in SEARCH", a.key)));
        }
    }
    if call.target.is_some() && route != Route::Associate {
        return Err(mapping(format!("`->` target is only allowed in ASSOCIATE, not {verb}")));
    }
    if !call.include.is_empty() && !matches!(route, Route::Search | Route::Get) {
        return Err(mapping(format!("include is only allowed in SEARCH, not {verb}")));
    }
    let need_id = || {
        call.id.as_ref().ok_or_else(|| mapping(format!("{verb} {} needs an id", call.object_type)))
    };
    let mut ids: Vec<String> = Vec::new();
    let mut body = Map::new();
    match route {
        Route::Create | Route::Update => {
            if route == Route::Create && call.id.is_some() {
                return Err(mapping("CREATE takes no id"));
            }
            if route == Route::Update {
                ids.push(path_text(need_id()?, mode)?);
            }
            let mut props = Map::new();
            for a in &call.args {
                props.insert(a.key.clone(), value_to_json(&a.value, mode)?);
            }
            body.insert("properties".into(), Json::Object(props));
        }
        Route::Delete => {
            ids.push(path_text(need_id()?, mode)?);
            if let Some(a) = call.args.first() {
                return Err(mapping(format!("DELETE takes no arguments, got `{}`", a.key)));
            }
        }
        Route::Associate => {
            ids.push(path_text(need_id()?, mode)?);
            let target = call
                .target
                .as_ref()
                .ok_or_else(|| mapping("ASSOCIATE needs a `-> <type> <id>` target"))?;
            ids.push(target.object_type.clone());
            ids.push(path_text(&target.id, mode)?);
            if let Some(a) = call.args.first() {
                return Err(mapping(format!("ASSOCIATE takes no arguments, got `{}`", a.key)));
            }
        }
        Route::Get => {
            ids.push(path_text(need_id()?, mode)?);
            if let Some(a) = call.args.first() {
                return Err(mapping(format!(
                    "SEARCH by id takes no filters, got `{}`; filter with id= instead",
                    a.key
                )));
            }
            if !call.include.is_empty() {
                body.insert("properties".into(), json!(call.include));
            }
        }
        Route::Search => search_body(call, mode, &mut body)?,
        Route::ListAssociations => unreachable!("no verb maps to association listing"),
    }
    let mut ids = ids.into_iter();
    let mut path = String::new();
    for seg in crate::schema::segments(&schema.path) {
        path.push('/');
        match seg {
            crate::schema::Segment::Literal(l) => path.push_str(l),
            crate::schema::Segment::Param(_) => path.push_str(&ids.next().unwrap_or_default()),
        }
    }
    let mut out = ApiCall {
        function_name: schema.name.clone(),
        method: schema.method,
        path,
        body: Json::Object(body),
        resolved: true,
    };
    out.resolved = !out.has_placeholders();
    Ok(out)
}

fn search_body(call: &IntermediateCall, mode: CompileMode, body: &mut Map<String, Json>) -> Result<(), CompileError> {
    let mut filters = Vec::new();
    let mut assoc = Vec::new();
    for a in &call.args {
        let eq_only = |what: &str| {
            if a.op == Op::Eq {
                Ok(())
            } else {
                Err(mapping(format!("{what} `{}` takes `=`, not `{}`", a.key, a.op.symbol())))
            }
        };
        if let Some(ty) = a.key.strip_prefix(ASSOC_PREFIX) {
            eq_only("association")?;
            assoc.push(json!({"objectType": ty, "objectId": value_to_json(&a.value, mode)?}));
            continue;
        }
        match a.key.as_str() {
            "limit" | "after" => {
                eq_only("paging key")?;
                body.insert(a.key.clone(), value_to_json(&a.value, mode)?);
            }
            "sort" => {
                eq_only("sort key")?;
                let items = match &a.value {
                    Value::List(items) => items.as_slice(),
                    other => core::slice::from_ref(other),
                };
                let mut sorts = Vec::new();
                for item in items {
                    let Value::Str(s) = item else {
                        return Err(mapping("sort expects property names, e.g. sort=[-amount]"));
                    };
                    let (name, dir) = match s.strip_prefix('-') {
                        Some(n) => (n, "DESCENDING"),
                        None => (s.as_str(), "ASCENDING"),
                    };
                    sorts.push(json!({"propertyName": name, "direction": dir}));
                }
                body.insert("sorts".into(), Json::Array(sorts));
            }
            _ => filters.push(filter_json(a, mode)?),
        }
    }
    let groups = if filters.is_empty() {
        Vec::new()
    } else {
        alloc::vec![json!({ "filters": filters })]
    };
    body.insert("filterGroups".into(), Json::Array(groups));
    if !assoc.is_empty() {
        body.insert("associatedWith".into(), Json::Array(assoc));
    }
    if !call.include.is_empty() {
        body.insert("properties".into(), json!(call.include));
    }
    Ok(())
}

fn filter_json(a: &Arg, mode: CompileMode) -> Result<Json, CompileError> {
    let mut f = Map::new();
    f.insert("propertyName".into(), Json::String(a.key.clone()));
    let list_op = match (a.op, &a.value) {
        (Op::Eq, Value::List(_)) => Some("IN"),
        (Op::Neq, Value::List(_)) => Some("NOT_IN"),
        (_, Value::List(_)) => {
            return Err(mapping(format!("operator `{}` does not take a list", a.op.symbol())))
        }
        _ => None,
    };
    if let Some(op) = list_op {
        f.insert("operator".into(), Json::String(op.into()));
        f.insert("values".into(), value_to_json(&a.value, mode)?);
    } else {
        let op = match a.op {
            Op::Eq => "EQ",
            Op::Neq => "NEQ",
            Op::Gt => "GT",
            Op::Gte => "GTE",
            Op::Lt => "LT",
            Op::Lte => "LTE",
            Op::Contains => "CONTAINS",
        };
        f.insert("operator".into(), Json::String(op.into()));
        f.insert("value".into(), value_to_json(&a.value, mode)?);
    }
    Ok(Json::Object(f))
}

fn path_text(v: &Value, mode: CompileMode) -> Result<String, CompileError> {
    match v {
        Value::Int(i) => Ok(i.to_string()),
        Value::Str(s) if !s.is_empty() && !s.contains('/') => Ok(s.clone()),
        Value::Ref(_) | Value::Calc(_) => match mode {
            CompileMode::Template => Ok(sentinel(v)),
            CompileMode::Resolved => Err(CompileError::Unresolved(value_text(v))),
        },
        other => Err(mapping(format!("{} is not a valid id", value_text(other)))),
    }
}

/// Converts a literal value to JSON. Placeholders and calc expressions
/// become sentinels in template mode and are errors otherwise.
pub fn value_to_json(v: &Value, mode: CompileMode) -> Result<Json, CompileError> {
    Ok(match v {
        Value::Int(i) => Json::from(*i),
        Value::Float(f) => Json::Number(
            Number::from_f64(*f).ok_or_else(|| mapping(format!("{f} is not a finite number")))?,
        ),
        Value::Bool(b) => Json::Bool(*b),
        Value::Str(s) => Json::String(s.clone()),
        Value::List(items) => Json::Array(
            items.iter().map(|i| value_to_json(i, mode)).collect::<Result<_, _>>()?,
        ),
        Value::Ref(_) | Value::Calc(_) => match mode {
            CompileMode::Template => Json::String(sentinel(v)),
            CompileMode::Resolved => return Err(CompileError::Unresolved(value_text(v))),
        },
    })
}

/// Converts JSON back to a value. Sentinel strings turn back into the
/// placeholder or calc expression they stand for.
pub fn json_to_value(j: &Json) -> Result<Value, CompileError> {
    match j {
        Json::Bool(b) => Ok(Value::Bool(*b)),
        Json::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => Ok(Value::Int(i)),
            (None, Some(f)) if !n.is_u64() => Ok(Value::Float(f)),
            _ => Err(CompileError::Unrepresentable(format!("number {n} out of range"))),
        },
        Json::String(s) => match sentinel_inner(s) {
            Some(inner) => match parse_value(inner) {
                Ok(v @ (Value::Ref(_) | Value::Calc(_))) => Ok(v),
                _ => Ok(Value::Str(s.clone())),
            },
            None => Ok(Value::Str(s.clone())),
        },
        Json::Array(items) => Ok(Value::List(items.iter().map(json_to_value).collect::<Result<_, _>>()?)),
        Json::Null => Err(CompileError::Unrepresentable("null".into())),
        Json::Object(_) => Err(CompileError::Unrepresentable("nested object".into())),
    }
}

fn path_value(raw: &str) -> Result<Value, CompileError> {
    if let Some(inner) = sentinel_inner(raw) {
        if let Ok(v @ (Value::Ref(_) | Value::Calc(_))) = parse_value(inner) {
            return Ok(v);
        }
    }
    let canonical_int = !raw.starts_with('0') && raw.bytes().all(|b| b.is_ascii_digit());
    match raw.parse::<i64>() {
        Ok(i) if canonical_int => Ok(Value::Int(i)),
        _ => Ok(Value::Str(raw.to_string())),
    }
}

fn unrepresentable(msg: impl Into<String>) -> CompileError {
    CompileError::Unrepresentable(msg.into())
}

/// Recovers the intermediate form of a compiled call.
pub fn decompile(call: &ApiCall, registry: &Registry) -> Result<IntermediateCall, CompileError> {
    let schema = registry
        .get(&call.function_name)
        .ok_or_else(|| CompileError::UnknownFunction(call.function_name.clone()))?;
    let route = schema
        .route()
        .ok_or_else(|| unrepresentable(format!("{} has no CRUDA route", schema.name)))?;
    let caps = schema
        .path_captures(&call.path)
        .ok_or_else(|| unrepresentable(format!("path {} does not fit {}", call.path, schema.path)))?;
    let verb = match route {
        Route::Create => Verb::Create,
        Route::Search | Route::Get => Verb::Search,
        Route::Update => Verb::Update,
        Route::Delete => Verb::Delete,
        Route::Associate => Verb::Associate,
        Route::ListAssociations => return Err(unrepresentable("association listing")),
    };
    let mut out = IntermediateCall::new(verb, schema.object_type.as_str());
    let empty = Map::new();
    let body = match &call.body {
        Json::Object(m) => m,
        Json::Null => &empty,
        _ => return Err(unrepresentable("body is not an object")),
    };
    if let Some((_, raw)) = caps.first() {
        out.id = Some(path_value(raw)?);
    }
    let allowed: &[&str] = match route {
        Route::Create | Route::Update => &["properties"],
        Route::Get => &["properties"],
        Route::Search => &["filterGroups", "associatedWith", "limit", "after", "sorts", "properties"],
        _ => &[],
    };
    if let Some(k) = body.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(unrepresentable(format!("body field `{k}`")));
    }
    match route {
        Route::Create | Route::Update => {
            let props = body
                .get("properties")
                .and_then(Json::as_object)
                .ok_or_else(|| unrepresentable("properties must be an object"))?;
            for (k, v) in props {
                out.args.push(Arg::eq(k, json_to_value(v)?));
            }
        }
        Route::Associate => {
            let ty = caps.get(1).map(|c| c.1).unwrap_or_default();
            let id = caps.get(2).map(|c| c.1).unwrap_or_default();
            out.target = Some(AssociateTarget { object_type: ty.to_string(), id: path_value(id)? });
        }
        Route::Get => out.include = string_list(body.get("properties"))?,
        Route::Search => decompile_search(body, &mut out)?,
        _ => {}
    }
    out.normalize();
    Ok(out)
}

fn string_list(v: Option<&Json>) -> Result<Vec<String>, CompileError> {
    match v {
        None => Ok(Vec::new()),
        Some(Json::Array(items)) => items
            .iter()
            .map(|i| i.as_str().map(String::from).ok_or_else(|| unrepresentable("non-string property name")))
            .collect(),
        Some(_) => Err(unrepresentable("properties must be a list")),
    }
}

fn decompile_search(body: &Map<String, Json>, out: &mut IntermediateCall) -> Result<(), CompileError> {
    let groups = match body.get("filterGroups") {
        None => &[][..],
        Some(Json::Array(g)) => g.as_slice(),
        Some(_) => return Err(unrepresentable("filterGroups must be a list")),
    };
    if groups.len() > 1 {
        return Err(unrepresentable("more than one filter group"));
    }
    if let Some(g) = groups.first() {
        let filters = g
            .get("filters")
            .and_then(Json::as_array)
            .ok_or_else(|| unrepresentable("filter group without filters"))?;
        for f in filters {
            let name = f
                .get("propertyName")
                .and_then(Json::as_str)
                .ok_or_else(|| unrepresentable("filter without propertyName"))?;
            let operator = f.get("operator").and_then(Json::as_str).unwrap_or_default();
            let (op, field) = match operator {
                "EQ" => (Op::Eq, "value"),
                "NEQ" => (Op::Neq, "value"),
                "GT" => (Op::Gt, "value"),
                "GTE" => (Op::Gte, "value"),
                "LT" => (Op::Lt, "value"),
                "LTE" => (Op::Lte, "value"),
                "CONTAINS" => (Op::Contains, "value"),
                "IN" => (Op::Eq, "values"),
                "NOT_IN" => (Op::Neq, "values"),
                other => return Err(unrepresentable(format!("filter operator {other}"))),
            };
            let v = f
                .get(field)
                .ok_or_else(|| unrepresentable(format!("{operator} filter without {field}")))?;
            let value = json_to_value(v)?;
            if (field == "values") != matches!(value, Value::List(_)) {
                return Err(unrepresentable(format!("{operator} filter with mismatched {field}")));
            }
            out.args.push(Arg { key: name.to_string(), op, value });
        }
    }
    if let Some(list) = body.get("associatedWith") {
        let list = list.as_array().ok_or_else(|| unrepresentable("associatedWith must be a list"))?;
        for a in list {
            let ty = a
                .get("objectType")
                .and_then(Json::as_str)
                .ok_or_else(|| unrepresentable("association without objectType"))?;
            let id = a.get("objectId").ok_or_else(|| unrepresentable("association without objectId"))?;
            out.args.push(Arg::eq(&format!("{ASSOC_PREFIX}{ty}"), json_to_value(id)?));
        }
    }
    for key in ["limit", "after"] {
        if let Some(v) = body.get(key) {
            out.args.push(Arg::eq(key, json_to_value(v)?));
        }
    }
    if let Some(sorts) = body.get("sorts") {
        let sorts = sorts.as_array().ok_or_else(|| unrepresentable("sorts must be a list"))?;
        let mut items = Vec::new();
        for s in sorts {
            let name = s
                .get("propertyName")
                .and_then(Json::as_str)
                .ok_or_else(|| unrepresentable("sort without propertyName"))?;
            let item = match s.get("direction").and_then(Json::as_str) {
                Some("DESCENDING") => format!("-{name}"),
                _ => name.to_string(),
            };
            items.push(Value::Str(item));
        }
        out.args.push(Arg::eq("sort", Value::List(items)));
    }
    out.include = string_list(body.get("properties"))?;
    Ok(())
}

/// Replaces every placeholder with the literal it points to in an earlier
/// step's result. `results` maps 1-based step numbers to result views.
pub fn bind_placeholders(
    call: &IntermediateCall,
    results: &BTreeMap<u32, Json>,
) -> Result<IntermediateCall, BindError> {
    let mut out = call.clone();
    if let Some(id) = &mut out.id {
        bind_value(id, results)?;
    }
    for a in &mut out.args {
        bind_value(&mut a.value, results)?;
    }
    if let Some(t) = &mut out.target {
        bind_value(&mut t.id, results)?;
    }
    Ok(out)
}

fn bind_value(v: &mut Value, results: &BTreeMap<u32, Json>) -> Result<(), BindError> {
    match v {
        Value::Ref(r) => {
            let shown = r.to_string();
            let mut cur = results.get(&r.step).ok_or_else(|| BindError::UnboundStep(shown.clone()))?;
            for seg in &r.path {
                cur = match cur {
                    Json::Object(m) => m.get(seg.as_str()),
                    Json::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get(i)),
                    _ => None,
                }
                .ok_or_else(|| BindError::MissingPath(shown.clone()))?;
            }
            let bound = json_to_value(cur).map_err(|_| BindError::NotLiteral(shown.clone()))?;
            // A response string that happens to look like a sentinel stays a string.
            *v = match bound {
                Value::Ref(_) | Value::Calc(_) => match cur {
                    Json::String(s) => Value::Str(s.clone()),
                    _ => return Err(BindError::NotLiteral(shown)),
                },
                other => other,
            };
            Ok(())
        }
        Value::List(items) => items.iter_mut().try_for_each(|i| bind_value(i, results)),
        Value::Calc(c) => match &mut c.operand {
            Some(op) => bind_value(op, results),
            None => Ok(()),
        },
        _ => Ok(()),
    }
}
