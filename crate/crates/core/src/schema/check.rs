use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{is_sentinel, segments, FunctionSchema, HttpMethod, ParamKind, ParamSpec, Segment};
use crate::timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingRequired,
    UnknownParameter,
    KindMismatch,
    BadTimestamp,
    NotAllowed,
    OutOfRange,
    TooManyItems,
    PathMismatch,
    MethodMismatch,
    Unresolved,
}

/// A content error in a call. `path` is the dotted location of the
/// offending value (empty for the call as a whole).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(kind: ViolationKind, path: &str, message: String) -> Self {
        Violation { kind, path: path.to_string(), message }
    }
}

/// Matches a concrete path against a template, returning the captured
/// `{param}` values in order.
pub(crate) fn match_path<'a, 't>(template: &'t str, path: &'a str) -> Option<Vec<(&'t str, &'a str)>> {
    let mut captures = Vec::new();
    let mut actual = path.split('/').filter(|s| !s.is_empty());
    for seg in segments(template) {
        let got = actual.next()?;
        match seg {
            Segment::Literal(l) if l == got => {}
            Segment::Literal(_) => return None,
            Segment::Param(p) => captures.push((p, got)),
        }
    }
    if actual.next().is_some() {
        return None;
    }
    Some(captures)
}

pub(crate) fn check_call(
    schema: &FunctionSchema,
    method: HttpMethod,
    path: &str,
    body: &Value,
    template_mode: bool,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if method != schema.method {
        out.push(Violation::new(
            ViolationKind::MethodMismatch,
            "",
            format!("method {} does not match {} for {}", method, schema.method, schema.name),
        ));
    }
    match match_path(&schema.path, path) {
        None => out.push(Violation::new(
            ViolationKind::PathMismatch,
            "",
            format!("path {path} does not match template {}", schema.path),
        )),
        Some(captures) => {
            for (name, raw) in captures {
                if is_sentinel(raw) {
                    if !template_mode {
                        out.push(unresolved(name));
                    }
                    continue;
                }
                if let Some(spec) = schema.param(name) {
                    check_path_value(spec, raw, &mut out);
                }
            }
        }
    }

    let empty = serde_json::Map::new();
    let fields = match body {
        Value::Object(m) => m,
        Value::Null => &empty,
        _ => {
            out.push(Violation::new(
                ViolationKind::KindMismatch,
                "",
                "request body must be a JSON object".into(),
            ));
            return out;
        }
    };
    for name in &schema.required {
        if !schema.is_path_param(name) && !fields.contains_key(name) {
            out.push(Violation::new(
                ViolationKind::MissingRequired,
                name,
                format!("missing required: {name}"),
            ));
        }
    }
    for (key, value) in fields {
        match schema.param(key) {
            Some(spec) if !schema.is_path_param(key) => {
                check_value(spec, value, key, template_mode, &mut out)
            }
            _ => out.push(Violation::new(
                ViolationKind::UnknownParameter,
                key,
                format!("unknown parameter: {key}"),
            )),
        }
    }
    out
}

fn unresolved(path: &str) -> Violation {
    Violation::new(ViolationKind::Unresolved, path, format!("unresolved placeholder at {path}"))
}

fn check_path_value(spec: &ParamSpec, raw: &str, out: &mut Vec<Violation>) {
    match spec.kind {
        ParamKind::Identifier => {
            if !is_identifier_text(raw) {
                out.push(Violation::new(
                    ViolationKind::KindMismatch,
                    &spec.name,
                    format!("{} must be a positive integer id, got {raw}", spec.name),
                ));
            }
        }
        _ => {
            if !spec.allowed.is_empty() && !spec.allowed.iter().any(|a| a == raw) {
                out.push(not_allowed(spec, &spec.name, raw));
            }
        }
    }
}

fn is_identifier_text(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && s.bytes().any(|b| b != b'0')
}

fn not_allowed(spec: &ParamSpec, path: &str, got: &str) -> Violation {
    Violation::new(
        ViolationKind::NotAllowed,
        path,
        format!("{path} must be one of [{}], got {got}", spec.allowed.join(", ")),
    )
}

fn kind_name(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::String => "a string",
        ParamKind::Number => "a number",
        ParamKind::Boolean => "a boolean",
        ParamKind::Timestamp => "a timestamp",
        ParamKind::Identifier => "an id",
        ParamKind::Scalar => "a string, number or boolean",
        ParamKind::Array => "an array",
        ParamKind::Object => "an object",
    }
}

fn mismatch(spec: &ParamSpec, path: &str) -> Violation {
    Violation::new(
        ViolationKind::KindMismatch,
        path,
        format!("{path} must be {}", kind_name(spec.kind)),
    )
}

fn check_value(spec: &ParamSpec, value: &Value, path: &str, template_mode: bool, out: &mut Vec<Violation>) {
    if let Value::String(s) = value {
        if is_sentinel(s) {
            if !template_mode {
                out.push(unresolved(path));
            }
            return;
        }
    }
    let string_allowed = |s: &str, out: &mut Vec<Violation>| {
        if !spec.allowed.is_empty() && !spec.allowed.iter().any(|a| a == s) {
            out.push(not_allowed(spec, path, s));
        }
    };
    match (spec.kind, value) {
        (ParamKind::String, Value::String(s)) => string_allowed(s, out),
        (ParamKind::Number, Value::Number(n)) => {
            let x = n.as_f64().unwrap_or(0.0);
            let low = spec.minimum.is_some_and(|m| x < m);
            let high = spec.maximum.is_some_and(|m| x > m);
            if low || high {
                out.push(Violation::new(
                    ViolationKind::OutOfRange,
                    path,
                    format!("{path}={x} is out of range"),
                ));
            }
        }
        (ParamKind::Boolean, Value::Bool(_)) => {}
        (ParamKind::Timestamp, Value::String(s)) => {
            if !timestamp::is_canonical(s) {
                out.push(Violation::new(
                    ViolationKind::BadTimestamp,
                    path,
                    format!(
                        "bad timestamp format at {path}: {s:?} (expected yyyy-MM-ddTHH:mm:ss.SSSZ)"
                    ),
                ));
            }
        }
        (ParamKind::Identifier, Value::Number(n)) if n.as_u64().is_some_and(|v| v >= 1) => {}
        (ParamKind::Identifier, Value::String(s)) if is_identifier_text(s) => {}
        (ParamKind::Scalar, Value::String(s)) => string_allowed(s, out),
        (ParamKind::Scalar, Value::Number(_) | Value::Bool(_)) => {}
        (ParamKind::Array, Value::Array(items)) => {
            if let Some(max) = spec.max_items {
                if items.len() > max {
                    out.push(Violation::new(
                        ViolationKind::TooManyItems,
                        path,
                        format!("{path} has {} items, at most {max} allowed", items.len()),
                    ));
                }
            }
            if let Some(item) = spec.children.first() {
                for (i, v) in items.iter().enumerate() {
                    check_value(item, v, &format!("{path}.{i}"), template_mode, out);
                }
            }
        }
        (ParamKind::Object, Value::Object(fields)) => {
            if spec.children.is_empty() {
                return;
            }
            for c in spec.children.iter().filter(|c| c.required) {
                if !fields.contains_key(&c.name) {
                    let p = format!("{path}.{}", c.name);
                    out.push(Violation::new(
                        ViolationKind::MissingRequired,
                        &p,
                        format!("missing required: {p}"),
                    ));
                }
            }
            for (k, v) in fields {
                let p = format!("{path}.{k}");
                match spec.child(k) {
                    Some(c) => check_value(c, v, &p, template_mode, out),
                    None => out.push(Violation::new(
                        ViolationKind::UnknownParameter,
                        &p,
                        format!("unknown parameter: {p}"),
                    )),
                }
            }
        }
        _ => out.push(mismatch(spec, path)),
    }
}
