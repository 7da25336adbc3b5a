//! The compact call language models emit instead of raw JSON, and its
//! lossless compiler to and from [`ApiCall`](crate::schema::ApiCall).
//!
//! One call per line:
//!
//! ```text
//! SEARCH note assoc.deal=15860461964 limit=10 include=[hs_note_body,hs_createdate]
//! ASSOCIATE deal 15810400147 -> contact $1.id
//! UPDATE deal $1.id amount=calc("increase by 10%", $1.properties.amount)
//! ```
//!
//! The full grammar lives in `docs/ir-grammar.bnf`. [`parse`] returns calls
//! in normal form (see [`IntermediateCall::normalize`]), which is what the
//! compile/decompile round trip preserves.

mod compile;
mod parse;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use serde::{Deserialize, Serialize};

pub use compile::{bind_placeholders, compile, decompile, json_to_value, value_to_json, BindError, CompileError, CompileMode};
pub use parse::{parse, parse_lines, parse_value, ParseError, ParseErrorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verb {
    Create,
    Search,
    Update,
    Delete,
    Associate,
}

impl Verb {
    pub const ALL: [Verb; 5] = [Verb::Create, Verb::Search, Verb::Update, Verb::Delete, Verb::Associate];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Create => "CREATE",
            Verb::Search => "SEARCH",
            Verb::Update => "UPDATE",
            Verb::Delete => "DELETE",
            Verb::Associate => "ASSOCIATE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

/// Reference to a field of an earlier plan step's response: `$<step>.<path>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderRef {
    /// 1-based step index.
    pub step: u32,
    pub path: Vec<String>,
}

impl PlaceholderRef {
    pub fn new(step: u32, path: &[&str]) -> Self {
        PlaceholderRef { step, path: path.iter().map(|s| String::from(*s)).collect() }
    }

    pub fn dotted_path(&self) -> String {
        self.path.join(".")
    }
}

impl fmt::Display for PlaceholderRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}.{}", self.step, self.dotted_path())
    }
}

/// A value computed by the helper agent: `calc("<instruction>", operand)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calc {
    pub instruction: String,
    pub operand: Option<Box<Value>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
    Ref(PlaceholderRef),
    Calc(Calc),
}

impl Value {
    pub fn str(s: &str) -> Self {
        Value::Str(String::from(s))
    }

    /// Visits every placeholder reference, including inside lists and calc
    /// operands.
    pub fn refs<'a>(&'a self, out: &mut Vec<&'a PlaceholderRef>) {
        match self {
            Value::Ref(r) => out.push(r),
            Value::List(items) => items.iter().for_each(|v| v.refs(out)),
            Value::Calc(c) => {
                if let Some(op) = &c.operand {
                    op.refs(out);
                }
            }
            _ => {}
        }
    }

    pub fn has_calc(&self) -> bool {
        match self {
            Value::Calc(_) => true,
            Value::List(items) => items.iter().any(Value::has_calc),
            _ => false,
        }
    }
}

/// Comparison operator of an argument. Anything but `=` only makes sense as
/// a SEARCH filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Eq,
    Neq,
    Gt,
    Gte,
    Lt,
    Lte,
    Contains,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Neq => "!=",
            Op::Gt => ">",
            Op::Gte => ">=",
            Op::Lt => "<",
            Op::Lte => "<=",
            Op::Contains => "~",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arg {
    pub key: String,
    pub op: Op,
    pub value: Value,
}

impl Arg {
    pub fn eq(key: &str, value: Value) -> Self {
        Arg { key: String::from(key), op: Op::Eq, value }
    }
}

/// Target clause of an ASSOCIATE call: `-> <type> <id>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociateTarget {
    pub object_type: String,
    pub id: Value,
}

pub const ASSOC_PREFIX: &str = "assoc.";
/// SEARCH keys that control paging and ordering rather than filter.
pub const CONTROL_KEYS: [&str; 3] = ["limit", "after", "sort"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntermediateCall {
    pub verb: Verb,
    pub object_type: String,
    /// Positional id: the object being read, updated, deleted or associated.
    pub id: Option<Value>,
    pub args: Vec<Arg>,
    pub target: Option<AssociateTarget>,
    pub include: Vec<String>,
}

impl IntermediateCall {
    pub fn new(verb: Verb, object_type: &str) -> Self {
        IntermediateCall {
            verb,
            object_type: String::from(object_type),
            id: None,
            args: Vec::new(),
            target: None,
            include: Vec::new(),
        }
    }

    pub fn arg(&self, key: &str) -> Option<&Arg> {
        self.args.iter().find(|a| a.key == key)
    }

    /// Every placeholder referenced anywhere in the call.
    pub fn refs(&self) -> Vec<&PlaceholderRef> {
        let mut out = Vec::new();
        if let Some(id) = &self.id {
            id.refs(&mut out);
        }
        for a in &self.args {
            a.value.refs(&mut out);
        }
        if let Some(t) = &self.target {
            t.id.refs(&mut out);
        }
        out
    }

    pub fn has_calc(&self) -> bool {
        self.id.as_ref().is_some_and(Value::has_calc)
            || self.args.iter().any(|a| a.value.has_calc())
            || self.target.as_ref().is_some_and(|t| t.id.has_calc())
    }

    /// Brings the call into normal form:
    ///
    /// - outside SEARCH, an `id=` argument becomes the positional id;
    /// - SEARCH arguments are ordered `assoc.*` first, then filters, then
    ///   `limit`, `after`, `sort` (relative order otherwise kept), and a
    ///   scalar `sort` becomes a one-element list;
    /// - CREATE and UPDATE arguments are sorted by key.
    pub fn normalize(&mut self) {
        match self.verb {
            Verb::Search => {
                let mut assoc = Vec::new();
                let mut filters = Vec::new();
                let mut control: [Option<Arg>; 3] = [None, None, None];
                for mut a in core::mem::take(&mut self.args) {
                    if a.key.starts_with(ASSOC_PREFIX) {
                        assoc.push(a);
                    } else if let Some(i) = CONTROL_KEYS.iter().position(|k| *k == a.key) {
                        if a.key == "sort" {
                            if let Value::Str(_) = a.value {
                                a.value = Value::List(alloc::vec![a.value]);
                            }
                        }
                        control[i] = Some(a);
                    } else {
                        filters.push(a);
                    }
                }
                self.args = assoc;
                self.args.extend(filters);
                self.args.extend(control.into_iter().flatten());
            }
            Verb::Create | Verb::Update | Verb::Delete | Verb::Associate => {
                if self.id.is_none() {
                    if let Some(pos) = self.args.iter().position(|a| a.key == "id" && a.op == Op::Eq) {
                        self.id = Some(self.args.remove(pos).value);
                    }
                }
                if matches!(self.verb, Verb::Create | Verb::Update) {
                    self.args.sort_by(|a, b| a.key.cmp(&b.key));
                }
            }
        }
    }

    /// Renders the call in its canonical surface form.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(self.verb.as_str());
        s.push(' ');
        s.push_str(&self.object_type);
        if let Some(id) = &self.id {
            s.push(' ');
            render_value(id, &mut s);
        }
        for a in &self.args {
            s.push(' ');
            s.push_str(&a.key);
            s.push_str(a.op.symbol());
            render_value(&a.value, &mut s);
        }
        if let Some(t) = &self.target {
            let _ = write!(s, " -> {} ", t.object_type);
            render_value(&t.id, &mut s);
        }
        if !self.include.is_empty() {
            s.push_str(" include=[");
            for (i, name) in self.include.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                render_str(name, &mut s);
            }
            s.push(']');
        }
        s
    }
}

impl fmt::Display for IntermediateCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Characters that end a bare word.
pub(crate) fn is_special(c: char) -> bool {
    c.is_whitespace() || matches!(c, '"' | '[' | ']' | ',' | '=' | '<' | '>' | '!' | '~' | '(' | ')' | '$' | '\\')
}

pub(crate) fn looks_numeric(s: &str) -> bool {
    parse::number_literal(s).is_some()
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s.chars().any(is_special)
        || s == "true"
        || s == "false"
        || looks_numeric(s)
}

pub fn render_value(v: &Value, out: &mut String) {
    match v {
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        // Debug formatting always keeps a `.` or exponent and round-trips.
        Value::Float(f) => {
            let _ = write!(out, "{f:?}");
        }
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Str(s) => render_str(s, out),
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                render_value(item, out);
            }
            out.push(']');
        }
        Value::Ref(r) => {
            let _ = write!(out, "{r}");
        }
        Value::Calc(c) => {
            out.push_str("calc(");
            render_quoted(&c.instruction, out);
            if let Some(op) = &c.operand {
                out.push_str(", ");
                render_value(op, out);
            }
            out.push(')');
        }
    }
}

fn render_str(s: &str, out: &mut String) {
    if needs_quotes(s) {
        render_quoted(s, out);
    } else {
        out.push_str(s);
    }
}

fn render_quoted(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

pub fn value_text(v: &Value) -> String {
    let mut s = String::new();
    render_value(v, &mut s);
    s
}

/// Renders a plan: one call per line.
pub fn render_lines(calls: &[IntermediateCall]) -> String {
    let mut s = String::new();
    for c in calls {
        let _ = writeln!(s, "{}", c.render());
    }
    s
}

pub(crate) fn sentinel(v: &Value) -> String {
    format!("{{{{{}}}}}", value_text(v))
}
