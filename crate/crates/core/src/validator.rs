//! Static plan checks. Each rule is plain code over the plan and the
//! registry, and each failure carries the feedback sent back to the model.
//!
//! | rule | catches |
//! |------|---------|
//! | R0 | unparseable output, empty or oversized plan, helper failures |
//! | R1 | an association used as if it were a property |
//! | R2 | no (or no unique) API for the verb and object |
//! | R3 | missing required arguments |
//! | R4 | malformed timestamps |
//! | R5 | more than 3 filters in one search |
//! | R6 | placeholder pointing at the current, a later or an absent step |
//! | R7 | UPDATE, DELETE, ASSOCIATE or read-by-id without a usable id |
//! | R8 | a step the request's category does not call for, or a repeated step |
//! | R9 | any other value or mapping error |

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ir::{compile, CompileError, CompileMode, IntermediateCall, Op, ParseError, Value, Verb, ASSOC_PREFIX, CONTROL_KEYS};
use crate::plan::{Plan, DEFAULT_MAX_STEPS};
use crate::schema::{self, ApiCall, Category, ObjectType, ParamKind, Registry, Route, ViolationKind};
use crate::timestamp;

pub const R1_FEEDBACK: &str = "Hubspot needs you to search for associated resource first and use its deal id as the associated resource id in your second query. Break into two steps and do variable injection";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleId(pub u16);

impl RuleId {
    pub const R0: RuleId = RuleId(0);
    pub const R1: RuleId = RuleId(1);
    pub const R2: RuleId = RuleId(2);
    pub const R3: RuleId = RuleId(3);
    pub const R4: RuleId = RuleId(4);
    pub const R5: RuleId = RuleId(5);
    pub const R6: RuleId = RuleId(6);
    pub const R7: RuleId = RuleId(7);
    pub const R8: RuleId = RuleId(8);
    pub const R9: RuleId = RuleId(9);

    pub fn parse(s: &str) -> Option<Self> {
        s.strip_prefix(['R', 'r']).and_then(|n| n.parse().ok()).map(RuleId)
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: RuleId,
    /// 1-based step, or `None` for the plan as a whole.
    pub step: Option<usize>,
    pub feedback: String,
}

impl Violation {
    pub fn new(rule: RuleId, step: Option<usize>, feedback: impl Into<String>) -> Self {
        Violation { rule, step, feedback: feedback.into() }
    }

    fn at(rule: RuleId, step: usize, feedback: impl fmt::Display) -> Self {
        Violation { rule, step: Some(step), feedback: format!("step {step}: {feedback}") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorVerdict {
    pub violations: Vec<Violation>,
}

impl ValidatorVerdict {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rules(&self) -> Vec<RuleId> {
        self.violations.iter().map(|v| v.rule).collect()
    }

    pub fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort_by_key(|a| (a.step, a.rule));
        ValidatorVerdict { violations }
    }

    /// Verdict for model output that is not a plan at all.
    pub fn unparseable(err: &ParseError) -> Self {
        ValidatorVerdict {
            violations: alloc::vec![Violation::new(
                RuleId::R0,
                None,
                format!(
                    "your reply is not a valid plan ({err}). Write one call per line: \
                     VERB object_type [id] key=value ... [include=[...]]"
                ),
            )],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FeedbackError {
    #[error("verdict passed; there is no feedback to render")]
    EmptyVerdict,
}

/// The text block sent back to the model: one feedback per line, in verdict
/// order.
pub fn render_feedback(verdict: &ValidatorVerdict) -> Result<String, FeedbackError> {
    if verdict.pass() {
        return Err(FeedbackError::EmptyVerdict);
    }
    let lines: Vec<&str> = verdict.violations.iter().map(|v| v.feedback.as_str()).collect();
    Ok(lines.join("\n"))
}

/// Everything a rule may look at. Steps are compiled once in template mode
/// and shared.
pub struct RuleContext<'a> {
    pub registry: &'a Registry,
    pub category: Option<Category>,
    pub max_steps: usize,
    pub compiled: Vec<Result<ApiCall, CompileError>>,
    pub call_violations: Vec<Vec<schema::Violation>>,
}

impl<'a> RuleContext<'a> {
    pub fn new(plan: &Plan, registry: &'a Registry, category: Option<Category>, max_steps: usize) -> Self {
        let compiled: Vec<_> = plan.steps.iter().map(|s| compile(s, registry, CompileMode::Template)).collect();
        let call_violations = compiled
            .iter()
            .map(|c| match c {
                Ok(call) => registry.validate_call(call).unwrap_or_default(),
                Err(_) => Vec::new(),
            })
            .collect();
        RuleContext { registry, category, max_steps, compiled, call_violations }
    }
}

pub trait PlanRule: Send + Sync {
    fn id(&self) -> RuleId;
    fn check(&self, plan: &Plan, ctx: &RuleContext<'_>) -> Vec<Violation>;
}

pub struct Validator {
    rules: Vec<Box<dyn PlanRule>>,
    disabled: BTreeSet<RuleId>,
    pub max_steps: usize,
}

impl Default for Validator {
    fn default() -> Self {
        Self::standard()
    }
}

impl Validator {
    pub fn empty() -> Self {
        Validator { rules: Vec::new(), disabled: BTreeSet::new(), max_steps: DEFAULT_MAX_STEPS }
    }

    /// The built-in inventory R0 to R9.
    pub fn standard() -> Self {
        Self::empty()
            .with_rule(Structure)
            .with_rule(AssociationAsProperty)
            .with_rule(UnknownOperation)
            .with_rule(schema_rule(RuleId::R3, &[ViolationKind::MissingRequired]))
            .with_rule(Timestamps)
            .with_rule(schema_rule(RuleId::R5, &[ViolationKind::TooManyItems]))
            .with_rule(Placeholders)
            .with_rule(MissingId)
            .with_rule(Containment)
            .with_rule(OtherErrors)
    }

    pub fn with_rule(mut self, rule: impl PlanRule + 'static) -> Self {
        self.rules.push(Box::new(rule));
        self
    }

    pub fn disable(&mut self, rule: RuleId) {
        self.disabled.insert(rule);
    }

    pub fn enabled_rules(&self) -> Vec<RuleId> {
        self.rules.iter().map(|r| r.id()).filter(|id| !self.disabled.contains(id)).collect()
    }

    pub fn validate_plan(&self, plan: &Plan, registry: &Registry, category: Option<Category>) -> ValidatorVerdict {
        let ctx = RuleContext::new(plan, registry, category, self.max_steps);
        let mut out = Vec::new();
        for r in &self.rules {
            if !self.disabled.contains(&r.id()) {
                out.extend(r.check(plan, &ctx));
            }
        }
        ValidatorVerdict::from_violations(out)
    }
}

fn steps(plan: &Plan) -> impl Iterator<Item = (usize, &IntermediateCall)> {
    plan.steps.iter().enumerate().map(|(i, s)| (i + 1, s))
}

struct Structure;

impl PlanRule for Structure {
    fn id(&self) -> RuleId {
        RuleId::R0
    }

    fn check(&self, plan: &Plan, ctx: &RuleContext<'_>) -> Vec<Violation> {
        if plan.is_empty() {
            alloc::vec![Violation::new(RuleId::R0, None, "the plan is empty; write at least one call")]
        } else if plan.len() > ctx.max_steps {
            alloc::vec![Violation::new(
                RuleId::R0,
                None,
                format!("the plan has {} steps; use at most {}", plan.len(), ctx.max_steps),
            )]
        } else {
            Vec::new()
        }
    }
}

struct AssociationAsProperty;

impl AssociationAsProperty {
    fn is_association_name(name: &str, t: Option<ObjectType>, reg: &Registry) -> bool {
        if name == "associations" || name.starts_with("associations.") {
            return true;
        }
        if name.starts_with(ASSOC_PREFIX) {
            return false;
        }
        let known = t.is_some_and(|t| reg.property_kind(t, name).is_some());
        !known && ObjectType::recognize(name).is_some()
    }
}

impl PlanRule for AssociationAsProperty {
    fn id(&self) -> RuleId {
        RuleId::R1
    }

    fn check(&self, plan: &Plan, ctx: &RuleContext<'_>) -> Vec<Violation> {
        let mut out = Vec::new();
        for (n, s) in steps(plan) {
            let t = ObjectType::parse(&s.object_type);
            let keys = s.args.iter().map(|a| a.key.as_str()).filter(|k| !CONTROL_KEYS.contains(k));
            let mut names = s.include.iter().map(String::as_str).chain(keys);
            if names.any(|k| Self::is_association_name(k, t, ctx.registry)) {
                out.push(Violation::new(RuleId::R1, Some(n), R1_FEEDBACK));
            }
        }
        out
    }
}

struct UnknownOperation;

impl PlanRule for UnknownOperation {
    fn id(&self) -> RuleId {
        RuleId::R2
    }

    fn check(&self, plan: &Plan, ctx: &RuleContext<'_>) -> Vec<Violation> {
        let mut out = Vec::new();
        for ((n, s), c) in steps(plan).zip(&ctx.compiled) {
            match c {
                Err(CompileError::NoMatchingSchema { verb, object_type }) => {
                    let route = match s.verb {
                        Verb::Create => Route::Create,
                        Verb::Search => Route::Search,
                        Verb::Update => Route::Update,
                        Verb::Delete => Route::Delete,
                        Verb::Associate => Route::Associate,
                    };
                    let available: Vec<&str> = ObjectType::ALL
                        .iter()
                        .filter(|t| !ctx.registry.by_route(**t, route).is_empty())
                        .map(|t| t.as_str())
                        .collect();
                    out.push(Violation::at(
                        RuleId::R2,
                        n,
                        format!(
                            "there is no {verb} operation for `{object_type}`; {verb} works on: {}",
                            available.join(", ")
                        ),
                    ));
                }
                Err(e @ CompileError::AmbiguousSchema { .. }) => out.push(Violation::at(RuleId::R2, n, e)),
                _ => {}
            }
        }
        out
    }
}

/// Reports the schema violations of the given kinds under one rule id.
struct SchemaRule {
    id: RuleId,
    kinds: &'static [ViolationKind],
}

fn schema_rule(id: RuleId, kinds: &'static [ViolationKind]) -> SchemaRule {
    SchemaRule { id, kinds }
}

impl PlanRule for SchemaRule {
    fn id(&self) -> RuleId {
        self.id
    }

    fn check(&self, _plan: &Plan, ctx: &RuleContext<'_>) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, vs) in ctx.call_violations.iter().enumerate() {
            for v in vs.iter().filter(|v| self.kinds.contains(&v.kind)) {
                let text = if v.kind == ViolationKind::TooManyItems && v.path.contains("filters") {
                    format!("{} ({})", crate::sim::MAX_FILTERS_MESSAGE, v.message)
                } else {
                    v.message.clone()
                };
                out.push(Violation::at(self.id, i + 1, text));
            }
        }
        out
    }
}

struct Timestamps;

impl PlanRule for Timestamps {
    fn id(&self) -> RuleId {
        RuleId::R4
    }

    fn check(&self, plan: &Plan, ctx: &RuleContext<'_>) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, vs) in ctx.call_violations.iter().enumerate() {
            for v in vs.iter().filter(|v| v.kind == ViolationKind::BadTimestamp) {
                out.push(Violation::at(RuleId::R4, i + 1, &v.message));
            }
        }
        // Filter values are untyped in the schema; check them against the
        // property they compare with.
        for (n, s) in steps(plan).filter(|(_, s)| s.verb == Verb::Search) {
            let Some(t) = ObjectType::parse(&s.object_type) else { continue };
            for a in &s.args {
                if ctx.registry.property_kind(t, &a.key) != Some(ParamKind::Timestamp) {
                    continue;
                }
                let bad: Vec<&Value> = match &a.value {
                    Value::List(items) => items.iter().filter(|v| !timestamp_literal_ok(v)).collect(),
                    v if !timestamp_literal_ok(v) => alloc::vec![v],
                    _ => Vec::new(),
                };
                for v in bad {
                    out.push(Violation::at(
                        RuleId::R4,
                        n,
                        format!(
                            "bad timestamp format at filter {}: {} (expected yyyy-MM-ddTHH:mm:ss.SSSZ)",
                            a.key,
                            crate::ir::value_text(v)
                        ),
                    ));
                }
            }
        }
        out
    }
}

fn timestamp_literal_ok(v: &Value) -> bool {
    match v {
        Value::Str(s) => timestamp::is_canonical(s),
        Value::Ref(_) | Value::Calc(_) => true,
        _ => false,
    }
}

struct Placeholders;

impl PlanRule for Placeholders {
    fn id(&self) -> RuleId {
        RuleId::R6
    }

    fn check(&self, plan: &Plan, _ctx: &RuleContext<'_>) -> Vec<Violation> {
        let mut out = Vec::new();
        for (n, s) in steps(plan) {
            for r in s.refs() {
                if r.step as usize >= n {
                    out.push(Violation::at(
                        RuleId::R6,
                        n,
                        format!("placeholder references a later/absent step ({r}); only steps 1 to {} can be used here", n - 1),
                    ));
                }
            }
        }
        out
    }
}

fn usable_id(v: &Value) -> bool {
    match v {
        Value::Int(i) => *i >= 1,
        Value::Str(s) => !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && s.bytes().any(|b| b != b'0'),
        Value::Ref(_) => true,
        _ => false,
    }
}

struct MissingId;

impl PlanRule for MissingId {
    fn id(&self) -> RuleId {
        RuleId::R7
    }

    fn check(&self, plan: &Plan, _ctx: &RuleContext<'_>) -> Vec<Violation> {
        let mut out = Vec::new();
        for (n, s) in steps(plan) {
            let needs_id = matches!(s.verb, Verb::Update | Verb::Delete | Verb::Associate) || s.id.is_some();
            let hint = "search for it first with include=[id] and refer to the result as $1.id";
            if needs_id && !s.id.as_ref().is_some_and(usable_id) {
                out.push(Violation::at(
                    RuleId::R7,
                    n,
                    format!("{} {} needs the object's numeric id; {hint}", s.verb.as_str(), s.object_type),
                ));
            }
            if let Some(t) = &s.target {
                if !usable_id(&t.id) {
                    out.push(Violation::at(
                        RuleId::R7,
                        n,
                        format!("ASSOCIATE needs the numeric id of the {}; {hint}", t.object_type),
                    ));
                }
            }
        }
        out
    }
}

/// Verbs a request of each category may use.
pub fn allowed_verbs(category: Category) -> &'static [Verb] {
    match category {
        Category::Create => &[Verb::Create, Verb::Search, Verb::Associate],
        Category::Read => &[Verb::Search],
        Category::Update => &[Verb::Update, Verb::Search],
        Category::Delete => &[Verb::Delete, Verb::Search],
        Category::Associate => &[Verb::Associate, Verb::Search],
    }
}

struct Containment;

impl PlanRule for Containment {
    fn id(&self) -> RuleId {
        RuleId::R8
    }

    fn check(&self, plan: &Plan, ctx: &RuleContext<'_>) -> Vec<Violation> {
        let mut out = Vec::new();
        for (n, s) in steps(plan) {
            if let Some(c) = ctx.category {
                if !allowed_verbs(c).contains(&s.verb) {
                    out.push(Violation::at(
                        RuleId::R8,
                        n,
                        format!("{} is not part of this {} request; remove the step", s.verb.as_str(), c.as_str()),
                    ));
                }
            }
            if let Some(m) = plan.steps[..n - 1].iter().position(|p| p == s || same_link(p, s)) {
                out.push(Violation::at(RuleId::R8, n, format!("repeats step {}; remove the duplicate", m + 1)));
            }
        }
        out
    }
}

/// Values that must be ids of a known object type, with that type.
fn id_slots(s: &IntermediateCall) -> Vec<(&str, &Value)> {
    let mut out = Vec::new();
    if let Some(id) = &s.id {
        out.push((s.object_type.as_str(), id));
    }
    if let Some(t) = &s.target {
        out.push((t.object_type.as_str(), &t.id));
    }
    for a in &s.args {
        if a.key == "id" || a.key == "hs_object_id" {
            out.push((s.object_type.as_str(), &a.value));
        } else if let Some(t) = a.key.strip_prefix(ASSOC_PREFIX) {
            out.push((t, &a.value));
        }
    }
    out
}

/// Associations are unordered: `a -> b` and `b -> a` create the same link.
fn same_link(a: &IntermediateCall, b: &IntermediateCall) -> bool {
    match (&a.target, &b.target, &a.id, &b.id) {
        (Some(ta), Some(tb), Some(ia), Some(ib)) if a.verb == Verb::Associate && b.verb == Verb::Associate => {
            a.object_type == tb.object_type && *ia == tb.id && ta.object_type == b.object_type && ta.id == *ib
        }
        _ => false,
    }
}

struct OtherErrors;

impl PlanRule for OtherErrors {
    fn id(&self) -> RuleId {
        RuleId::R9
    }

    fn check(&self, plan: &Plan, ctx: &RuleContext<'_>) -> Vec<Violation> {
        let mut out = Vec::new();
        for ((n, s), c) in steps(plan).zip(&ctx.compiled) {
            match c {
                Err(CompileError::NoMatchingSchema { .. } | CompileError::AmbiguousSchema { .. }) => {}
                Err(e) => out.push(Violation::at(RuleId::R9, n, e)),
                Ok(call) => {
                    let schema = ctx.registry.get(&call.function_name);
                    for v in &ctx.call_violations[n - 1] {
                        let owned_elsewhere = matches!(
                            v.kind,
                            ViolationKind::MissingRequired | ViolationKind::BadTimestamp | ViolationKind::TooManyItems
                        );
                        // Bad ids in the path are reported by R7.
                        let path_id = v.kind == ViolationKind::KindMismatch
                            && schema.is_some_and(|sc| {
                                sc.is_path_param(&v.path)
                                    && sc.param(&v.path).map(|p| p.kind) == Some(ParamKind::Identifier)
                            });
                        if !owned_elsewhere && !path_id {
                            out.push(Violation::at(RuleId::R9, n, &v.message));
                        }
                    }
                }
            }
            for a in &s.args {
                if s.verb == Verb::Search && a.op == Op::Contains && matches!(a.value, Value::List(_)) {
                    out.push(Violation::at(RuleId::R9, n, format!("`{}~` takes a single text value", a.key)));
                }
            }
            for (expected, v) in id_slots(s) {
                let mut refs = Vec::new();
                v.refs(&mut refs);
                for r in refs {
                    let Some(src) = plan.steps.get((r.step as usize).wrapping_sub(1)).filter(|_| (r.step as usize) < n) else {
                        continue;
                    };
                    let holds_ids = matches!(r.path.first().map(String::as_str), Some("id" | "ids"));
                    let yields_objects = matches!(src.verb, Verb::Search | Verb::Create | Verb::Update);
                    if holds_ids && yields_objects && src.object_type != expected {
                        out.push(Violation::at(
                            RuleId::R9,
                            n,
                            format!("{r} holds {} ids, but a {expected} id is needed here", src.object_type),
                        ));
                    }
                }
            }
            let touched = [
                s.id.as_ref().map(|id| (s.object_type.as_str(), id)),
                s.target.as_ref().map(|t| (t.object_type.as_str(), &t.id)),
            ];
            for (ty, id) in touched.into_iter().flatten() {
                let earlier = plan.steps[..n - 1]
                    .iter()
                    .position(|p| p.verb == Verb::Delete && p.object_type == ty && p.id.as_ref() == Some(id));
                if let Some(k) = earlier {
                    out.push(Violation::at(
                        RuleId::R9,
                        n,
                        format!("the {ty} {} is deleted in step {}", crate::ir::value_text(id), k + 1),
                    ));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::builtin_registry;

    fn verdict(text: &str, category: Option<Category>) -> ValidatorVerdict {
        let plan = Plan::parse(text, 1).unwrap();
        Validator::standard().validate_plan(&plan, &builtin_registry(), category)
    }

    #[test]
    fn notes_as_property_gets_verbatim_r1() {
        let v = verdict("SEARCH deal 15860461964 include=[notes]", Some(Category::Read));
        assert_eq!(v.rules(), [RuleId::R1]);
        assert_eq!(render_feedback(&v).unwrap(), R1_FEEDBACK);
        let v = verdict("SEARCH note associations.deal=15860461964", None);
        assert_eq!(v.rules(), [RuleId::R1]);
    }

    #[test]
    fn two_step_associate_passes() {
        let v = verdict(
            "SEARCH contact name=Gary include=[id]\nASSOCIATE deal 15810400147 -> contact $1.id",
            Some(Category::Associate),
        );
        assert!(v.pass(), "{v:?}");
    }

    #[test]
    fn forward_reference_is_r6() {
        let v = verdict("SEARCH contact firstname=Gary\nDELETE contact $3.id", None);
        assert_eq!(v.rules(), [RuleId::R6]);
        assert!(v.violations[0].feedback.contains("placeholder references a later/absent step"));
        let v = verdict("DELETE contact $1.id", None);
        assert_eq!(v.rules(), [RuleId::R6]);
    }

    #[test]
    fn r3_then_r4_in_order() {
        let v = verdict("CREATE note hs_timestamp=2024-05-05", None);
        assert_eq!(v.rules(), [RuleId::R3, RuleId::R4]);
        let text = render_feedback(&v).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("step 1: missing required: properties.hs_note_body"), "{}", lines[0]);
        assert!(lines[1].starts_with("step 1: bad timestamp format"), "{}", lines[1]);
    }

    #[test]
    fn pass_has_no_feedback() {
        let v = verdict("DELETE company 77", Some(Category::Delete));
        assert!(v.pass());
        assert_eq!(render_feedback(&v), Err(FeedbackError::EmptyVerdict));
    }

    #[test]
    fn other_rules() {
        assert_eq!(verdict("CREATE owner email=x", None).rules(), [RuleId::R2]);
        assert_eq!(verdict("SEARCH deal a=1 b=2 c=3 d=4", None).rules(), [RuleId::R5]);
        assert_eq!(verdict("DELETE company \"Lakka Tech Solutions\"", None).rules(), [RuleId::R7]);
        assert_eq!(verdict("DELETE company 5", Some(Category::Read)).rules(), [RuleId::R8]);
        assert_eq!(verdict("DELETE company 5\nDELETE company 5", None).rules(), [RuleId::R8, RuleId::R9]);
        assert_eq!(verdict("CREATE deal dealname=x amount=-5", None).rules(), [RuleId::R9]);
        assert_eq!(verdict("UPDATE deal 5 dealstage=won", None).rules(), [RuleId::R9]);
        let v = verdict("ASSOCIATE contact 5 -> contact 5", None);
        assert_eq!(v.rules(), [RuleId::R9], "{v:?}");
        assert_eq!(verdict("SEARCH deal closedate>2024-05-01", None).rules(), [RuleId::R4]);
        assert_eq!(verdict("DELETE deal 5\nUPDATE deal 5 amount=3", None).rules(), [RuleId::R9]);
        assert_eq!(verdict("SEARCH company name=x include=[id]\nDELETE contact $1.id", None).rules(), [RuleId::R9]);
        assert!(verdict("SEARCH note assoc.deal=5 include=[id]\nSEARCH note id=$1.ids", None).pass());
        assert!(verdict("SEARCH owner email=a@b.c\nUPDATE deal 5 hubspot_owner_id=$1.id", None).pass());
        assert_eq!(verdict("ASSOCIATE deal 5 -> note 7\nASSOCIATE note 7 -> deal 5", None).rules(), [RuleId::R8]);
        assert_eq!(verdict("", None).rules(), [RuleId::R0]);
        assert_eq!(verdict("SEARCH deal\nSEARCH note\nSEARCH task\nSEARCH contact\nSEARCH company", None).rules(), [RuleId::R0]);
    }

    #[test]
    fn disabling_a_rule_removes_only_its_violations() {
        let plan = Plan::parse("CREATE note hs_timestamp=2024-05-05 deal=5\nDELETE contact $3.id", 1).unwrap();
        let reg = builtin_registry();
        let all = Validator::standard().validate_plan(&plan, &reg, Some(Category::Read));
        for id in Validator::standard().enabled_rules() {
            let mut v = Validator::standard();
            v.disable(id);
            let partial = v.validate_plan(&plan, &reg, Some(Category::Read));
            let expected: Vec<&Violation> = all.violations.iter().filter(|x| x.rule != id).collect();
            assert_eq!(partial.violations.iter().collect::<Vec<_>>(), expected, "{id}");
        }
    }

    #[test]
    fn rule_ids() {
        assert_eq!(RuleId::R7.to_string(), "R7");
        assert_eq!(RuleId::parse("R12"), Some(RuleId(12)));
        assert_eq!(RuleId::parse("X"), None);
    }
}
