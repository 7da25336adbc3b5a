//! Benchmark query records, one JSON object per line.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ir::Verb;
use crate::schema::{ApiCall, Category, Registry};
use crate::validator::allowed_verbs;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub text: String,
    pub category: Category,
    pub n_calls: usize,
    pub gold_functions: Vec<String>,
    pub gold_calls: Vec<ApiCall>,
    /// Seed fixture file, relative to the dataset file.
    pub fixture: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: `{id}`: {message}")]
    Consistency { line: usize, id: String, message: String },
}

/// Every problem found in a dataset file, in line order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetErrors(pub Vec<DatasetError>);

impl fmt::Display for DatasetErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

fn verb_of(c: Category) -> Verb {
    match c {
        Category::Create => Verb::Create,
        Category::Read => Verb::Search,
        Category::Update => Verb::Update,
        Category::Delete => Verb::Delete,
        Category::Associate => Verb::Associate,
    }
}

impl QueryRecord {
    /// Problems with this record on its own. An empty list means consistent.
    pub fn check(&self, registry: &Registry) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.trim().is_empty() {
            out.push("id is empty".into());
        }
        if self.text.trim().is_empty() {
            out.push("text is empty".into());
        }
        if self.n_calls == 0 {
            out.push("n_calls must be ≥ 1".into());
        }
        if self.gold_calls.len() != self.n_calls {
            out.push(format!("n_calls is {} but there are {} gold calls", self.n_calls, self.gold_calls.len()));
        }
        let call_names: Vec<&str> = self.gold_calls.iter().map(|c| c.function_name.as_str()).collect();
        if call_names != self.gold_functions.iter().map(String::as_str).collect::<Vec<_>>() {
            out.push("gold_functions does not match the functions of gold_calls".into());
        }
        let mut categories = Vec::new();
        for c in &self.gold_calls {
            match registry.get(&c.function_name) {
                None => out.push(format!("unknown function `{}`", c.function_name)),
                Some(s) => {
                    categories.push(s.category);
                    if let Ok(vs) = registry.validate_call(c) {
                        for v in vs {
                            out.push(format!("gold call `{}`: {}", c.function_name, v.message));
                        }
                    }
                }
            }
        }
        if categories.len() == self.gold_calls.len() {
            let allowed = allowed_verbs(self.category);
            if !categories.contains(&self.category) || categories.iter().any(|c| !allowed.contains(&verb_of(*c))) {
                out.push(format!("category {} does not match the gold functions", self.category));
            }
        }
        out
    }
}

/// Parses and checks a JSONL dataset. Blank lines are skipped.
pub fn parse_dataset(text: &str, registry: &Registry) -> Result<Vec<QueryRecord>, DatasetErrors> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord = match serde_json::from_str(raw) {
            Ok(r) => r,
            Err(e) => {
                errors.push(DatasetError::Parse { line, message: format!("{e}") });
                continue;
            }
        };
        if !seen.insert(rec.id.clone()) {
            errors.push(DatasetError::DuplicateId { line, id: rec.id.clone() });
        }
        for message in rec.check(registry) {
            errors.push(DatasetError::Consistency { line, id: rec.id.clone(), message });
        }
        records.push(rec);
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(DatasetErrors(errors))
    }
}

pub fn to_jsonl(records: &[QueryRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}
