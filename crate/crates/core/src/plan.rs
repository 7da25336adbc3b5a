use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ir::{parse_lines, render_lines, IntermediateCall, ParseError};

pub const DEFAULT_MAX_STEPS: usize = 4;

/// An ordered composite plan. Placeholders in step k may only refer to
/// steps 1..k-1; the validator enforces this.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<IntermediateCall>,
    /// Repair-loop attempt that produced the plan, starting at 1.
    pub source_attempt: u32,
}

impl Plan {
    pub fn new(steps: Vec<IntermediateCall>, source_attempt: u32) -> Self {
        Plan { steps, source_attempt }
    }

    pub fn parse(text: &str, source_attempt: u32) -> Result<Self, ParseError> {
        Ok(Plan { steps: parse_lines(text)?, source_attempt })
    }

    pub fn render(&self) -> String {
        render_lines(&self.steps)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}
