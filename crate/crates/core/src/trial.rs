//! Evaluation outcomes and completed trial records.
use crate::domain::Point;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Objective value recorded for failed evaluations.
pub const PENALTY: f64 = f64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Status {
    Ok,
    Fail(String),
}

impl Status {
    pub fn is_ok(&self) -> bool {
        matches!(self, Status::Ok)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ok => f.write_str("ok"),
            Status::Fail(reason) => write!(f, "fail({reason})"),
        }
    }
}

/// What a black box returns for one point.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok(f64),
    Fail(String),
}

impl Outcome {
    /// Splits into `(objective, status)`, mapping failures and non-finite
    /// values to the penalty sentinel.
    pub fn into_parts(self) -> (f64, Status) {
        match self {
            Outcome::Ok(v) if v.is_finite() => (v, Status::Ok),
            Outcome::Ok(_) => (PENALTY, Status::Fail("non_finite".into())),
            Outcome::Fail(reason) => (PENALTY, Status::Fail(reason)),
        }
    }
}

pub type SolverId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point: Point,
    pub objective: f64,
    pub status: Status,
    pub wall_time_ms: u64,
    pub solver_id: SolverId,
    pub iteration: u64,
    pub eval_id: u64,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.status.is_ok()
    }
}
