use thiserror::Error;

use crate::recency::ComplianceReport;

/// Errors raised by the estimation algorithms and their supporting engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("subset search over an empty candidate list")]
    EmptyCandidates,

    #[error("subset search budget exceeded: {n} candidates > {limit} for the {engine} engine")]
    BudgetExceeded {
        engine: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular group: condition number {condition:.3e} exceeds the limit")]
    SingularGroup { condition: f64 },

    #[error("round {round}: every group of coordinate {coordinate} is singular")]
    AllGroupsSingular { round: u64, coordinate: usize },

    #[error("prediction query has norm {0} > 1")]
    QueryNorm(f64),

    #[error("noise magnitude {magnitude:.3e} exceeds the budget {budget:.3e}")]
    NoiseBudget { magnitude: f64, budget: f64 },

    #[error("recency violated: {} violation(s), first at round {}", .0.violations.len(), .0.violations.first().map(|v| v.round).unwrap_or(0))]
    Compliance(Box<ComplianceReport>),

    #[error("wrapped algorithm returned an item outside the current batch (round {round})")]
    OutsideBatch { round: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors caused by the requested parameters rather than by a run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Distribution(_) | Error::Dimension { .. } | Error::NoiseBudget { .. }
        )
    }
}
