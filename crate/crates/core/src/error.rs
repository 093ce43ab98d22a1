use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {}", format_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("configuration is not strictly ordered at index {index} ({left} >= {right})")]
    Ordering { index: usize, left: f64, right: f64 },

    #[error("coordinate {index} = {value} outside [{lo}, {hi}]")]
    OutOfRange { index: usize, value: f64, lo: f64, hi: f64 },

    #[error("particles {i} and {j} collide; drift is singular")]
    Collision { i: usize, j: usize },

    #[error("point is on the boundary or singular set of the potential")]
    Singular,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("exact transport on {rows}x{cols} exceeds the {limit} pairing guard; use the entropic solver")]
    SizeGuard { rows: usize, cols: usize, limit: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { solver: &'static str, iterations: usize, residual: f64 },

    #[error("MALA step-size tuning failed: acceptance {acceptance:.3} after {rounds} rounds")]
    TuningFailure { acceptance: f64, rounds: usize },

    #[error("chains not converged: split-Rhat {rhat:.4}, ESS {ess:.0} (wanted {wanted:.0})")]
    ChainsNotConverged { rhat: f64, ess: f64, wanted: f64 },

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
