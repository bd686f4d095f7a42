use thiserror::Error;

/// Errors raised by instance construction, the structured kernels and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NareError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("dense assembly of n = {n} exceeds the cap of {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    /// A Sherman–Morrison denominator or an inner doubling system is numerically
    /// singular, which happens at or near the critical parameters c = 1, α = 0.
    #[error("near-critical instance: {what} is numerically singular{}", iteration.map(|k| format!(" at iteration {k}")).unwrap_or_default())]
    NearSingular {
        what: &'static str,
        iteration: Option<usize>,
    },

    #[error("rank overflow at iteration {iteration}: rank {rank} exceeds max_rank {max_rank}")]
    RankOverflow {
        iteration: usize,
        rank: usize,
        max_rank: usize,
    },

    #[error("solver did not converge after {iterations} iterations (last normalized residual {residual:e}): {reason}")]
    NotConverged {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("instance file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for NareError {
    fn from(e: std::io::Error) -> Self {
        NareError::Io(e.to_string())
    }
}

pub type Result<T, E = NareError> = std::result::Result<T, E>;
