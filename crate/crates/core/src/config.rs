//! Solver configuration shared by all three doubling solvers.

use serde::{Deserialize, Serialize};

use crate::error::{NareError, Result};

/// What the stopping test measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// `‖XCX − XE − AX + B‖_F / ‖B‖_F ≤ tol`.
    #[default]
    Residual,
    /// Relative change of the iterate between two steps `≤ tol`.
    CoreChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    /// Singular values below `trunc_rel · σ_max` are dropped; 0 keeps all nonzero ones.
    pub trunc_rel: f64,
    pub max_iter: usize,
    pub max_rank: usize,
    /// Evaluate the stopping quantity every `cadence` iterations (the last
    /// iteration is always checked).
    pub cadence: usize,
    /// Stop after this many consecutive terminal-phase checks that fail to
    /// halve the stopping quantity; 0 disables the test.
    pub stall_limit: usize,
    pub stop_rule: StopRule,
    /// Record `‖E_k z‖`, `‖F_k z‖` for a fixed probe `z` each iteration.
    pub track_operator_norms: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-12,
            trunc_rel: 1e-14,
            max_iter: 50,
            max_rank: 200,
            cadence: 1,
            stall_limit: 1,
            stop_rule: StopRule::Residual,
            track_operator_norms: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(NareError::InvalidParameter { name, reason });
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad("tol", format!("must be finite and nonnegative, got {}", self.tol));
        }
        if !(self.trunc_rel >= 0.0 && self.trunc_rel < 1.0) {
            return bad("trunc_rel", format!("must lie in [0, 1), got {}", self.trunc_rel));
        }
        if self.max_iter == 0 {
            return bad("max_iter", "must be at least 1".into());
        }
        if self.max_rank == 0 {
            return bad("max_rank", "must be at least 1".into());
        }
        if self.cadence == 0 {
            return bad("cadence", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_trunc_rel(mut self, trunc_rel: f64) -> Self {
        self.trunc_rel = trunc_rel;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_max_rank(mut self, max_rank: usize) -> Self {
        self.max_rank = max_rank;
        self
    }

    pub fn with_stall_limit(mut self, stall_limit: usize) -> Self {
        self.stall_limit = stall_limit;
        self
    }

    pub fn with_operator_norms(mut self, on: bool) -> Self {
        self.track_operator_norms = on;
        self
    }

    /// Whether the stopping quantity is evaluated after iteration `k` (1-based).
    pub(crate) fn checks_at(&self, k: usize) -> bool {
        k.is_multiple_of(self.cadence) || k >= self.max_iter
    }
}
