//! Per-solve reports and the shared stopping logic.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{NareError, Result};
use crate::structured::flops::{FlopCounts, FlopModel, FlopSnapshot};

/// Bumped on every breaking change of the serialized report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    DenseSda,
    SdaLs,
    ModifiedSdaLs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::DenseSda, Algorithm::SdaLs, Algorithm::ModifiedSdaLs];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::DenseSda => "dense-sda",
            Algorithm::SdaLs => "sda-ls",
            Algorithm::ModifiedSdaLs => "modified-sda-ls",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = NareError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| NareError::InvalidParameter {
                name: "algorithm",
                reason: format!("unknown algorithm `{s}` (expected dense-sda, sda-ls or modified-sda-ls)"),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The stopping quantity stopped decreasing before reaching the tolerance.
    Stagnated,
}

/// Ranks after one iteration: `m_k` of the H-side and `l_k` of the G-side
/// (absent when the G-side is not stored).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub h: usize,
    pub g: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub n: usize,
    pub gamma: f64,
    pub near_critical: bool,
    pub config: SolverConfig,
    /// Number of doubling steps taken after initialization.
    pub iterations: usize,
    pub termination: Termination,
    /// Last evaluated stopping quantity.
    pub final_residual: Option<f64>,
    /// Normalized residual of the original (unbalanced) equation, when it
    /// differs from the equation that was iterated on.
    pub original_residual: Option<f64>,
    pub initial_residual: Option<f64>,
    pub initial_rank: RankRecord,
    /// One entry per iteration; `None` where the cadence skipped the check.
    pub residual_history: Vec<Option<f64>>,
    pub rank_history: Vec<RankRecord>,
    pub wall_times: Vec<f64>,
    pub flop_snapshots: Vec<FlopSnapshot>,
    pub setup_flops: FlopCounts,
    pub totals: FlopCounts,
    pub setup_seconds: f64,
    /// Flops of one base-operator application to one column.
    pub c_gamma: u64,
    /// `‖E_k‖`-type decay history (Frobenius norms for the dense solver,
    /// probe norms `‖E_k z‖/‖z‖` otherwise); empty unless recorded.
    pub e_norm_history: Vec<f64>,
    pub f_norm_history: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// Turns a non-converged report into an error.
    pub fn require_converged(&self) -> Result<()> {
        if self.converged() {
            return Ok(());
        }
        Err(NareError::NotConverged {
            iterations: self.iterations,
            residual: self.final_residual.unwrap_or(f64::NAN),
            reason: match self.termination {
                Termination::MaxIterations => "iteration limit reached".into(),
                Termination::Stagnated => "stopping quantity stagnated".into(),
                Termination::Converged => unreachable!(),
            },
        })
    }

    pub fn max_rank(&self) -> usize {
        self.rank_history
            .iter()
            .chain(std::iter::once(&self.initial_rank))
            .map(|r| r.h.max(r.g.unwrap_or(0)))
            .max()
            .unwrap_or(0)
    }

    pub fn final_rank(&self) -> usize {
        self.rank_history.last().unwrap_or(&self.initial_rank).h
    }

    /// Residuals that were actually evaluated, in order.
    pub fn evaluated_residuals(&self) -> Vec<f64> {
        self.initial_residual
            .into_iter()
            .chain(self.residual_history.iter().flatten().copied())
            .collect()
    }

    /// Step flops (excluding residual, setup and diagnostics) of iteration `k` (1-based).
    pub fn step_flops(&self, k: usize) -> Option<u64> {
        self.flop_snapshots
            .iter()
            .find(|s| s.iteration == k)
            .map(|s| s.counts.step_total())
    }

    pub fn total_seconds(&self) -> f64 {
        self.setup_seconds + self.wall_times.iter().sum::<f64>()
    }
}

/// In the terminal phase a step counts as stalled unless it reduces the
/// best stopping quantity so far by this factor.
const STALL_FACTOR: f64 = 0.5;

/// Tracks the stopping test and assembles the report while a solver runs.
pub(crate) struct Monitor {
    config: SolverConfig,
    best: f64,
    stalls: usize,
    clock: Instant,
    report: SolveReport,
}

impl Monitor {
    pub(crate) fn new(config: &SolverConfig, algorithm: Algorithm, n: usize, gamma: f64, near_critical: bool) -> Self {
        let mut warnings = Vec::new();
        if near_critical {
            warnings.push("critical parameters c = 1, alpha = 0: K is singular and convergence may be slow".into());
        }
        Monitor {
            config: config.clone(),
            best: f64::INFINITY,
            stalls: 0,
            clock: Instant::now(),
            report: SolveReport {
                schema_version: REPORT_SCHEMA_VERSION,
                algorithm,
                n,
                gamma,
                near_critical,
                config: config.clone(),
                iterations: 0,
                termination: Termination::MaxIterations,
                final_residual: None,
                original_residual: None,
                initial_residual: None,
                initial_rank: RankRecord { h: 0, g: None },
                residual_history: Vec::new(),
                rank_history: Vec::new(),
                wall_times: Vec::new(),
                flop_snapshots: Vec::new(),
                setup_flops: FlopCounts::default(),
                totals: FlopCounts::default(),
                setup_seconds: 0.0,
                c_gamma: 0,
                e_norm_history: Vec::new(),
                f_norm_history: Vec::new(),
                warnings,
            },
        }
    }

    /// Records the initial state; returns `true` if it already satisfies the tolerance.
    pub(crate) fn setup_done(&mut self, flops: &mut FlopModel, rank: RankRecord, quantity: Option<f64>) -> bool {
        self.report.setup_seconds = self.clock.elapsed().as_secs_f64();
        self.report.setup_flops = flops.snapshot(0).counts;
        self.report.c_gamma = flops.c_gamma;
        self.report.initial_rank = rank;
        self.report.initial_residual = quantity;
        self.report.final_residual = quantity;
        if let Some(q) = quantity {
            self.best = q;
            if q <= self.config.tol {
                self.report.termination = Termination::Converged;
                return true;
            }
        }
        self.clock = Instant::now();
        false
    }

    /// Stagnation is only tested once the stopping quantity has reached the
    /// terminal phase, where every step must at least halve it.
    fn stall_gate(&self) -> f64 {
        self.config.tol.max(f64::EPSILON).sqrt()
    }

    /// Whether iteration `k` should evaluate the stopping quantity.
    pub(crate) fn wants_check(&self, k: usize) -> bool {
        self.config.checks_at(k)
    }

    pub(crate) fn push_norms(&mut self, e: f64, f: f64) {
        self.report.e_norm_history.push(e);
        self.report.f_norm_history.push(f);
    }

    /// Closes iteration `k`; returns the termination reason if the loop must stop.
    pub(crate) fn step_done(
        &mut self,
        k: usize,
        flops: &mut FlopModel,
        rank: RankRecord,
        quantity: Option<f64>,
    ) -> Option<Termination> {
        self.report.wall_times.push(self.clock.elapsed().as_secs_f64());
        self.report.flop_snapshots.push(flops.snapshot(k));
        self.report.rank_history.push(rank);
        self.report.residual_history.push(quantity);
        self.report.iterations = k;
        let mut done = None;
        if let Some(q) = quantity {
            self.report.final_residual = Some(q);
            if q <= self.config.tol {
                done = Some(Termination::Converged);
            } else if q.is_nan() {
                done = Some(Termination::Stagnated);
            } else if self.best <= self.stall_gate() && q > STALL_FACTOR * self.best {
                self.stalls += 1;
                if self.config.stall_limit > 0 && self.stalls >= self.config.stall_limit {
                    done = Some(Termination::Stagnated);
                }
            } else {
                self.stalls = 0;
            }
            if q < self.best {
                self.best = q;
            }
        }
        if done.is_none() && k >= self.config.max_iter {
            done = Some(Termination::MaxIterations);
        }
        if let Some(t) = done {
            self.report.termination = t;
        }
        self.clock = Instant::now();
        done
    }

    pub(crate) fn finish(mut self, flops: &FlopModel) -> SolveReport {
        self.report.totals = *flops.totals();
        self.report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monitor(config: SolverConfig) -> (Monitor, FlopModel) {
        (Monitor::new(&config, Algorithm::SdaLs, 4, 1.0, false), FlopModel::new(7))
    }

    fn rank(h: usize) -> RankRecord {
        RankRecord { h, g: Some(h) }
    }

    #[test]
    fn converges_and_keeps_histories_aligned() {
        let (mut m, mut flops) = monitor(SolverConfig::default());
        assert!(!m.setup_done(&mut flops, rank(1), Some(0.5)));
        assert_eq!(m.step_done(1, &mut flops, rank(2), Some(1e-3)), None);
        assert_eq!(m.step_done(2, &mut flops, rank(3), Some(1e-13)), Some(Termination::Converged));
        let r = m.finish(&flops);
        assert_eq!(r.iterations, 2);
        assert_eq!(r.residual_history.len(), 2);
        assert_eq!(r.rank_history.len(), 2);
        assert_eq!(r.wall_times.len(), 2);
        assert_eq!(r.flop_snapshots.len(), 2);
        assert_eq!(r.max_rank(), 3);
        assert_eq!(r.evaluated_residuals(), vec![0.5, 1e-3, 1e-13]);
        assert!(r.require_converged().is_ok());
    }

    #[test]
    fn stagnation_and_iteration_limit() {
        let (mut m, mut flops) = monitor(SolverConfig::default().with_stall_limit(2));
        m.setup_done(&mut flops, rank(1), Some(1.0));
        // Slow early progress is not stagnation.
        assert_eq!(m.step_done(1, &mut flops, rank(1), Some(0.99)), None);
        assert_eq!(m.step_done(2, &mut flops, rank(1), Some(0.995)), None);
        assert_eq!(m.step_done(3, &mut flops, rank(1), Some(1e-9)), None);
        assert_eq!(m.step_done(4, &mut flops, rank(1), Some(0.9e-9)), None);
        assert_eq!(m.step_done(5, &mut flops, rank(1), Some(1e-13 + 1e-9)), Some(Termination::Stagnated));
        assert!(m.finish(&flops).require_converged().is_err());

        let (mut m, mut flops) = monitor(SolverConfig::default().with_max_iter(1));
        m.setup_done(&mut flops, rank(1), Some(1.0));
        assert_eq!(m.step_done(1, &mut flops, rank(1), Some(0.1)), Some(Termination::MaxIterations));
    }

    #[test]
    fn algorithm_labels_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.label().parse::<Algorithm>().unwrap(), a);
        }
        assert!("newton".parse::<Algorithm>().is_err());
    }
}
