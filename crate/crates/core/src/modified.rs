//! Balanced doubling: on the balanced equation the G-side iterates are the
//! transposes of the H-side ones and `E_k`, `F_k` are symmetric, so only
//! `Q₁, Σ, Q₂` are stored and each step needs two large products instead of four.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{SolverConfig, StopRule};
use crate::error::Result;
use crate::probe::random_matrix;
use crate::report::{Algorithm, Monitor, RankRecord, SolveReport};
use crate::scalar::Real;
use crate::sda_ls::{
    column, core_change, diag, extend_and_compress, probe_norm, sda_ls_init, sda_ls_step, small_solve, InitScaling,
    SdaLsState,
};
use crate::structured::flops::{gemm_flops, FlopModel, Kernel};
use crate::structured::implicit::ImplicitIterate;
use crate::structured::lowrank::LowRankBilinear;
use crate::structured::residual::residual_norm;
use crate::structured::shifted::{gamma_select, make_base_operators, Shifted, ShiftedSolver};
use crate::transport::{balance, unbalance_solution, BalancedInstance, NareInstance, TransportStructure};

#[derive(Debug, Clone)]
pub struct ModifiedState<T: Real> {
    /// `H_k = Q₁ Σ Q₂ᵀ` on the balanced scale.
    pub h: LowRankBilinear<T>,
    pub eimp: ImplicitIterate<T>,
    pub fimp: ImplicitIterate<T>,
    pub k: usize,
    pub gamma: T,
    pub flops: FlopModel,
}

/// The two large products of one step.
#[derive(Debug, Clone)]
pub struct ModifiedProducts<T: Real> {
    /// `E_k Q₂`
    pub e_q2: DMatrix<T>,
    /// `F_k Q₁`
    pub f_q1: DMatrix<T>,
}

/// `Q₁₀ = √(2γ) W⁻¹φ`, `Q₂₀ = √(2γ) (E + γI)⁻¹φ`, `Σ₀ = 1`, then canonical form.
pub fn msda_init<T: Real>(binst: &BalancedInstance<T>, config: &SolverConfig) -> Result<ModifiedState<T>> {
    config.validate()?;
    let gamma = gamma_select(binst);
    let solver = ShiftedSolver::new(binst, gamma)?;
    let (e0, f0) = make_base_operators(&solver);
    let mut flops = FlopModel::new(e0.column_cost());
    let scale = (T::lit(2.0) * gamma).sqrt();
    let phi = column(binst.phi());
    let q1 = solver.solve_counted(Shifted::W, &phi, false, &mut flops, Kernel::Setup) * scale;
    let q2 = solver.solve_counted(Shifted::E, &phi, false, &mut flops, Kernel::Setup) * scale;
    let h = LowRankBilinear::from_factors(&q1, &DMatrix::identity(1, 1), &q2, T::lit(config.trunc_rel), &mut flops)?;
    Ok(ModifiedState {
        h,
        eimp: ImplicitIterate::new(Arc::new(e0)),
        fimp: ImplicitIterate::new(Arc::new(f0)),
        k: 0,
        gamma,
        flops,
    })
}

/// One balanced doubling step.
///
/// With `M₁ = Q₁ᵀQ₁`, `M₂ = Q₂ᵀQ₂`, `Σ̌ = (I − ΣM₂ΣM₁)⁻¹Σ`, `Σ̌' = (I − ΣM₁ΣM₂)⁻¹Σ`:
///
/// ```text
/// H_{k+1} = [Q₁, F_kQ₁] diag(Σ, Σ̌) [Q₂, E_kQ₂]ᵀ
/// E_{k+1} = E_k² + (E_kQ₂ Σ̌'M₁Σ)(E_kQ₂)ᵀ
/// F_{k+1} = F_k² + (F_kQ₁ Σ̌M₂Σ)(F_kQ₁)ᵀ
/// ```
pub fn msda_step<T: Real>(state: &mut ModifiedState<T>, config: &SolverConfig) -> Result<ModifiedProducts<T>> {
    let it = state.k;
    let flops = &mut state.flops;
    let n = state.h.dim();
    let m = state.h.rank();
    let (q1, q2) = (state.h.left(), state.h.right());
    let sigma = diag(state.h.core());

    let m1 = q1.tr_mul(q1);
    let m2 = q2.tr_mul(q2);
    flops.add(Kernel::CoreUpdate, 2 * gemm_flops(m, n, m));
    let s_m2_s = &sigma * &m2 * &sigma;
    let s_m1_s = &sigma * &m1 * &sigma;
    let sig_check = small_solve(&(&s_m2_s * &m1), &sigma, "I − ΣM₂ΣM₁", it, flops)?;
    let sig_check_t = small_solve(&(&s_m1_s * &m2), &sigma, "I − ΣM₁ΣM₂", it, flops)?;
    flops.add(Kernel::CoreUpdate, 8 * gemm_flops(m, m, m));

    let f_q1 = state.fimp.apply(q1, false, flops);
    let e_q2 = state.eimp.apply(q2, false, flops);

    let f_left = &f_q1 * (&sig_check * &m2 * &sigma);
    let e_left = &e_q2 * (&sig_check_t * &m1 * &sigma);
    flops.add(Kernel::RankUpdate, 2 * gemm_flops(n, m, m) + 4 * gemm_flops(m, m, m));

    state.h = extend_and_compress(&state.h, &sig_check, &f_q1, &e_q2, config, it + 1, flops)?;
    state.eimp.push_update(e_left, e_q2.clone());
    state.fimp.push_update(f_left, f_q1.clone());
    state.k += 1;
    Ok(ModifiedProducts { e_q2, f_q1 })
}

/// Solves the original equation through its balanced form and returns `X`
/// on the original scale.
pub fn msda_solve<T: Real>(inst: &NareInstance<T>, config: &SolverConfig) -> Result<(LowRankBilinear<T>, SolveReport)> {
    let binst = balance(inst)?;
    let mut state = msda_init(&binst, config)?;
    let mut monitor = Monitor::new(
        config,
        Algorithm::ModifiedSdaLs,
        inst.dim(),
        state.gamma.as_f64(),
        inst.near_critical(),
    );
    let ranks = |s: &ModifiedState<T>| RankRecord { h: s.h.rank(), g: None };
    let q0 = match config.stop_rule {
        StopRule::Residual => Some(residual_norm(&binst, &state.h, &mut state.flops)?.normalized.as_f64()),
        StopRule::CoreChange => None,
    };
    if config.track_operator_norms {
        let (e, f) = (probe_norm(&state.eimp, &mut state.flops), probe_norm(&state.fimp, &mut state.flops));
        monitor.push_norms(e, f);
    }
    let r0 = ranks(&state);
    if !monitor.setup_done(&mut state.flops, r0, q0) {
        for k in 1..=config.max_iter {
            let prev = state.h.core().clone();
            msda_step(&mut state, config)?;
            if config.track_operator_norms {
                let (e, f) = (probe_norm(&state.eimp, &mut state.flops), probe_norm(&state.fimp, &mut state.flops));
                monitor.push_norms(e, f);
            }
            let q = if monitor.wants_check(k) {
                Some(match config.stop_rule {
                    StopRule::Residual => residual_norm(&binst, &state.h, &mut state.flops)?.normalized.as_f64(),
                    StopRule::CoreChange => core_change(&prev, state.h.core()),
                })
            } else {
                None
            };
            let r = ranks(&state);
            if monitor.step_done(k, &mut state.flops, r, q).is_some() {
                break;
            }
        }
    }
    let x = unbalance_solution(&state.h, binst.phi())?;
    let original = residual_norm(inst, &x, &mut state.flops)?;
    let mut report = monitor.finish(&state.flops);
    report.original_residual = Some(original.normalized.as_f64());
    Ok((x, report))
}

/// Deviations from the balanced symmetry relations at one iteration. Factor
/// deviations are weighted by the singular values, e.g.
/// `‖(Q₁ − P₂)Σ‖_F / ‖Σ‖_F`, because singular vectors of tiny singular values
/// are not determined to working accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub k: usize,
    pub rank_h: usize,
    pub rank_g: usize,
    /// `Q₁ = P₂`
    pub q1_p2: f64,
    /// `Q₂ = P₁`
    pub q2_p1: f64,
    /// `Σ = Γ`
    pub sigma_gamma: f64,
    /// `‖H − Gᵀ‖_F / ‖H‖_F`
    pub h_gt: f64,
    /// `|xᵀE_k y − yᵀE_k x|` relative to `‖x‖‖y‖` and the size of `E_k`.
    pub e_symmetry: f64,
    pub f_symmetry: f64,
    /// `E_kP₁ = E_kᵀQ₂`
    pub e_products: f64,
    /// `F_kQ₁ = F_kᵀP₂`
    pub f_products: f64,
    /// `‖H_k(balanced solver) − H_k(full solver)‖_F / ‖H_k‖_F`
    pub msda_h: f64,
}

impl AuditRow {
    pub fn max_deviation(&self) -> f64 {
        [
            self.q1_p2,
            self.q2_p1,
            self.sigma_gamma,
            self.h_gt,
            self.e_symmetry,
            self.f_symmetry,
            self.e_products,
            self.f_products,
            self.msda_h,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryAudit {
    pub rows: Vec<AuditRow>,
}

impl SymmetryAudit {
    pub fn max_deviation(&self) -> f64 {
        self.rows.iter().map(AuditRow::max_deviation).fold(0.0, f64::max)
    }
}

/// Upper limit on `n` for the audit.
pub const AUDIT_CAP: usize = 256;

const AUDIT_PROBE_SEEDS: (u64, u64) = (0xa11d, 0xa11e);

fn ratio<T: Real>(num: T, den: T) -> f64 {
    if num == T::zero() {
        0.0
    } else {
        (num / den).as_f64()
    }
}

fn weighted_gap<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, weights: &nalgebra::DVector<T>) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    let mut d = a - b;
    for (j, &w) in weights.iter().enumerate() {
        d.column_mut(j).scale_mut(w);
    }
    ratio(d.norm(), weights.norm())
}

fn operator_asymmetry<T: Real>(op: &ImplicitIterate<T>, flops: &mut FlopModel) -> f64 {
    let n = op.dim();
    let x = random_matrix::<T>(n, 1, AUDIT_PROBE_SEEDS.0);
    let y = random_matrix::<T>(n, 1, AUDIT_PROBE_SEEDS.1);
    let ex = op.apply_uncounted(&x, false, flops, Kernel::Diagnostics);
    let ey = op.apply_uncounted(&y, false, flops, Kernel::Diagnostics);
    let gap = (x.dot(&ey) - y.dot(&ex)).abs();
    let (nx, ny) = (x.norm(), y.norm());
    let size = (ex.norm() / nx).max(ey.norm() / ny);
    ratio(gap, nx * ny * size)
}

fn audit_row<T: Real>(full: &SdaLsState<T>, sym: &ModifiedState<T>, flops: &mut FlopModel) -> AuditRow {
    let (h, g) = (&full.h, &full.g);
    let same_rank = h.rank() == g.rank();
    let sigma_gamma = if same_rank {
        ratio((h.core() - g.core()).norm(), h.core().norm())
    } else {
        f64::INFINITY
    };
    let products = |op: &ImplicitIterate<T>, a: &DMatrix<T>, b: &DMatrix<T>, w: &nalgebra::DVector<T>, flops: &mut FlopModel| {
        if a.shape() != b.shape() {
            return f64::INFINITY;
        }
        let pa = op.apply_uncounted(a, false, flops, Kernel::Diagnostics);
        let pb = op.apply_uncounted(b, true, flops, Kernel::Diagnostics);
        let mut d = &pa - &pb;
        let mut s = pa;
        for (j, &x) in w.iter().enumerate() {
            d.column_mut(j).scale_mut(x);
            s.column_mut(j).scale_mut(x);
        }
        ratio(d.norm(), s.norm())
    };
    AuditRow {
        k: full.k,
        rank_h: h.rank(),
        rank_g: g.rank(),
        q1_p2: weighted_gap(h.left(), g.right(), h.core()),
        q2_p1: weighted_gap(h.right(), g.left(), h.core()),
        sigma_gamma,
        h_gt: ratio(h.distance(&g.transpose()), h.norm()),
        e_symmetry: operator_asymmetry(&full.eimp, flops),
        f_symmetry: operator_asymmetry(&full.fimp, flops),
        e_products: products(&full.eimp, g.left(), h.right(), h.core(), flops),
        f_products: products(&full.fimp, h.left(), g.right(), h.core(), flops),
        msda_h: ratio(sym.h.distance(h), h.norm()),
    }
}

/// Runs the full factored solver (with the symmetric initial scaling) and the
/// balanced solver side by side on `binst` for `k_max` steps and records the
/// symmetry deviations after each step, starting with `k = 0`.
pub fn audit_symmetry<T: Real>(binst: &BalancedInstance<T>, config: &SolverConfig, k_max: usize) -> Result<SymmetryAudit> {
    let n = binst.dim();
    if n > AUDIT_CAP {
        return Err(crate::error::NareError::DenseCapExceeded { n, cap: AUDIT_CAP });
    }
    let mut full = sda_ls_init(binst, config, InitScaling::Symmetric)?;
    let mut sym = msda_init(binst, config)?;
    let mut scratch = FlopModel::default();
    let mut rows = vec![audit_row(&full, &sym, &mut scratch)];
    for _ in 0..k_max {
        sda_ls_step(&mut full, config)?;
        msda_step(&mut sym, config)?;
        rows.push(audit_row(&full, &sym, &mut scratch));
    }
    Ok(SymmetryAudit { rows })
}
