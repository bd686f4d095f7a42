//! Large-scale doubling with low-rank `H_k`, `G_k` and implicit `E_k`, `F_k`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::config::{SolverConfig, StopRule};
use crate::error::{NareError, Result};
use crate::probe::random_matrix;
use crate::report::{Algorithm, Monitor, RankRecord, SolveReport};
use crate::scalar::Real;
use crate::structured::flops::{gemm_flops, FlopModel, Kernel};
use crate::structured::implicit::ImplicitIterate;
use crate::structured::lowrank::{extend_basis, LowRankBilinear, OrderedSvd};
use crate::structured::residual::residual_norm;
use crate::structured::shifted::{gamma_select, make_base_operators, Shifted, ShiftedSolver};
use crate::transport::TransportStructure;

/// How the scalar `2γ` is split between the initial factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScaling {
    /// `Q₁₀ = 2γW⁻¹b`, `Q₂₀ = (E+γI)⁻ᵀb`, `P₁₀ = 2γ(E+γI)⁻¹c`, `P₂₀ = W⁻ᵀc`.
    #[default]
    Original,
    /// `√(2γ)` on both sides, so that `Q₁₀ = P₂₀` and `Q₂₀ = P₁₀` on balanced instances.
    Symmetric,
}

#[derive(Debug, Clone)]
pub struct SdaLsState<T: Real> {
    /// `H_k = Q₁ Σ Q₂ᵀ`
    pub h: LowRankBilinear<T>,
    /// `G_k = P₁ Γ P₂ᵀ`
    pub g: LowRankBilinear<T>,
    pub eimp: ImplicitIterate<T>,
    pub fimp: ImplicitIterate<T>,
    pub k: usize,
    pub gamma: T,
    pub flops: FlopModel,
}

/// The four large products of one step, all taken with the operators of the
/// step's starting iteration.
#[derive(Debug, Clone)]
pub struct StepProducts<T: Real> {
    /// `E_k P₁`
    pub e_p1: DMatrix<T>,
    /// `E_kᵀ Q₂`
    pub et_q2: DMatrix<T>,
    /// `F_k Q₁`
    pub f_q1: DMatrix<T>,
    /// `F_kᵀ P₂`
    pub ft_p2: DMatrix<T>,
}

pub(crate) fn column<T: Real>(v: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

pub(crate) fn lu_flops(n: usize, rhs: usize) -> u64 {
    let n = n as u64;
    2 * n * n * n / 3 + 2 * n * n * rhs as u64
}

fn svd_flops(r: usize, c: usize) -> u64 {
    let k = r.min(c) as u64;
    4 * (r as u64) * (c as u64) * k + 22 * k * k * k
}

/// `(I − X)⁻¹ rhs` for a small square `X`.
pub(crate) fn small_solve<T: Real>(
    x: &DMatrix<T>,
    rhs: &DMatrix<T>,
    what: &'static str,
    iteration: usize,
    flops: &mut FlopModel,
) -> Result<DMatrix<T>> {
    let m = x.nrows();
    if m == 0 {
        return Ok(rhs.clone());
    }
    flops.add(Kernel::SmallDense, lu_flops(m, rhs.ncols()));
    let sys = DMatrix::identity(m, m) - x;
    let out = sys.lu().solve(rhs).ok_or(NareError::NearSingular {
        what,
        iteration: Some(iteration),
    })?;
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(NareError::NearSingular {
            what,
            iteration: Some(iteration),
        })
    }
}

pub(crate) fn diag<T: Real>(v: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_diagonal(v)
}

/// New canonical factorization of `[L, new_left] · diag(core, inner) · [R, new_right]ᵀ`
/// for `x = L core Rᵀ`, via basis extension, a small SVD and truncation.
pub(crate) fn extend_and_compress<T: Real>(
    x: &LowRankBilinear<T>,
    inner: &DMatrix<T>,
    new_left: &DMatrix<T>,
    new_right: &DMatrix<T>,
    config: &SolverConfig,
    iteration: usize,
    flops: &mut FlopModel,
) -> Result<LowRankBilinear<T>> {
    let n = x.dim();
    let m = x.rank();
    let (wl, wr) = (new_left.ncols(), new_right.ncols());
    let el = extend_basis(x.left(), new_left, flops, Kernel::Orthogonalize);
    let er = extend_basis(x.right(), new_right, flops, Kernel::Orthogonalize);
    let (pl, pr) = (el.qhat.ncols(), er.qhat.ncols());

    // [L, new_left] = [L, Q̂] T with T = [I, S; 0, R].
    let trap = |s: &DMatrix<T>, r: &DMatrix<T>, p: usize, w: usize| {
        let mut t = DMatrix::zeros(m + p, m + w);
        t.view_mut((0, 0), (m, m)).fill_with_identity();
        t.view_mut((0, m), (m, w)).copy_from(s);
        t.view_mut((m, m), (p, w)).copy_from(r);
        t
    };
    let t1 = trap(&el.s, &el.r, pl, wl);
    let t2 = trap(&er.s, &er.r, pr, wr);
    let mut middle = DMatrix::zeros(m + wl, m + wr);
    for i in 0..m {
        middle[(i, i)] = x.core()[i];
    }
    middle.view_mut((m, m), (wl, wr)).copy_from(inner);
    let core = &t1 * middle * t2.transpose();
    flops.add(
        Kernel::SmallDense,
        gemm_flops(m + pl, m + wl, m + wr) + gemm_flops(m + pl, m + wr, m + pr) + svd_flops(m + pl, m + pr),
    );

    let svd = OrderedSvd::new(core);
    let keep = svd.truncation_rank(T::lit(config.trunc_rel));
    if keep > config.max_rank {
        return Err(NareError::RankOverflow {
            iteration,
            rank: keep,
            max_rank: config.max_rank,
        });
    }
    let assemble = |basis: &DMatrix<T>, qhat: &DMatrix<T>, coeffs: &DMatrix<T>| {
        let mut out = basis * coeffs.rows(0, basis.ncols()).columns(0, keep);
        if qhat.ncols() > 0 {
            out.gemm(T::one(), qhat, &coeffs.rows(basis.ncols(), qhat.ncols()).columns(0, keep), T::one());
        }
        out
    };
    let left = assemble(x.left(), &el.qhat, &svd.u);
    let right = assemble(x.right(), &er.qhat, &svd.v);
    flops.add(
        Kernel::FactorAssembly,
        gemm_flops(n, m + pl, keep) + gemm_flops(n, m + pr, keep),
    );
    LowRankBilinear::new(left, DVector::from_iterator(keep, svd.s.iter().take(keep).copied()), right)
}

/// Builds `H₀`, `G₀` in canonical form and the level-0 implicit operators.
pub fn sda_ls_init<T: Real, S: TransportStructure<T> + ?Sized>(
    inst: &S,
    config: &SolverConfig,
    scaling: InitScaling,
) -> Result<SdaLsState<T>> {
    config.validate()?;
    let gamma = gamma_select(inst);
    let solver = ShiftedSolver::new(inst, gamma)?;
    let (e0, f0) = make_base_operators(&solver);
    let mut flops = FlopModel::new(e0.column_cost());
    let two_gamma = T::lit(2.0) * gamma;
    let (s1, s2) = match scaling {
        InitScaling::Original => (two_gamma, T::one()),
        InitScaling::Symmetric => (two_gamma.sqrt(), two_gamma.sqrt()),
    };
    let b = column(inst.b_vec());
    let c = column(inst.c_vec());
    let k = Kernel::Setup;
    let q1 = solver.solve_counted(Shifted::W, &b, false, &mut flops, k) * s1;
    let q2 = solver.solve_counted(Shifted::E, &b, true, &mut flops, k) * s2;
    let p1 = solver.solve_counted(Shifted::E, &c, false, &mut flops, k) * s1;
    let p2 = solver.solve_counted(Shifted::W, &c, true, &mut flops, k) * s2;
    let trunc = T::lit(config.trunc_rel);
    let one = DMatrix::identity(1, 1);
    let h = LowRankBilinear::from_factors(&q1, &one, &q2, trunc, &mut flops)?;
    let g = LowRankBilinear::from_factors(&p1, &one, &p2, trunc, &mut flops)?;
    Ok(SdaLsState {
        h,
        g,
        eimp: ImplicitIterate::new(Arc::new(e0)),
        fimp: ImplicitIterate::new(Arc::new(f0)),
        k: 0,
        gamma,
        flops,
    })
}

/// One doubling step on the factored iterates.
///
/// With `M₁ = P₂ᵀQ₁`, `M₂ = Q₂ᵀP₁`, `Σ̌ = (I − ΣM₂ΓM₁)⁻¹Σ` and
/// `Γ̌ = (I − ΓM₁ΣM₂)⁻¹Γ`:
///
/// ```text
/// H_{k+1} = [Q₁, F_kQ₁] diag(Σ, Σ̌) [Q₂, E_kᵀQ₂]ᵀ
/// G_{k+1} = [P₁, E_kP₁] diag(Γ, Γ̌) [P₂, F_kᵀP₂]ᵀ
/// E_{k+1} = E_k² + (E_kP₁ Γ̌M₁Σ)(E_kᵀQ₂)ᵀ
/// F_{k+1} = F_k² + (F_kQ₁ Σ̌M₂Γ)(F_kᵀP₂)ᵀ
/// ```
pub fn sda_ls_step<T: Real>(state: &mut SdaLsState<T>, config: &SolverConfig) -> Result<StepProducts<T>> {
    let it = state.k;
    let flops = &mut state.flops;
    let n = state.h.dim();
    let (m, l) = (state.h.rank(), state.g.rank());
    let (q1, q2) = (state.h.left(), state.h.right());
    let (p1, p2) = (state.g.left(), state.g.right());
    let sigma = diag(state.h.core());
    let gam = diag(state.g.core());

    let m2 = q2.tr_mul(p1);
    let m1 = p2.tr_mul(q1);
    flops.add(Kernel::CoreUpdate, 2 * gemm_flops(m, n, l));
    let sig_m2_gam = &sigma * &m2 * &gam;
    let gam_m1_sig = &gam * &m1 * &sigma;
    let sig_check = small_solve(&(&sig_m2_gam * &m1), &sigma, "I − ΣM₂ΓM₁", it, flops)?;
    let gam_check = small_solve(&(&gam_m1_sig * &m2), &gam, "I − ΓM₁ΣM₂", it, flops)?;
    flops.add(Kernel::CoreUpdate, 4 * gemm_flops(m, m, l) + 4 * gemm_flops(l, l, m));

    let f_q1 = state.fimp.apply(q1, false, flops);
    let et_q2 = state.eimp.apply(q2, true, flops);
    let e_p1 = state.eimp.apply(p1, false, flops);
    let ft_p2 = state.fimp.apply(p2, true, flops);

    let f_left = &f_q1 * (&sig_check * &m2 * &gam);
    let e_left = &e_p1 * (&gam_check * &m1 * &sigma);
    flops.add(
        Kernel::RankUpdate,
        gemm_flops(n, m, l) + gemm_flops(n, l, m) + 2 * gemm_flops(m, m, l) + 2 * gemm_flops(l, l, m),
    );

    let h = extend_and_compress(&state.h, &sig_check, &f_q1, &et_q2, config, it + 1, flops)?;
    let g = extend_and_compress(&state.g, &gam_check, &e_p1, &ft_p2, config, it + 1, flops)?;
    state.h = h;
    state.g = g;
    state.eimp.push_update(e_left, et_q2.clone());
    state.fimp.push_update(f_left, ft_p2.clone());
    state.k += 1;
    Ok(StepProducts {
        e_p1,
        et_q2,
        f_q1,
        ft_p2,
    })
}

/// Seed of the fixed probe used for operator-norm histories.
pub(crate) const NORM_PROBE_SEED: u64 = 0x5eed;

/// `‖M z‖ / ‖z‖` for the fixed probe `z`, charged to diagnostics.
pub(crate) fn probe_norm<T: Real>(op: &ImplicitIterate<T>, flops: &mut FlopModel) -> f64 {
    let z = random_matrix::<T>(op.dim(), 1, NORM_PROBE_SEED);
    (op.apply_uncounted(&z, false, flops, Kernel::Diagnostics).norm() / z.norm()).as_f64()
}

/// Relative change between consecutive core diagonals.
pub(crate) fn core_change<T: Real>(prev: &DVector<T>, next: &DVector<T>) -> f64 {
    let len = prev.len().max(next.len());
    let get = |v: &DVector<T>, i: usize| if i < v.len() { v[i] } else { T::zero() };
    let diff = (0..len).fold(T::zero(), |acc, i| {
        let d = get(prev, i) - get(next, i);
        acc + d * d
    });
    (diff.sqrt() / next.norm()).as_f64()
}

/// Runs the factored doubling on `inst` and returns `X = lim H_k`.
pub fn sda_ls_solve<T: Real, S: TransportStructure<T> + ?Sized>(
    inst: &S,
    config: &SolverConfig,
) -> Result<(LowRankBilinear<T>, SolveReport)> {
    let mut state = sda_ls_init(inst, config, InitScaling::Original)?;
    let mut monitor = Monitor::new(config, Algorithm::SdaLs, inst.dim(), state.gamma.as_f64(), inst.near_critical());
    let ranks = |s: &SdaLsState<T>| RankRecord {
        h: s.h.rank(),
        g: Some(s.g.rank()),
    };
    let q0 = match config.stop_rule {
        StopRule::Residual => Some(residual_norm(inst, &state.h, &mut state.flops)?.normalized.as_f64()),
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
            sda_ls_step(&mut state, config)?;
            if config.track_operator_norms {
                let (e, f) = (probe_norm(&state.eimp, &mut state.flops), probe_norm(&state.fimp, &mut state.flops));
                monitor.push_norms(e, f);
            }
            let q = if monitor.wants_check(k) {
                Some(match config.stop_rule {
                    StopRule::Residual => residual_norm(inst, &state.h, &mut state.flops)?.normalized.as_f64(),
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
    let report = monitor.finish(&state.flops);
    Ok((state.h, report))
}
