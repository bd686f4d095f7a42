//! Dense structure-preserving doubling, used as the small-`n` oracle.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::config::{SolverConfig, StopRule};
use crate::error::{NareError, Result};
use crate::report::{Algorithm, Monitor, RankRecord, SolveReport};
use crate::scalar::Real;
use crate::structured::flops::{gemm_flops, FlopModel, Kernel};
use crate::structured::shifted::gamma_select;
use crate::transport::{assemble_dense, DenseCoefficients, TransportStructure, DEFAULT_DENSE_CAP};

/// The four doubling blocks at iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSdaState<T: Real> {
    pub e: DMatrix<T>,
    pub f: DMatrix<T>,
    pub g: DMatrix<T>,
    pub h: DMatrix<T>,
    pub k: usize,
    pub gamma: T,
}

fn lu_solve<T: Real>(m: DMatrix<T>, rhs: &DMatrix<T>, what: &'static str, iteration: Option<usize>) -> Result<DMatrix<T>> {
    let out = m.lu().solve(rhs).ok_or(NareError::NearSingular { what, iteration })?;
    if out.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(NareError::NearSingular { what, iteration })
    }
}

fn lu_flops(n: usize, rhs: usize) -> u64 {
    let n = n as u64;
    2 * n * n * n / 3 + 2 * n * n * rhs as u64
}

/// `E₀ = I − 2γV⁻¹`, `F₀ = I − 2γW⁻¹`, `G₀ = 2γ(E + γI)⁻¹CW⁻¹`, `H₀ = 2γW⁻¹B(E + γI)⁻¹`.
pub fn dense_sda_init<T: Real>(coeffs: &DenseCoefficients<T>, gamma: T) -> Result<DenseSdaState<T>> {
    let n = coeffs.n();
    let id = DMatrix::<T>::identity(n, n);
    let eg = &coeffs.e + &id * gamma;
    let ag = &coeffs.a + &id * gamma;
    let eg_inv = lu_solve(eg, &id, "E + γI", None)?;
    let ag_inv = lu_solve(ag.clone(), &id, "A + γI", None)?;
    let w = &ag - &coeffs.b * &eg_inv * &coeffs.c;
    let v = &coeffs.e + &id * gamma - &coeffs.c * &ag_inv * &coeffs.b;
    let w_inv = lu_solve(w, &id, "W", None)?;
    let v_inv = lu_solve(v, &id, "V", None)?;
    let two_gamma = T::lit(2.0) * gamma;
    Ok(DenseSdaState {
        e: &id - &v_inv * two_gamma,
        f: &id - &w_inv * two_gamma,
        g: &eg_inv * &coeffs.c * &w_inv * two_gamma,
        h: &w_inv * &coeffs.b * &eg_inv * two_gamma,
        k: 0,
        gamma,
    })
}

/// One doubling step:
///
/// ```text
/// E ← E(I − GH)⁻¹E,  F ← F(I − HG)⁻¹F,
/// G ← G + E(I − GH)⁻¹GF,  H ← H + F(I − HG)⁻¹HE.
/// ```
pub fn dense_sda_step<T: Real>(state: &mut DenseSdaState<T>) -> Result<()> {
    let n = state.e.nrows();
    let id = DMatrix::<T>::identity(n, n);
    let it = Some(state.k);
    let igh = &id - &state.g * &state.h;
    let ihg = &id - &state.h * &state.g;

    let mut rhs1 = DMatrix::zeros(n, 2 * n);
    rhs1.columns_mut(0, n).copy_from(&state.e);
    rhs1.columns_mut(n, n).copy_from(&(&state.g * &state.f));
    let z1 = lu_solve(igh, &rhs1, "I − GH", it)?;
    let mut rhs2 = DMatrix::zeros(n, 2 * n);
    rhs2.columns_mut(0, n).copy_from(&state.f);
    rhs2.columns_mut(n, n).copy_from(&(&state.h * &state.e));
    let z2 = lu_solve(ihg, &rhs2, "I − HG", it)?;

    let e_new = &state.e * z1.columns(0, n);
    let g_new = &state.g + &state.e * z1.columns(n, n);
    let f_new = &state.f * z2.columns(0, n);
    let h_new = &state.h + &state.f * z2.columns(n, n);
    state.e = e_new;
    state.f = f_new;
    state.g = g_new;
    state.h = h_new;
    state.k += 1;
    Ok(())
}

fn step_flops(n: usize) -> u64 {
    4 * gemm_flops(n, n, n) + 2 * lu_flops(n, 2 * n) + 4 * gemm_flops(n, n, n)
}

/// Minimal solution `X`, dual solution `Y` and the run report.
#[derive(Debug, Clone)]
pub struct DenseSolution<T: Real> {
    pub x: DMatrix<T>,
    pub y: DMatrix<T>,
    pub report: SolveReport,
}

pub fn dense_sda_solve<T: Real, S: TransportStructure<T> + ?Sized>(inst: &S, config: &SolverConfig) -> Result<DenseSolution<T>> {
    config.validate()?;
    let coeffs = assemble_dense(inst, DEFAULT_DENSE_CAP)?;
    let n = coeffs.n();
    let gamma = gamma_select(inst);
    let bnorm = inst.b_norm();
    let mut monitor = Monitor::new(config, Algorithm::DenseSda, n, gamma.as_f64(), inst.near_critical());
    let mut flops = FlopModel::new(0);
    let mut state = dense_sda_init(&coeffs, gamma)?;
    flops.add(Kernel::Setup, 6 * lu_flops(n, n) + 6 * gemm_flops(n, n, n));

    let quantity = |state: &DenseSdaState<T>, prev: Option<&DMatrix<T>>, flops: &mut FlopModel| -> f64 {
        match (config.stop_rule, prev) {
            (StopRule::CoreChange, Some(p)) => ((&state.h - p).norm() / state.h.norm()).as_f64(),
            (StopRule::CoreChange, None) => f64::INFINITY,
            (StopRule::Residual, _) => {
                flops.add(Kernel::Residual, 3 * gemm_flops(n, n, n));
                (coeffs.residual(&state.h) / bnorm).as_f64()
            }
        }
    };

    let full = RankRecord { h: n, g: Some(n) };
    let q0 = quantity(&state, None, &mut flops);
    monitor.push_norms(state.e.norm().as_f64(), state.f.norm().as_f64());
    if !monitor.setup_done(&mut flops, full, Some(q0)) {
        for k in 1..=config.max_iter {
            let prev = state.h.clone();
            dense_sda_step(&mut state)?;
            flops.add(Kernel::SmallDense, step_flops(n));
            monitor.push_norms(state.e.norm().as_f64(), state.f.norm().as_f64());
            let q = monitor.wants_check(k).then(|| quantity(&state, Some(&prev), &mut flops));
            if monitor.step_done(k, &mut flops, full, q).is_some() {
                break;
            }
        }
    }
    let report = monitor.finish(&flops);
    Ok(DenseSolution {
        x: state.h,
        y: state.g,
        report,
    })
}

/// Spectra of `H = [E, −C; B, −A]` and `K = [E, −C; −B, A]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// `(re, im)` pairs sorted by nonincreasing real part.
    pub h_eigenvalues: Vec<(f64, f64)>,
    pub k_eigenvalues: Vec<(f64, f64)>,
    /// Hausdorff distance between the `K` spectrum and
    /// `{λ_1, …, λ_n} ∪ {−λ_{n+1}, …, −λ_{2n}}`.
    pub match_distance: f64,
}

fn sorted_spectrum<T: Real>(m: DMatrix<T>) -> Vec<(f64, f64)> {
    let eig: Vec<Complex<T>> = m.complex_eigenvalues().iter().cloned().collect();
    let mut out: Vec<(f64, f64)> = eig.iter().map(|z| (z.re.as_f64(), z.im.as_f64())).collect();
    out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(b.1.total_cmp(&a.1)));
    out
}

fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let dist = |p: &(f64, f64), q: &(f64, f64)| (p.0 - q.0).hypot(p.1 - q.1);
    let directed = |x: &[(f64, f64)], y: &[(f64, f64)]| {
        x.iter()
            .map(|p| y.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Upper limit on `n` for the dense eigenvalue check.
pub const SPECTRAL_CHECK_CAP: usize = 64;

pub fn spectral_check<T: Real, S: TransportStructure<T> + ?Sized>(inst: &S) -> Result<SpectralReport> {
    let coeffs = assemble_dense(inst, SPECTRAL_CHECK_CAP)?;
    Ok(spectral_check_dense(&coeffs))
}

pub fn spectral_check_dense<T: Real>(coeffs: &DenseCoefficients<T>) -> SpectralReport {
    let n = coeffs.n();
    let h = sorted_spectrum(coeffs.h_matrix());
    let k = sorted_spectrum(coeffs.k_matrix());
    let mapped: Vec<(f64, f64)> = h
        .iter()
        .enumerate()
        .map(|(i, &(re, im))| if i < n { (re, im) } else { (-re, -im) })
        .collect();
    SpectralReport {
        match_distance: hausdorff(&k, &mapped),
        h_eigenvalues: h,
        k_eigenvalues: k,
    }
}
