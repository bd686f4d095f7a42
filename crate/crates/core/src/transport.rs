//! Transport-theory instances of `XCX − XE − AX + B = 0`.
//!
//! The coefficients are
//!
//! ```text
//! A = Δ − e qᵀ,  B = e eᵀ,  C = q qᵀ,  E = D − q eᵀ,
//! δ_i = 1 / (c ω_i (1 + α)),  d_i = 1 / (c ω_i (1 − α)),  q_i = w_i / (2 ω_i),
//! ```
//!
//! for a quadrature `(ω_i, w_i)` on (0, 1). They are only ever stored as the
//! vectors `δ`, `d`, `q`; dense matrices are assembled on request for small
//! oracle problems.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{NareError, Result};
use crate::scalar::Real;
use crate::structured::flops::FlopModel;
use crate::structured::lowrank::LowRankBilinear;

/// Default upper bound on `n` for dense assembly.
pub const DEFAULT_DENSE_CAP: usize = 512;

/// Physical parameters of the transport model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportParams<T: Real> {
    c: T,
    alpha: T,
    n: usize,
}

impl<T: Real> TransportParams<T> {
    /// Requires `0 < c ≤ 1`, `0 ≤ α < 1`, `n ≥ 1`.
    pub fn new(c: T, alpha: T, n: usize) -> Result<Self> {
        if !(c > T::zero() && c <= T::one()) {
            return Err(NareError::InvalidParameter {
                name: "c",
                reason: format!("must satisfy 0 < c <= 1, got {c}"),
            });
        }
        if !(alpha >= T::zero() && alpha < T::one()) {
            return Err(NareError::InvalidParameter {
                name: "alpha",
                reason: format!("must satisfy 0 <= alpha < 1, got {alpha}"),
            });
        }
        if n == 0 {
            return Err(NareError::InvalidParameter {
                name: "n",
                reason: "must be at least 1".into(),
            });
        }
        Ok(TransportParams { c, alpha, n })
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `c = 1, α = 0`: the M-matrix `K` is singular there.
    pub fn is_critical(&self) -> bool {
        self.c == T::one() && self.alpha == T::zero()
    }
}

/// Quadrature nodes in (0, 1), strictly decreasing, with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature<T: Real> {
    omega: Vec<T>,
    weights: Vec<T>,
}

/// Tolerance on `|Σ w_i − 1|`, as a multiple of unit roundoff (1e-14 for f64).
const WEIGHT_SUM_ULPS: f64 = 45.0;

impl<T: Real> Quadrature<T> {
    pub fn new(omega: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if omega.is_empty() {
            return Err(NareError::InvalidQuadrature("no nodes".into()));
        }
        if omega.len() != weights.len() {
            return Err(NareError::InvalidQuadrature(format!(
                "{} nodes but {} weights",
                omega.len(),
                weights.len()
            )));
        }
        for (i, &w) in omega.iter().enumerate() {
            if !(w > T::zero() && w < T::one()) {
                return Err(NareError::InvalidQuadrature(format!("node {} = {w} is outside (0, 1)", i + 1)));
            }
        }
        if let Some(i) = omega.windows(2).position(|p| p[0] <= p[1]) {
            return Err(NareError::InvalidQuadrature(format!(
                "nodes must be strictly decreasing (node {} = {}, node {} = {})",
                i + 1,
                omega[i],
                i + 2,
                omega[i + 1]
            )));
        }
        if let Some(i) = weights.iter().position(|&w| w.partial_cmp(&T::zero()) != Some(Ordering::Greater)) {
            return Err(NareError::InvalidQuadrature(format!("weight {} = {} is not positive", i + 1, weights[i])));
        }
        let sum = weights.iter().fold(T::zero(), |a, &w| a + w);
        if (sum - T::one()).abs() > T::lit(WEIGHT_SUM_ULPS) * T::eps() {
            return Err(NareError::InvalidQuadrature(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Quadrature { omega, weights })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omega(&self) -> &[T] {
        &self.omega
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

/// Gauss–Legendre rule on (0, 1) with nodes in decreasing order.
///
/// Roots are found by Newton's method in the angle variable `x = cos θ`, which
/// keeps full relative accuracy for nodes close to 0 and 1. The mapped nodes
/// and weights are `ω = (1 + cos θ)/2 = cos²(θ/2)` and `w = 1 / (dP_n/dθ)²`.
pub fn gauss_legendre<T: Real>(n: usize) -> Quadrature<T> {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
    let nf = T::from_count(n);
    let half = T::lit(0.5);
    let pi = T::pi();
    let mut omega = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);

    // P_n(cos θ) and dP_n/dθ = n (x P_n − P_{n−1}) / sin θ.
    let legendre = |theta: T| -> (T, T) {
        let x = theta.cos();
        let mut p_prev = T::one();
        let mut p = x;
        for k in 1..n {
            let kf = T::from_count(k);
            let next = ((kf + kf + T::one()) * x * p - kf * p_prev) / (kf + T::one());
            p_prev = p;
            p = next;
        }
        let dp = nf * (x * p - p_prev) / theta.sin();
        (p, dp)
    };

    for i in 1..=n {
        let mut theta = pi * (T::from_count(i) - T::lit(0.25)) / (nf + half);
        for _ in 0..100 {
            let (p, dp) = legendre(theta);
            let step = p / dp;
            theta -= step;
            if step.abs() <= T::lit(4.0) * T::eps() * theta.abs() {
                break;
            }
        }
        let (_, dp) = legendre(theta);
        let x = theta.cos();
        let node = if x >= T::zero() {
            half * (T::one() + x)
        } else {
            let c = (theta * half).cos();
            c * c
        };
        omega.push(node);
        weights.push(T::one() / (dp * dp));
    }
    Quadrature { omega, weights }
}

/// Vectors describing the coefficients `A = Δ − b cᵀ`, `B = b bᵀ`,
/// `C = c cᵀ`, `E = D − c bᵀ`. The original problem has `b = e`, `c = q`;
/// the balanced one has `b = c = φ`.
pub trait TransportStructure<T: Real> {
    fn delta(&self) -> &DVector<T>;
    fn d(&self) -> &DVector<T>;
    fn b_vec(&self) -> &DVector<T>;
    fn c_vec(&self) -> &DVector<T>;
    /// Set for the critical parameters `c = 1, α = 0`.
    fn near_critical(&self) -> bool;

    fn dim(&self) -> usize {
        self.delta().len()
    }

    /// `‖B‖_F = ‖b‖²`, the residual normalization.
    fn b_norm(&self) -> T {
        self.b_vec().norm_squared()
    }
}

/// Original (unbalanced) instance.
#[derive(Debug, Clone, PartialEq)]
pub struct NareInstance<T: Real> {
    delta: DVector<T>,
    d: DVector<T>,
    q: DVector<T>,
    ones: DVector<T>,
    near_critical: bool,
}

impl<T: Real> NareInstance<T> {
    pub fn build(params: &TransportParams<T>, quad: &Quadrature<T>) -> Result<Self> {
        if quad.len() != params.n() {
            return Err(NareError::DimensionMismatch {
                expected: params.n(),
                found: quad.len(),
                context: "quadrature length vs n",
            });
        }
        let (c, alpha) = (params.c(), params.alpha());
        let one = T::one();
        let two = T::lit(2.0);
        let delta = DVector::from_iterator(quad.len(), quad.omega().iter().map(|&w| one / (c * w * (one + alpha))));
        let d = DVector::from_iterator(quad.len(), quad.omega().iter().map(|&w| one / (c * w * (one - alpha))));
        let q = DVector::from_iterator(
            quad.len(),
            quad.omega().iter().zip(quad.weights()).map(|(&w, &cw)| cw / (two * w)),
        );
        Ok(NareInstance {
            delta,
            d,
            q,
            ones: DVector::from_element(quad.len(), one),
            near_critical: params.is_critical(),
        })
    }

    /// Builds an instance directly from its defining vectors.
    pub fn from_vectors(delta: DVector<T>, d: DVector<T>, q: DVector<T>) -> Result<Self> {
        let n = delta.len();
        for (v, ctx) in [(&d, "d"), (&q, "q")] {
            if v.len() != n {
                return Err(NareError::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                    context: ctx,
                });
            }
        }
        Ok(NareInstance {
            delta,
            d,
            q,
            ones: DVector::from_element(n, T::one()),
            near_critical: false,
        })
    }

    pub fn q(&self) -> &DVector<T> {
        &self.q
    }

    pub fn n(&self) -> usize {
        self.delta.len()
    }
}

impl<T: Real> TransportStructure<T> for NareInstance<T> {
    fn delta(&self) -> &DVector<T> {
        &self.delta
    }
    fn d(&self) -> &DVector<T> {
        &self.d
    }
    fn b_vec(&self) -> &DVector<T> {
        &self.ones
    }
    fn c_vec(&self) -> &DVector<T> {
        &self.q
    }
    fn near_critical(&self) -> bool {
        self.near_critical
    }
}

/// Instance after the diagonal similarity `Φ = diag(√q_i)`: `Ã = Δ − φφᵀ`,
/// `B̃ = C̃ = φφᵀ`, `Ẽ = D − φφᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedInstance<T: Real> {
    delta: DVector<T>,
    d: DVector<T>,
    phi: DVector<T>,
    near_critical: bool,
}

impl<T: Real> BalancedInstance<T> {
    pub fn phi(&self) -> &DVector<T> {
        &self.phi
    }

    pub fn n(&self) -> usize {
        self.delta.len()
    }
}

impl<T: Real> TransportStructure<T> for BalancedInstance<T> {
    fn delta(&self) -> &DVector<T> {
        &self.delta
    }
    fn d(&self) -> &DVector<T> {
        &self.d
    }
    fn b_vec(&self) -> &DVector<T> {
        &self.phi
    }
    fn c_vec(&self) -> &DVector<T> {
        &self.phi
    }
    fn near_critical(&self) -> bool {
        self.near_critical
    }
}

pub fn balance<T: Real>(inst: &NareInstance<T>) -> Result<BalancedInstance<T>> {
    if let Some(i) = inst.q.iter().position(|&x| x.partial_cmp(&T::zero()) != Some(Ordering::Greater)) {
        return Err(NareError::InvalidParameter {
            name: "q",
            reason: format!("entry {} = {} is not positive", i + 1, inst.q[i]),
        });
    }
    Ok(BalancedInstance {
        delta: inst.delta.clone(),
        d: inst.d.clone(),
        phi: inst.q.map(|x| x.sqrt()),
        near_critical: inst.near_critical,
    })
}

/// Maps a solution of the balanced equation back: `X = Φ⁻¹ X̃ Φ⁻¹`.
///
/// Both factors are scaled row-wise by `1/φ_i`; the result is recompressed so
/// that it again has orthonormal factors (no singular values are dropped).
pub fn unbalance_solution<T: Real>(xb: &LowRankBilinear<T>, phi: &DVector<T>) -> Result<LowRankBilinear<T>> {
    if xb.dim() != phi.len() {
        return Err(NareError::DimensionMismatch {
            expected: xb.dim(),
            found: phi.len(),
            context: "phi length vs solution dimension",
        });
    }
    if phi.iter().any(|&p| p.partial_cmp(&T::zero()) != Some(Ordering::Greater)) {
        return Err(NareError::InvalidParameter {
            name: "phi",
            reason: "entries must be positive".into(),
        });
    }
    let inv = phi.map(|p| T::one() / p);
    let mut left = xb.scaled_left();
    let mut right = xb.right().clone();
    for i in 0..phi.len() {
        left.row_mut(i).scale_mut(inv[i]);
        right.row_mut(i).scale_mut(inv[i]);
    }
    let middle = DMatrix::identity(xb.rank(), xb.rank());
    LowRankBilinear::from_factors(&left, &middle, &right, T::zero(), &mut FlopModel::default())
}

/// Dense realizations of `A, B, C, E`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCoefficients<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub e: DMatrix<T>,
}

pub fn assemble_dense<T: Real, S: TransportStructure<T> + ?Sized>(inst: &S, cap: usize) -> Result<DenseCoefficients<T>> {
    let n = inst.dim();
    if n > cap {
        return Err(NareError::DenseCapExceeded { n, cap });
    }
    let b = inst.b_vec();
    let c = inst.c_vec();
    let bc = b * c.transpose();
    Ok(DenseCoefficients {
        a: DMatrix::from_diagonal(inst.delta()) - &bc,
        b: b * b.transpose(),
        c: c * c.transpose(),
        e: DMatrix::from_diagonal(inst.d()) - bc.transpose(),
    })
}

impl<T: Real> DenseCoefficients<T> {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// `K = [E, −C; −B, A]`.
    pub fn k_matrix(&self) -> DMatrix<T> {
        let n = self.n();
        let mut k = DMatrix::zeros(2 * n, 2 * n);
        k.view_mut((0, 0), (n, n)).copy_from(&self.e);
        k.view_mut((0, n), (n, n)).copy_from(&(-&self.c));
        k.view_mut((n, 0), (n, n)).copy_from(&(-&self.b));
        k.view_mut((n, n), (n, n)).copy_from(&self.a);
        k
    }

    /// `H = [E, −C; B, −A]`.
    pub fn h_matrix(&self) -> DMatrix<T> {
        let n = self.n();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.e);
        h.view_mut((0, n), (n, n)).copy_from(&(-&self.c));
        h.view_mut((n, 0), (n, n)).copy_from(&self.b);
        h.view_mut((n, n), (n, n)).copy_from(&(-&self.a));
        h
    }

    /// `‖XCX − XE − AX + B‖_F`.
    pub fn residual(&self, x: &DMatrix<T>) -> T {
        (x * &self.c * x - x * &self.e - &self.a * x + &self.b).norm()
    }

    /// `‖YBY − YA − EY + C‖_F` (dual equation).
    pub fn dual_residual(&self, y: &DMatrix<T>) -> T {
        (y * &self.b * y - y * &self.a - &self.e * y + &self.c).norm()
    }
}
