//! O(n) solves with the shifted coefficient matrices.
//!
//! For the transport structure `A = Δ − b cᵀ`, `B = b bᵀ`, `C = c cᵀ`,
//! `E = D − c bᵀ`, the matrices `E + γI`, `A + γI` and the two Schur
//! complements
//!
//! ```text
//! W = A + γI − B (E + γI)⁻¹ C = (Δ + γI) − (1 + bᵀ(E + γI)⁻¹c) · b cᵀ
//! V = E + γI − C (A + γI)⁻¹ B = (D + γI) − (1 + cᵀ(A + γI)⁻¹b) · c bᵀ
//! ```
//!
//! are all diagonal minus a scaled rank-one term, so a single
//! Sherman–Morrison correction inverts each of them exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{NareError, Result};
use crate::scalar::Real;
use crate::structured::flops::{FlopModel, Kernel};
use crate::transport::TransportStructure;

/// Relative size below which a Sherman–Morrison denominator is treated as zero.
pub const SMW_SINGULARITY_THRESHOLD: f64 = 1e-14;

/// `diag(diag) − sigma · u vᵀ` with everything needed for O(n) solves.
#[derive(Debug, Clone)]
pub struct DiagonalRankOne<T: Real> {
    diag: DVector<T>,
    u: DVector<T>,
    v: DVector<T>,
    sigma: T,
    inv_diag: DVector<T>,
    /// `D⁻¹u`
    du: DVector<T>,
    /// `D⁻¹v`
    dv: DVector<T>,
    /// `sigma / (1 − sigma · vᵀD⁻¹u)`
    gain: T,
}

impl<T: Real> DiagonalRankOne<T> {
    pub fn new(diag: DVector<T>, u: DVector<T>, v: DVector<T>, sigma: T, what: &'static str) -> Result<Self> {
        let n = diag.len();
        if u.len() != n || v.len() != n {
            return Err(NareError::DimensionMismatch {
                expected: n,
                found: if u.len() != n { u.len() } else { v.len() },
                context: "rank-one factor length",
            });
        }
        if diag.iter().any(|&x| x == T::zero()) {
            return Err(NareError::NearSingular { what, iteration: None });
        }
        let inv_diag = diag.map(|x| T::one() / x);
        let du = u.component_mul(&inv_diag);
        let dv = v.component_mul(&inv_diag);
        let coupling = sigma * v.dot(&du);
        let den = T::one() - coupling;
        let scale = if coupling.abs() > T::one() { coupling.abs() } else { T::one() };
        if den.abs() < T::lit(SMW_SINGULARITY_THRESHOLD) * scale {
            return Err(NareError::NearSingular { what, iteration: None });
        }
        Ok(DiagonalRankOne {
            diag,
            u,
            v,
            sigma,
            inv_diag,
            du,
            dv,
            gain: sigma / den,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &DVector<T> {
        &self.diag
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn u(&self) -> &DVector<T> {
        &self.u
    }

    pub fn v(&self) -> &DVector<T> {
        &self.v
    }

    /// Flops of one solve (or one product) on a single column.
    pub fn column_cost(&self) -> u64 {
        5 * self.dim() as u64
    }

    /// Overwrites `block` with `M⁻¹ block` (or `M⁻ᵀ block`).
    pub fn solve_in_place(&self, block: &mut DMatrix<T>, transpose: bool) {
        let (corr, probe) = if transpose { (&self.dv, &self.du) } else { (&self.du, &self.dv) };
        let n = self.dim();
        if n == 0 {
            return;
        }
        let inv = self.inv_diag.as_slice();
        let corr = corr.as_slice();
        let probe = probe.as_slice();
        for col in block.as_mut_slice().chunks_exact_mut(n) {
            let t = dot(probe, col);
            let coef = self.gain * t;
            for i in 0..n {
                col[i] = inv[i] * col[i] + coef * corr[i];
            }
        }
    }

    pub fn solve(&self, block: &DMatrix<T>, transpose: bool) -> DMatrix<T> {
        let mut out = block.clone();
        self.solve_in_place(&mut out, transpose);
        out
    }

    /// `M · block` (or `Mᵀ · block`).
    pub fn apply(&self, block: &DMatrix<T>, transpose: bool) -> DMatrix<T> {
        let (left, right) = if transpose { (&self.v, &self.u) } else { (&self.u, &self.v) };
        let mut out = block.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let t = right.dot(&block.column(j));
            col.component_mul_assign(&self.diag);
            col.axpy(-self.sigma * t, left, T::one());
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        DMatrix::from_diagonal(&self.diag) - (&self.u * self.v.transpose()) * self.sigma
    }
}

/// Dot product with four independent accumulators, so the reduction pipelines.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut t = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        t += *x * *y;
    }
    t
}

/// Which shifted operator a solve targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shifted {
    /// `E + γI`
    E,
    /// `A + γI`
    A,
    W,
    V,
}

/// Precomputed Sherman–Morrison data for `(E+γI)⁻¹`, `(A+γI)⁻¹`, `W⁻¹`, `V⁻¹`.
#[derive(Debug, Clone)]
pub struct ShiftedSolver<T: Real> {
    gamma: T,
    e_shift: DiagonalRankOne<T>,
    a_shift: DiagonalRankOne<T>,
    w: DiagonalRankOne<T>,
    v: DiagonalRankOne<T>,
}

impl<T: Real> ShiftedSolver<T> {
    pub fn new<S: TransportStructure<T> + ?Sized>(inst: &S, gamma: T) -> Result<Self> {
        let b = inst.b_vec();
        let c = inst.c_vec();
        let shift = |d: &DVector<T>| d.map(|x| x + gamma);
        let e_shift = DiagonalRankOne::new(shift(inst.d()), c.clone(), b.clone(), T::one(), "E + γI")?;
        let a_shift = DiagonalRankOne::new(shift(inst.delta()), b.clone(), c.clone(), T::one(), "A + γI")?;

        // s = bᵀ(E + γI)⁻¹c, t = cᵀ(A + γI)⁻¹b
        let s = b.dot(&e_shift.solve(&DMatrix::from_column_slice(c.len(), 1, c.as_slice()), false).column(0));
        let t = c.dot(&a_shift.solve(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()), false).column(0));
        let w = DiagonalRankOne::new(shift(inst.delta()), b.clone(), c.clone(), T::one() + s, "W")?;
        let v = DiagonalRankOne::new(shift(inst.d()), c.clone(), b.clone(), T::one() + t, "V")?;
        Ok(ShiftedSolver {
            gamma,
            e_shift,
            a_shift,
            w,
            v,
        })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    pub fn operator(&self, which: Shifted) -> &DiagonalRankOne<T> {
        match which {
            Shifted::E => &self.e_shift,
            Shifted::A => &self.a_shift,
            Shifted::W => &self.w,
            Shifted::V => &self.v,
        }
    }

    pub fn solve(&self, which: Shifted, block: &DMatrix<T>, transpose: bool) -> DMatrix<T> {
        self.operator(which).solve(block, transpose)
    }

    /// Counted variant of [`ShiftedSolver::solve`].
    pub fn solve_counted(
        &self,
        which: Shifted,
        block: &DMatrix<T>,
        transpose: bool,
        flops: &mut FlopModel,
        kernel: Kernel,
    ) -> DMatrix<T> {
        let op = self.operator(which);
        flops.add(kernel, op.column_cost() * block.ncols() as u64);
        op.solve(block, transpose)
    }

    /// Multiplies by the (untransposed or transposed) operator itself.
    pub fn apply(&self, which: Shifted, block: &DMatrix<T>, transpose: bool) -> DMatrix<T> {
        self.operator(which).apply(block, transpose)
    }
}

/// The level-0 doubling operators `E₀ = I − 2γV⁻¹` and `F₀ = I − 2γW⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseKind {
    E,
    F,
}

/// Handle applying `E₀` or `F₀` (optionally transposed) to a block in O(n·m).
#[derive(Debug, Clone)]
pub struct BaseOperator<T: Real> {
    kind: BaseKind,
    inner: DiagonalRankOne<T>,
    /// `1 − 2γ/m_ii`
    keep: DVector<T>,
    /// `2γ·gain·M⁻¹u` and `2γ·gain·M⁻ᵀv`, the rank-one terms of both orientations.
    corr: DVector<T>,
    corr_t: DVector<T>,
}

impl<T: Real> BaseOperator<T> {
    pub fn kind(&self) -> BaseKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Flops per column of one application (the `c_γ` of the cost model).
    pub fn column_cost(&self) -> u64 {
        5 * self.dim() as u64
    }

    /// `block ← block − 2γ · M⁻¹ block` with `M = V` for `E₀` and `M = W` for `F₀`.
    pub fn apply_in_place(&self, block: &mut DMatrix<T>, transpose: bool) {
        let n = self.dim();
        if n == 0 {
            return;
        }
        let op = &self.inner;
        let (corr, probe) = if transpose { (&self.corr_t, &op.du) } else { (&self.corr, &op.dv) };
        let keep = self.keep.as_slice();
        let corr = corr.as_slice();
        let probe = probe.as_slice();
        for col in block.as_mut_slice().chunks_exact_mut(n) {
            let t = dot(probe, col);
            for i in 0..n {
                col[i] = keep[i] * col[i] - t * corr[i];
            }
        }
    }

    pub fn apply(&self, block: &DMatrix<T>, transpose: bool) -> DMatrix<T> {
        let mut out = block.clone();
        self.apply_in_place(&mut out, transpose);
        out
    }
}

/// Builds the `(E₀, F₀)` handles from a prepared solver.
pub fn make_base_operators<T: Real>(solver: &ShiftedSolver<T>) -> (BaseOperator<T>, BaseOperator<T>) {
    let two_gamma = T::lit(2.0) * solver.gamma;
    let make = |kind, inner: &DiagonalRankOne<T>| BaseOperator {
        kind,
        keep: inner.inv_diag.map(|x| T::one() - two_gamma * x),
        corr: &inner.du * (two_gamma * inner.gain),
        corr_t: &inner.dv * (two_gamma * inner.gain),
        inner: inner.clone(),
    };
    (make(BaseKind::E, &solver.v), make(BaseKind::F, &solver.w))
}

/// `γ = max_i max(e_ii, a_ii)`, the smallest admissible doubling shift.
pub fn gamma_select<T: Real, S: TransportStructure<T> + ?Sized>(inst: &S) -> T {
    let b = inst.b_vec();
    let c = inst.c_vec();
    let mut gamma = T::min_value().unwrap();
    for i in 0..inst.dim() {
        let coupling = b[i] * c[i];
        let e_ii = inst.d()[i] - coupling;
        let a_ii = inst.delta()[i] - coupling;
        gamma = gamma.max(e_ii).max(a_ii);
    }
    gamma
}
