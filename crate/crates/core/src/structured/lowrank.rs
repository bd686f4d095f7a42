//! Low-rank factorizations: the bilinear triple `left · diag(core) · rightᵀ`,
//! block Gram–Schmidt basis extension and the truncated SVD used to compress
//! the doubling iterates.

use nalgebra::{DMatrix, DVector};

use crate::error::{NareError, Result};
use crate::scalar::Real;
use crate::structured::flops::{gemm_flops, FlopModel, Kernel};

/// Columns whose component outside the current basis falls below this multiple
/// of unit roundoff (relative to the column norm) are treated as dependent.
const DEFLATION_ULPS: f64 = 64.0;

/// `left · diag(core) · rightᵀ` with column-orthonormal `left`, `right` and a
/// nonnegative, nonincreasing `core`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankBilinear<T: Real> {
    left: DMatrix<T>,
    core: DVector<T>,
    right: DMatrix<T>,
}

impl<T: Real> LowRankBilinear<T> {
    /// Wraps factors that already satisfy the invariants (checked loosely).
    pub fn new(left: DMatrix<T>, core: DVector<T>, right: DMatrix<T>) -> Result<Self> {
        let r = core.len();
        if left.ncols() != r {
            return Err(NareError::DimensionMismatch {
                expected: r,
                found: left.ncols(),
                context: "left factor width",
            });
        }
        if right.ncols() != r {
            return Err(NareError::DimensionMismatch {
                expected: r,
                found: right.ncols(),
                context: "right factor width",
            });
        }
        if left.nrows() != right.nrows() {
            return Err(NareError::DimensionMismatch {
                expected: left.nrows(),
                found: right.nrows(),
                context: "factor row dimension",
            });
        }
        Ok(LowRankBilinear { left, core, right })
    }

    pub fn zero(n: usize) -> Self {
        LowRankBilinear {
            left: DMatrix::zeros(n, 0),
            core: DVector::zeros(0),
            right: DMatrix::zeros(n, 0),
        }
    }

    /// Compresses `left · middle · rightᵀ` (arbitrary factors) into canonical
    /// form: economic QR of both outer factors, SVD of the small core and
    /// truncation of singular values below `trunc_rel · σ_max`.
    pub fn from_factors(
        left: &DMatrix<T>,
        middle: &DMatrix<T>,
        right: &DMatrix<T>,
        trunc_rel: T,
        flops: &mut FlopModel,
    ) -> Result<Self> {
        if left.ncols() != middle.nrows() || right.ncols() != middle.ncols() {
            return Err(NareError::DimensionMismatch {
                expected: middle.nrows(),
                found: left.ncols(),
                context: "middle factor shape",
            });
        }
        let n = left.nrows();
        let empty = DMatrix::zeros(n, 0);
        let l = extend_basis(&empty, left, flops, Kernel::Orthogonalize);
        let r = extend_basis(&empty, right, flops, Kernel::Orthogonalize);
        let core = &l.r * middle * r.r.transpose();
        let svd = OrderedSvd::new(core);
        let keep = svd.truncation_rank(trunc_rel);
        let left = &l.qhat * svd.u.columns(0, keep);
        let right = &r.qhat * svd.v.columns(0, keep);
        flops.add(
            Kernel::FactorAssembly,
            gemm_flops(n, l.qhat.ncols(), keep) + gemm_flops(n, r.qhat.ncols(), keep),
        );
        Ok(LowRankBilinear {
            left,
            core: DVector::from_iterator(keep, svd.s.iter().take(keep).copied()),
            right,
        })
    }

    pub fn dim(&self) -> usize {
        self.left.nrows()
    }

    pub fn rank(&self) -> usize {
        self.core.len()
    }

    pub fn left(&self) -> &DMatrix<T> {
        &self.left
    }

    pub fn core(&self) -> &DVector<T> {
        &self.core
    }

    pub fn right(&self) -> &DMatrix<T> {
        &self.right
    }

    pub fn into_parts(self) -> (DMatrix<T>, DVector<T>, DMatrix<T>) {
        (self.left, self.core, self.right)
    }

    /// `left · diag(core)`.
    pub fn scaled_left(&self) -> DMatrix<T> {
        let mut out = self.left.clone();
        for (j, &s) in self.core.iter().enumerate() {
            out.column_mut(j).scale_mut(s);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        self.scaled_left() * self.right.transpose()
    }

    pub fn transpose(&self) -> Self {
        LowRankBilinear {
            left: self.right.clone(),
            core: self.core.clone(),
            right: self.left.clone(),
        }
    }

    /// Frobenius norm (the factors are orthonormal).
    pub fn norm(&self) -> T {
        self.core.norm()
    }

    /// Smallest entry of the represented matrix, evaluated in row blocks.
    pub fn min_entry(&self) -> T {
        let n = self.dim();
        if self.rank() == 0 {
            return if n == 0 { T::max_value().unwrap() } else { T::zero() };
        }
        let sl = self.scaled_left();
        let rt = self.right.transpose();
        let mut min = T::max_value().unwrap();
        let chunk = 256;
        let mut start = 0;
        while start < n {
            let rows = chunk.min(n - start);
            let block = sl.rows(start, rows) * &rt;
            min = block.iter().fold(min, |acc, &x| if x < acc { x } else { acc });
            start += rows;
        }
        min
    }

    /// `‖self − other‖_F` without forming either matrix.
    pub fn distance(&self, other: &LowRankBilinear<T>) -> T {
        let n = self.dim();
        let (a, b) = (self.rank(), other.rank());
        let mut left = DMatrix::zeros(n, a + b);
        left.columns_mut(0, a).copy_from(&self.left);
        left.columns_mut(a, b).copy_from(&other.left);
        let mut right = DMatrix::zeros(n, a + b);
        right.columns_mut(0, a).copy_from(&self.right);
        right.columns_mut(a, b).copy_from(&other.right);
        let mut middle = DMatrix::zeros(a + b, a + b);
        for i in 0..a {
            middle[(i, i)] = self.core[i];
        }
        for i in 0..b {
            middle[(a + i, a + i)] = -other.core[i];
        }
        factored_frobenius(&left, &middle, &right)
    }

    /// Largest deviation of `leftᵀleft` and `rightᵀright` from the identity.
    pub fn orthonormality_error(&self) -> T {
        let id = DMatrix::<T>::identity(self.rank(), self.rank());
        let el = (self.left.tr_mul(&self.left) - &id).amax();
        let er = (self.right.tr_mul(&self.right) - &id).amax();
        if el > er {
            el
        } else {
            er
        }
    }

    /// Checks the canonical-form invariants at tolerance `tol`.
    pub fn check_invariants(&self, tol: T) -> bool {
        let ordered = self.core.iter().zip(self.core.iter().skip(1)).all(|(a, b)| a >= b);
        let nonneg = self.core.iter().all(|&s| s >= T::zero());
        ordered && nonneg && (self.rank() == 0 || self.orthonormality_error() <= tol)
    }
}

/// Result of orthogonalizing `block` against an orthonormal `basis`:
/// `block = basis · s + qhat · r` with `[basis, qhat]` column-orthonormal and
/// `r` upper trapezoidal. Columns of `block` that add no new direction are
/// deflated, so `qhat` may be narrower than `block`.
#[derive(Debug, Clone)]
pub struct BasisExtension<T: Real> {
    pub qhat: DMatrix<T>,
    pub s: DMatrix<T>,
    pub r: DMatrix<T>,
}

/// Block classical Gram–Schmidt with reorthogonalization and deflation.
pub fn extend_basis<T: Real>(
    basis: &DMatrix<T>,
    block: &DMatrix<T>,
    flops: &mut FlopModel,
    kernel: Kernel,
) -> BasisExtension<T> {
    let n = block.nrows();
    let m = basis.ncols();
    let p = block.ncols();
    let drop_tol = T::lit(DEFLATION_ULPS) * T::eps();
    let mut s = DMatrix::zeros(m, p);
    let mut qhat_cols: Vec<DVector<T>> = Vec::with_capacity(p);
    let mut r_cols: Vec<Vec<T>> = Vec::with_capacity(p);
    let mut work = 0u64;

    // Two block passes against the existing basis.
    let mut w = block.clone();
    if m > 0 {
        for _ in 0..2 {
            let c = basis.tr_mul(&w);
            w.gemm(-T::one(), basis, &c, T::one());
            s += c;
            work += 2 * gemm_flops(m, n, p);
        }
    }

    let threshold = T::one() / T::lit(2.0).sqrt();
    for j in 0..p {
        let orig = block.column(j).norm();
        let mut v: DVector<T> = w.column(j).into_owned();
        let mut coeffs = vec![T::zero(); qhat_cols.len()];
        let mut before = v.norm();
        let mut pass = 0;
        loop {
            // Joint pass against the accepted new directions and, from the second
            // pass on, the basis as well.
            for (i, q) in qhat_cols.iter().enumerate() {
                let c = q.dot(&v);
                v.axpy(-c, q, T::one());
                coeffs[i] += c;
            }
            work += 4 * (n * qhat_cols.len()) as u64;
            if pass > 0 && m > 0 {
                let c = basis.tr_mul(&v);
                v.gemv(-T::one(), basis, &c, T::one());
                for i in 0..m {
                    s[(i, j)] += c[i];
                }
                work += 4 * (n * m) as u64;
            }
            pass += 1;
            let after = v.norm();
            let cancelled = after < threshold * before;
            before = after;
            if pass >= 2 && (!cancelled || pass >= 4) {
                break;
            }
        }
        let nv = v.norm();
        if nv > T::zero() && nv > drop_tol * orig {
            v.unscale_mut(nv);
            coeffs.push(nv);
            qhat_cols.push(v);
        }
        r_cols.push(coeffs);
    }

    let k = qhat_cols.len();
    let mut qhat = DMatrix::zeros(n, k);
    for (i, q) in qhat_cols.iter().enumerate() {
        qhat.set_column(i, q);
    }
    let mut r = DMatrix::zeros(k, p);
    for (j, col) in r_cols.iter().enumerate() {
        for (i, &c) in col.iter().enumerate() {
            r[(i, j)] = c;
        }
    }
    flops.add(kernel, work);
    BasisExtension { qhat, s, r }
}

/// SVD with singular values in nonincreasing order and a deterministic sign
/// per singular pair: the entry of largest magnitude among the left and right
/// singular vectors is made positive. The rule is invariant under transposing
/// the input, so `A` and `Aᵀ` produce swapped, identical factors.
#[derive(Debug, Clone)]
pub struct OrderedSvd<T: Real> {
    pub u: DMatrix<T>,
    pub s: DVector<T>,
    pub v: DMatrix<T>,
}

impl<T: Real> OrderedSvd<T> {
    pub fn new(a: DMatrix<T>) -> Self {
        let (rows, cols) = a.shape();
        let k = rows.min(cols);
        if k == 0 {
            return OrderedSvd {
                u: DMatrix::zeros(rows, 0),
                s: DVector::zeros(0),
                v: DMatrix::zeros(cols, 0),
            };
        }
        let svd = a.svd(true, true);
        let mut u = svd.u.expect("left singular vectors requested");
        let mut v = svd.v_t.expect("right singular vectors requested").transpose();
        let mut s = svd.singular_values;

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
        if order.iter().enumerate().any(|(i, &j)| i != j) {
            u = DMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]);
            v = DMatrix::from_fn(cols, k, |r, c| v[(r, order[c])]);
            s = DVector::from_fn(k, |i, _| s[order[i]]);
        }

        for j in 0..k {
            let mut best = T::zero();
            let mut sign = T::one();
            for &x in u.column(j).iter().chain(v.column(j).iter()) {
                if x.abs() > best {
                    best = x.abs();
                    sign = if x < T::zero() { -T::one() } else { T::one() };
                }
            }
            if sign < T::zero() {
                u.column_mut(j).neg_mut();
                v.column_mut(j).neg_mut();
            }
        }
        OrderedSvd { u, s, v }
    }

    /// Number of singular values kept by the relative rule
    /// `σ_i ≥ trunc_rel · σ_1`, always dropping exact zeros.
    pub fn truncation_rank(&self, trunc_rel: T) -> usize {
        truncation_rank(self.s.as_slice(), trunc_rel)
    }
}

pub fn truncation_rank<T: Real>(s: &[T], trunc_rel: T) -> usize {
    let Some(&top) = s.first() else { return 0 };
    let cut = trunc_rel * top;
    s.iter().take_while(|&&x| x > T::zero() && x >= cut).count()
}

/// `‖left · middle · rightᵀ‖_F` through QR factors of the outer blocks, so
/// the result carries no squaring of the condition number.
pub fn factored_frobenius<T: Real>(left: &DMatrix<T>, middle: &DMatrix<T>, right: &DMatrix<T>) -> T {
    if left.ncols() == 0 || right.ncols() == 0 {
        return T::zero();
    }
    let rl = left.clone().qr().r();
    let rr = right.clone().qr().r();
    (rl * middle * rr.transpose()).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::random_matrix;

    fn model() -> FlopModel {
        FlopModel::new(1)
    }

    #[test]
    fn extension_reconstructs_block() {
        let basis_raw = random_matrix::<f64>(40, 5, 1);
        let empty = DMatrix::zeros(40, 0);
        let b = extend_basis(&empty, &basis_raw, &mut model(), Kernel::Orthogonalize);
        assert_eq!(b.qhat.ncols(), 5);
        assert!((&b.qhat * &b.r - &basis_raw).amax() < 1e-13);

        let block = random_matrix::<f64>(40, 4, 2);
        let ext = extend_basis(&b.qhat, &block, &mut model(), Kernel::Orthogonalize);
        let rebuilt = &b.qhat * &ext.s + &ext.qhat * &ext.r;
        assert!((rebuilt - &block).amax() < 1e-13);
        let mut all = DMatrix::zeros(40, 9);
        all.columns_mut(0, 5).copy_from(&b.qhat);
        all.columns_mut(5, 4).copy_from(&ext.qhat);
        let gram = all.tr_mul(&all) - DMatrix::identity(9, 9);
        assert!(gram.amax() < 1e-14);
        // R has positive diagonal.
        for i in 0..4 {
            assert!(ext.r[(i, i)] > 0.0);
        }
    }

    #[test]
    fn dependent_columns_are_deflated() {
        let basis = extend_basis(
            &DMatrix::zeros(30, 0),
            &random_matrix::<f64>(30, 3, 3),
            &mut model(),
            Kernel::Orthogonalize,
        )
        .qhat;
        // Second column is a combination of the basis, fourth repeats the first.
        let fresh = random_matrix::<f64>(30, 1, 4);
        let mut block = DMatrix::zeros(30, 4);
        block.set_column(0, &fresh.column(0));
        block.set_column(1, &(&basis * DVector::from_vec(vec![1.0, -2.0, 0.5])));
        block.set_column(2, &(random_matrix::<f64>(30, 1, 5).column(0)));
        block.set_column(3, &(fresh.column(0) * 3.0));
        let ext = extend_basis(&basis, &block, &mut model(), Kernel::Orthogonalize);
        assert_eq!(ext.qhat.ncols(), 2);
        assert_eq!(ext.r.shape(), (2, 4));
        let rebuilt = &basis * &ext.s + &ext.qhat * &ext.r;
        assert!((rebuilt - &block).amax() < 1e-13);
    }

    #[test]
    fn full_space_saturates() {
        let n = 6;
        let basis = extend_basis(
            &DMatrix::zeros(n, 0),
            &random_matrix::<f64>(n, n, 6),
            &mut model(),
            Kernel::Orthogonalize,
        )
        .qhat;
        let ext = extend_basis(&basis, &random_matrix::<f64>(n, 3, 7), &mut model(), Kernel::Orthogonalize);
        assert_eq!(ext.qhat.ncols(), 0);
    }

    #[test]
    fn svd_convention_is_transpose_invariant() {
        let a = random_matrix::<f64>(7, 5, 8);
        let s1 = OrderedSvd::new(a.clone());
        let s2 = OrderedSvd::new(a.transpose());
        assert!((&s1.s - &s2.s).amax() < 1e-13);
        assert!((&s1.u - &s2.v).amax() < 1e-12);
        assert!((&s1.v - &s2.u).amax() < 1e-12);
        let rebuilt = &s1.u * DMatrix::from_diagonal(&s1.s) * s1.v.transpose();
        assert!((rebuilt - a).amax() < 1e-13);
        assert!(s1.s.iter().zip(s1.s.iter().skip(1)).all(|(x, y)| x >= y));
    }

    #[test]
    fn truncation_keeps_ties_and_drops_zeros() {
        assert_eq!(truncation_rank(&[1.0, 0.5, 1e-3, 1e-15], 1e-3), 3);
        assert_eq!(truncation_rank(&[1.0, 0.5, 0.0], 0.0), 2);
        assert_eq!(truncation_rank::<f64>(&[], 0.1), 0);
        assert_eq!(truncation_rank(&[0.0, 0.0], 0.0), 0);
    }

    #[test]
    fn compressed_form_matches_dense() {
        let l = random_matrix::<f64>(20, 3, 9);
        let m = random_matrix::<f64>(3, 2, 10);
        let r = random_matrix::<f64>(20, 2, 11);
        let x = LowRankBilinear::from_factors(&l, &m, &r, 0.0, &mut model()).unwrap();
        assert_eq!(x.rank(), 2);
        assert!(x.check_invariants(1e-13));
        let dense = &l * &m * r.transpose();
        assert!((x.to_dense() - &dense).amax() < 1e-13);
        assert!((x.norm() - dense.norm()).abs() < 1e-12);
        let min = dense.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((x.min_entry() - min).abs() < 1e-12);
        let y = LowRankBilinear::from_factors(&l, &(m.clone() * 2.0), &r, 0.0, &mut model()).unwrap();
        assert!((x.distance(&y) - dense.norm()).abs() < 1e-12);
        assert!((x.transpose().to_dense() - dense.transpose()).amax() < 1e-13);
    }

    #[test]
    fn factored_norm_is_accurate_under_cancellation() {
        // (u + t) vᵀ − u vᵀ = t vᵀ with ‖u‖ huge relative to ‖t‖.
        let u = random_matrix::<f64>(50, 1, 12) * 1e6;
        let t = random_matrix::<f64>(50, 1, 13) * 1e-3;
        let v = random_matrix::<f64>(50, 1, 14);
        let mut left = DMatrix::zeros(50, 2);
        left.set_column(0, &(u.column(0) + t.column(0)));
        left.set_column(1, &u.column(0));
        let mut right = DMatrix::zeros(50, 2);
        right.set_column(0, &v.column(0));
        right.set_column(1, &v.column(0));
        let middle = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let got = factored_frobenius(&left, &middle, &right);
        let want = (&t * v.transpose()).norm();
        assert!((got - want).abs() / want < 1e-6);
    }
}
