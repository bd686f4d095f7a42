//! The doubling iterates `E_k`, `F_k`, kept as a recursion
//! `E_k = E_{k−1}² + U_k V_kᵀ` over a level-0 base operator and never formed.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::scalar::Real;
use crate::structured::flops::{gemm_flops, FlopModel, Kernel};
use crate::structured::shifted::BaseOperator;

/// Recursive, never-materialized operator.
///
/// Applying level `k` to a block costs `2^k` base applications per column plus
/// the low-rank corrections of every level.
#[derive(Debug, Clone)]
pub struct ImplicitIterate<T: Real> {
    base: Arc<BaseOperator<T>>,
    updates: Vec<Update<T>>,
}

impl<T: Real> ImplicitIterate<T> {
    pub fn new(base: Arc<BaseOperator<T>>) -> Self {
        ImplicitIterate {
            base,
            updates: Vec::new(),
        }
    }

    pub fn level(&self) -> usize {
        self.updates.len()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &BaseOperator<T> {
        &self.base
    }

    /// Widths `m_j` of the per-level corrections.
    pub fn update_widths(&self) -> Vec<usize> {
        self.updates.iter().map(|up| up.u.ncols()).collect()
    }

    /// Advances one level: the new operator is `self² + u vᵀ`.
    pub fn push_update(&mut self, u: DMatrix<T>, v: DMatrix<T>) {
        assert_eq!(u.ncols(), v.ncols(), "update factors must have equal width");
        assert_eq!(u.nrows(), self.dim());
        assert_eq!(v.nrows(), self.dim());
        self.updates.push(Update { u, v });
    }

    /// `E_k · block` (or `E_kᵀ · block`), counted as one implicit block product.
    pub fn apply(&self, block: &DMatrix<T>, transpose: bool, flops: &mut FlopModel) -> DMatrix<T> {
        let mut out = block.clone();
        self.apply_in_place(&mut out, transpose, flops);
        out
    }

    pub fn apply_in_place(&self, block: &mut DMatrix<T>, transpose: bool, flops: &mut FlopModel) {
        flops.add_block_product();
        self.apply_level(self.level(), block, transpose, flops, Kernel::ImplicitApply);
    }

    /// Same as [`ImplicitIterate::apply`] but charged to another kernel label
    /// and not counted as a block product (used by diagnostics).
    pub fn apply_uncounted(&self, block: &DMatrix<T>, transpose: bool, flops: &mut FlopModel, kernel: Kernel) -> DMatrix<T> {
        let mut out = block.clone();
        self.apply_level(self.level(), &mut out, transpose, flops, kernel);
        out
    }

    fn apply_level(&self, level: usize, block: &mut DMatrix<T>, transpose: bool, flops: &mut FlopModel, kernel: Kernel) {
        let m = block.ncols();
        let mut scratch: Vec<DMatrix<T>> = self.updates[..level].iter().map(|up| DMatrix::zeros(up.u.ncols(), m)).collect();
        let mut tally = Tally::default();
        self.recurse(level, block, transpose, &mut scratch, &mut tally);
        let n = block.nrows();
        flops.add_base_applications(tally.base_columns);
        flops.add(kernel, self.base.column_cost() * tally.base_columns);
        for (l, &count) in tally.updates.iter().enumerate() {
            flops.add(kernel, count * 2 * gemm_flops(n, self.updates[l].u.ncols(), m));
        }
    }

    /// `scratch[l]` holds the `vᵀ·block` coefficients of level `l + 1`.
    fn recurse(&self, level: usize, block: &mut DMatrix<T>, transpose: bool, scratch: &mut [DMatrix<T>], tally: &mut Tally) {
        if level == 0 {
            self.base.apply_in_place(block, transpose);
            tally.base_columns += block.ncols() as u64;
            return;
        }
        let up = &self.updates[level - 1];
        let (outer, inner) = if transpose { (&up.v, &up.u) } else { (&up.u, &up.v) };
        let (lower, own) = scratch.split_at_mut(level - 1);
        let coeff = &mut own[0];
        let width = coeff.nrows();
        if width > 0 {
            inner.tr_mul_to(block, coeff);
        }
        self.recurse(level - 1, block, transpose, lower, tally);
        self.recurse(level - 1, block, transpose, lower, tally);
        if width > 0 {
            block.gemm(T::one(), outer, coeff, T::one());
            if tally.updates.len() < level {
                tally.updates.resize(level, 0);
            }
            tally.updates[level - 1] += 1;
        }
    }
}

/// One correction `u vᵀ`.
#[derive(Debug, Clone)]
struct Update<T: Real> {
    u: DMatrix<T>,
    v: DMatrix<T>,
}

#[derive(Default)]
struct Tally {
    base_columns: u64,
    /// Number of correction products per level.
    updates: Vec<u64>,
}
