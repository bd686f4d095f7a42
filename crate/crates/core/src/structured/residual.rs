//! Residual of `XCX − XE − AX + B` for a low-rank `X` without dense assembly.

use nalgebra::DMatrix;

use crate::error::{NareError, Result};
use crate::scalar::Real;
use crate::structured::flops::{FlopModel, Kernel};
use crate::structured::lowrank::{factored_frobenius, LowRankBilinear};
use crate::transport::TransportStructure;

/// Absolute Frobenius residual and the same value divided by `‖B‖_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualNorm<T: Real> {
    pub absolute: T,
    pub normalized: T,
}

/// With `X = L S Rᵀ`, `α = Rᵀc`, `β = Lᵀc`, the residual is
/// `[L, ΔL, b] · M · [R, DR, b]ᵀ` for a `(2r+1)`-square core `M`; its norm is
/// taken through QR factors of the two outer blocks.
pub fn residual_norm<T: Real, S: TransportStructure<T> + ?Sized>(
    inst: &S,
    x: &LowRankBilinear<T>,
    flops: &mut FlopModel,
) -> Result<ResidualNorm<T>> {
    let n = inst.dim();
    if x.dim() != n {
        return Err(NareError::DimensionMismatch {
            expected: n,
            found: x.dim(),
            context: "solution dimension",
        });
    }
    let r = x.rank();
    let w = 2 * r + 1;
    let l = x.left();
    let rt = x.right();
    let s = x.core();
    let b = inst.b_vec();
    let c = inst.c_vec();

    let alpha = rt.tr_mul(c);
    let beta = l.tr_mul(c);
    let s_alpha = alpha.component_mul(s);
    let s_beta = beta.component_mul(s);

    let mut lft = DMatrix::zeros(n, w);
    let mut rgt = DMatrix::zeros(n, w);
    lft.columns_mut(0, r).copy_from(l);
    rgt.columns_mut(0, r).copy_from(rt);
    for j in 0..r {
        let mut dl = lft.column_mut(r + j);
        dl.copy_from(&l.column(j));
        dl.component_mul_assign(inst.delta());
        let mut dr = rgt.column_mut(r + j);
        dr.copy_from(&rt.column(j));
        dr.component_mul_assign(inst.d());
    }
    lft.set_column(2 * r, b);
    rgt.set_column(2 * r, b);

    let mut core = DMatrix::zeros(w, w);
    core.view_mut((0, 0), (r, r)).copy_from(&(&s_alpha * s_beta.transpose()));
    for i in 0..r {
        core[(i, r + i)] = -s[i];
        core[(r + i, i)] = -s[i];
        core[(i, 2 * r)] = s_alpha[i];
        core[(2 * r, i)] = s_beta[i];
    }
    core[(2 * r, 2 * r)] = T::one();

    let absolute = factored_frobenius(&lft, &core, &rgt);
    let (nu, wu) = (n as u64, w as u64);
    flops.add(Kernel::Residual, 4 * nu * r as u64 + 2 * nu * r as u64 + 8 * nu * wu * wu + 2 * wu * wu * wu);
    let scale = inst.b_norm();
    Ok(ResidualNorm {
        absolute,
        normalized: absolute / scale,
    })
}
