//! Structured O(n) kernels shared by the large-scale solvers.

pub mod flops;
pub mod implicit;
pub mod lowrank;
pub mod residual;
pub mod shifted;

pub use flops::{FlopCounts, FlopModel, FlopSnapshot, Kernel};
pub use implicit::ImplicitIterate;
pub use lowrank::{extend_basis, factored_frobenius, truncation_rank, BasisExtension, LowRankBilinear, OrderedSvd};
pub use residual::{residual_norm, ResidualNorm};
pub use shifted::{gamma_select, make_base_operators, BaseKind, BaseOperator, DiagonalRankOne, Shifted, ShiftedSolver};
