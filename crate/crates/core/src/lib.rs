//! Doubling solvers for the transport-theory nonsymmetric algebraic Riccati
//! equation `XCX − XE − AX + B = 0`.
//!
//! Three solvers share one configuration and report type:
//!
//! * [`dense_sda`]: dense doubling, the reference for small `n`;
//! * [`sda_ls`]: factored doubling with low-rank `H_k`, `G_k` and implicit `E_k`, `F_k`;
//! * [`modified`]: the same on the balanced equation, storing only the H-side.
//!
//! All numerical code is generic over [`Real`] (`f32`, `f64`); the aliases
//! below fix the scalar to `f64` or `f32`.

pub mod config;
pub mod dense_sda;
pub mod error;
pub mod instance_file;
pub mod modified;
pub mod probe;
pub mod report;
pub mod scalar;
pub mod sda_ls;
pub mod structured;
pub mod transport;

pub use config::{SolverConfig, StopRule};
pub use error::{NareError, Result};
pub use report::{Algorithm, SolveReport, Termination};
pub use scalar::Real;

pub type Instance = transport::NareInstance<f64>;
pub type Balanced = transport::BalancedInstance<f64>;
pub type Params = transport::TransportParams<f64>;
pub type Quad = transport::Quadrature<f64>;
pub type LowRank = structured::LowRankBilinear<f64>;
pub type Spec = instance_file::InstanceSpec<f64>;

pub type Instance32 = transport::NareInstance<f32>;
pub type Balanced32 = transport::BalancedInstance<f32>;
pub type Params32 = transport::TransportParams<f32>;
pub type Quad32 = transport::Quadrature<f32>;
pub type LowRank32 = structured::LowRankBilinear<f32>;
