//! Flop accounting for the doubling iterations.
//!
//! Every structured kernel reports the floating-point operations it performs
//! under one of the [`Kernel`] labels, so the original and the balanced
//! solver can be compared kernel by kernel.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Labelled kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// Small core updates and the n-dependent Gram products feeding them.
    CoreUpdate,
    /// Block products with the implicit iterates `E_k`, `F_k` (base solves plus low-rank corrections).
    ImplicitApply,
    /// Assembly of the new low-rank corrections of `E_{k+1}`, `F_{k+1}`.
    RankUpdate,
    /// Block Gram–Schmidt orthogonalization against the current bases.
    Orthogonalize,
    /// Formation of the truncated factors from the extended bases.
    FactorAssembly,
    /// n-independent dense work (small SVDs, LU of inner systems).
    SmallDense,
    /// Residual evaluation used for the stopping test.
    Residual,
    /// One-off work before the first iteration.
    Setup,
    /// Optional diagnostic probes; not part of the algorithm.
    Diagnostics,
}

impl Kernel {
    pub const ALL: [Kernel; 9] = [
        Kernel::CoreUpdate,
        Kernel::ImplicitApply,
        Kernel::RankUpdate,
        Kernel::Orthogonalize,
        Kernel::FactorAssembly,
        Kernel::SmallDense,
        Kernel::Residual,
        Kernel::Setup,
        Kernel::Diagnostics,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Kernel::CoreUpdate => "core-update",
            Kernel::ImplicitApply => "implicit-apply",
            Kernel::RankUpdate => "rank-update",
            Kernel::Orthogonalize => "orthogonalize",
            Kernel::FactorAssembly => "factor-assembly",
            Kernel::SmallDense => "small-dense",
            Kernel::Residual => "residual",
            Kernel::Setup => "setup",
            Kernel::Diagnostics => "diagnostics",
        }
    }

    /// Whether the kernel belongs to the doubling step proper.
    pub fn is_step_work(self) -> bool {
        !matches!(self, Kernel::Residual | Kernel::Setup | Kernel::Diagnostics)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Raw counters. All fields are monotone while a solve runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCounts {
    pub flops: [u64; 9],
    /// Number of single-column applications of a base operator `E_0`/`F_0` (or transposes).
    pub base_applications: u64,
    /// Number of top-level block products with an implicit iterate.
    pub implicit_block_products: u64,
}

impl FlopCounts {
    pub fn get(&self, kernel: Kernel) -> u64 {
        self.flops[kernel.index()]
    }

    pub fn total(&self) -> u64 {
        self.flops.iter().sum()
    }

    /// Flops of the doubling step itself (excludes residual, setup and diagnostics).
    pub fn step_total(&self) -> u64 {
        Kernel::ALL
            .iter()
            .filter(|k| k.is_step_work())
            .map(|&k| self.get(k))
            .sum()
    }

    fn delta_since(&self, earlier: &FlopCounts) -> FlopCounts {
        let mut out = FlopCounts::default();
        for i in 0..self.flops.len() {
            out.flops[i] = self.flops[i] - earlier.flops[i];
        }
        out.base_applications = self.base_applications - earlier.base_applications;
        out.implicit_block_products = self.implicit_block_products - earlier.implicit_block_products;
        out
    }
}

/// Counts for one iteration, as returned by [`FlopModel::snapshot`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopSnapshot {
    pub iteration: usize,
    pub counts: FlopCounts,
}

impl FlopSnapshot {
    /// `(label, count)` pairs in table order, followed by the two application counters.
    pub fn rows(&self) -> Vec<(&'static str, u64)> {
        let mut rows: Vec<_> = Kernel::ALL
            .iter()
            .map(|&k| (k.label(), self.counts.get(k)))
            .collect();
        rows.push(("base-applications", self.counts.base_applications));
        rows.push(("implicit-block-products", self.counts.implicit_block_products));
        rows
    }
}

/// Per-solve flop accounting.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FlopModel {
    running: FlopCounts,
    last_snapshot: FlopCounts,
    snapshots: Vec<FlopSnapshot>,
    /// Flops of one base-operator application to a single column.
    pub c_gamma: u64,
}

impl FlopModel {
    pub fn new(c_gamma: u64) -> Self {
        FlopModel {
            c_gamma,
            ..Default::default()
        }
    }

    #[inline]
    pub fn add(&mut self, kernel: Kernel, flops: u64) {
        self.running.flops[kernel.index()] += flops;
    }

    #[inline]
    pub fn add_base_applications(&mut self, columns: u64) {
        self.running.base_applications += columns;
    }

    #[inline]
    pub fn add_block_product(&mut self) {
        self.running.implicit_block_products += 1;
    }

    /// Running totals since the model was created.
    pub fn totals(&self) -> &FlopCounts {
        &self.running
    }

    /// Closes iteration `k`: records and returns the counts accumulated since the
    /// previous snapshot.
    pub fn snapshot(&mut self, k: usize) -> FlopSnapshot {
        let snap = FlopSnapshot {
            iteration: k,
            counts: self.running.delta_since(&self.last_snapshot),
        };
        self.last_snapshot = self.running;
        self.snapshots.push(snap.clone());
        snap
    }

    pub fn snapshots(&self) -> &[FlopSnapshot] {
        &self.snapshots
    }
}

/// Flop count of a dense `(m × k) · (k × n)` product.
#[inline]
pub(crate) fn gemm_flops(m: usize, k: usize, n: usize) -> u64 {
    2 * (m as u64) * (k as u64) * (n as u64)
}
