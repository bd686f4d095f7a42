//! Report files: solve JSON, per-run flop CSV, bench CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use nare_core::structured::FlopSnapshot;
use nare_core::{LowRank, SolveReport};
use serde::Serialize;

use crate::run::Failure;

/// Column order of `bench.csv`.
pub const BENCH_HEADER: [&str; 13] = [
    "n",
    "c",
    "alpha",
    "algorithm",
    "iterations",
    "final_residual",
    "max_rank",
    "total_flops",
    "flops_per_iteration",
    "wall_time",
    "ratio",
    "status",
    "error",
];

/// Column order of `bench-iterations.csv`.
pub const ITERATION_HEADER: [&str; 7] = ["n", "c", "alpha", "k", "sda_ls_flops", "modified_flops", "ratio"];

/// Column order of the per-run flop CSV.
pub const FLOP_HEADER: [&str; 3] = ["k", "kernel", "count"];

#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    pub rank: usize,
    pub norm: f64,
    pub min_entry: f64,
    pub x11: f64,
    pub core: Vec<f64>,
}

impl SolutionSummary {
    pub fn from_low_rank(x: &LowRank) -> Self {
        let x11 = (0..x.rank())
            .map(|j| x.left()[(0, j)] * x.core()[j] * x.right()[(0, j)])
            .sum();
        SolutionSummary {
            rank: x.rank(),
            norm: x.norm(),
            min_entry: x.min_entry(),
            x11,
            core: x.core().iter().copied().collect(),
        }
    }

    pub fn from_dense(x: &nalgebra::DMatrix<f64>) -> Self {
        let svd = x.clone().svd(false, false);
        let top = svd.singular_values.max();
        let core: Vec<f64> = svd
            .singular_values
            .iter()
            .copied()
            .filter(|&s| s > top * 1e-14 && s > 0.0)
            .collect();
        SolutionSummary {
            rank: core.len(),
            norm: x.norm(),
            min_entry: x.min(),
            x11: x[(0, 0)],
            core,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolveOutput<'a> {
    pub report: &'a SolveReport,
    pub solution: SolutionSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<nare_core::modified::SymmetryAudit>,
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("cannot write {}: {e}", path.display()))
}

/// `k = 0` carries the setup work.
pub fn write_flops_csv(path: &Path, report: &SolveReport) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(FLOP_HEADER).map_err(|e| csv_error(path, e))?;
    let setup = FlopSnapshot {
        iteration: 0,
        counts: report.setup_flops,
    };
    for snap in std::iter::once(&setup).chain(report.flop_snapshots.iter()) {
        for (label, count) in snap.rows() {
            w.write_record([snap.iteration.to_string(), label.to_string(), count.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| csv_error(path, e))
}

pub fn report_paths(dir: &Path, algo: nare_core::Algorithm) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{algo}-report.json")),
        dir.join(format!("{algo}-flops.csv")),
    )
}

#[derive(Debug, Clone, Default)]
pub struct BenchRecord {
    pub n: usize,
    pub c: f64,
    pub alpha: f64,
    pub algorithm: String,
    pub iterations: usize,
    pub final_residual: Option<f64>,
    pub max_rank: usize,
    pub total_flops: u64,
    pub flops_per_iteration: Vec<u64>,
    pub wall_time: f64,
    pub ratio: Option<f64>,
    pub status: String,
    pub error: String,
}

impl BenchRecord {
    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        vec![
            self.n.to_string(),
            self.c.to_string(),
            self.alpha.to_string(),
            self.algorithm.clone(),
            self.iterations.to_string(),
            opt(self.final_residual),
            self.max_rank.to_string(),
            self.total_flops.to_string(),
            self.flops_per_iteration
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(";"),
            format!("{:.6}", self.wall_time),
            self.ratio.map(|r| format!("{r:.6}")).unwrap_or_default(),
            self.status.clone(),
            self.error.clone(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct IterationRow {
    pub n: usize,
    pub c: f64,
    pub alpha: f64,
    pub k: usize,
    pub sda_ls: u64,
    pub modified: u64,
}

pub fn write_bench(dir: &Path, records: &[BenchRecord], iterations: &[IterationRow]) -> Result<(), Failure> {
    let path = dir.join("bench.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(BENCH_HEADER).map_err(|e| csv_error(&path, e))?;
    for r in records {
        w.write_record(r.fields()).map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| csv_error(&path, e))?;

    let path = dir.join("bench-iterations.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(ITERATION_HEADER).map_err(|e| csv_error(&path, e))?;
    for r in iterations {
        let ratio = if r.sda_ls > 0 { r.modified as f64 / r.sda_ls as f64 } else { f64::NAN };
        w.write_record([
            r.n.to_string(),
            r.c.to_string(),
            r.alpha.to_string(),
            r.k.to_string(),
            r.sda_ls.to_string(),
            r.modified.to_string(),
            format!("{ratio:.6}"),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| csv_error(&path, e))
}
