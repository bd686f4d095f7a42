use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nare_core::{Algorithm, SolverConfig};

#[derive(Debug, Parser)]
#[command(name = "nare", version, about = "Doubling solvers for the transport-theory Riccati equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an instance file (Gauss–Legendre nodes)
    Generate(GenerateArgs),
    /// Solve one instance and write a JSON report and a flop CSV
    Solve(SolveArgs),
    /// Compare a large-scale solver against the dense oracle
    Verify(VerifyArgs),
    /// Run both large-scale solvers over a parameter sweep
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory
    #[arg(long, env = "NARE_OUT_DIR", default_value = "nare-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub c: f64,
    #[arg(long)]
    pub alpha: f64,
    /// Explicit file name; defaults to `<out>/instance-n<n>-c<c>-alpha<alpha>.txt`
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    #[arg(long, conflicts_with = "instance")]
    pub n: Option<usize>,
    #[arg(long, conflicts_with = "instance")]
    pub c: Option<f64>,
    #[arg(long, conflicts_with = "instance")]
    pub alpha: Option<f64>,
    /// Instance file written by `generate` (or by hand)
    #[arg(long)]
    pub instance: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value_t = SolverConfig::default().tol)]
    pub tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().trunc_rel)]
    pub trunc_rel: f64,
    #[arg(long, default_value_t = SolverConfig::default().max_iter)]
    pub max_iter: usize,
    #[arg(long, default_value_t = SolverConfig::default().max_rank)]
    pub max_rank: usize,
}

impl ConfigArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig::default()
            .with_tol(self.tol)
            .with_trunc_rel(self.trunc_rel)
            .with_max_iter(self.max_iter)
            .with_max_rank(self.max_rank)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value = "modified-sda-ls", value_parser = parse_algorithm)]
    pub algo: Algorithm,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Also run the symmetry audit (n ≤ 256) and write it next to the report
    #[arg(long)]
    pub audit: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value = "modified-sda-ls", value_parser = parse_large_scale)]
    pub algo: Algorithm,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Allowed relative Frobenius difference to the dense solution
    #[arg(long, default_value_t = 1e-10)]
    pub match_tol: f64,
    /// Allowed symmetry-audit deviation
    #[arg(long, default_value_t = 1e-10)]
    pub audit_tol: f64,
    /// Number of audited iterations
    #[arg(long, default_value_t = 5)]
    pub audit_steps: usize,
    /// Include the symmetry audit in the checks
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub audit: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated problem sizes (empty for none)
    #[arg(long, default_value = "256,1024,4096")]
    pub n_list: String,
    /// Comma-separated `c:alpha` pairs
    #[arg(long, default_value = "0.5:0.5,0.9:0.1,0.999:0.001")]
    pub params: String,
    #[arg(long, default_value_t = SolverConfig::default().tol)]
    pub tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().trunc_rel)]
    pub trunc_rel: f64,
    #[arg(long, default_value_t = 12)]
    pub max_iter: usize,
    #[arg(long, default_value_t = SolverConfig::default().max_rank)]
    pub max_rank: usize,
    /// Cells solved concurrently
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: nare_core::NareError| e.to_string())
}

fn parse_large_scale(s: &str) -> Result<Algorithm, String> {
    match parse_algorithm(s)? {
        Algorithm::DenseSda => Err("verify compares against dense-sda; choose sda-ls or modified-sda-ls".into()),
        a => Ok(a),
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| format!("cannot parse {what} from `{t}`")))
        .collect()
}

pub fn parse_pairs(s: &str) -> Result<Vec<(f64, f64)>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (c, a) = t.split_once(':').ok_or_else(|| format!("expected `c:alpha`, got `{t}`"))?;
            let c = c.trim().parse().map_err(|_| format!("cannot parse c from `{t}`"))?;
            let a = a.trim().parse().map_err(|_| format!("cannot parse alpha from `{t}`"))?;
            Ok((c, a))
        })
        .collect()
}
