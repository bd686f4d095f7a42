//! Runs both large-scale solvers on one Gauss–Legendre instance and prints
//! residual histories, ranks and the per-iteration flop ratio.
//!
//! ```text
//! cargo run --release --example compare_solvers -- 64 0.5 0.5 30
//! ```

use std::time::Instant;

use nare_core::modified::msda_solve;
use nare_core::sda_ls::sda_ls_solve;
use nare_core::{Params, SolveReport, SolverConfig, Spec};

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn show(name: &str, r: &SolveReport, secs: f64) {
    println!(
        "{name}: γ={:.3e} iterations={} {:?} {secs:.2} s residual={:?} original={:?}",
        r.gamma, r.iterations, r.termination, r.final_residual, r.original_residual
    );
    let res: Vec<String> = r.evaluated_residuals().iter().map(|x| format!("{x:.2e}")).collect();
    println!("  residuals {}", res.join(" "));
    let ranks: Vec<String> = r.rank_history.iter().map(|x| x.h.to_string()).collect();
    println!("  ranks     {}", ranks.join(" "));
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = arg(&args, 0, 64usize);
    let c = arg(&args, 1, 0.5);
    let alpha = arg(&args, 2, 0.5);
    let cfg = SolverConfig::default().with_max_iter(arg(&args, 3, 30usize));
    let inst = Spec::gauss_legendre(Params::new(c, alpha, n).expect("parameters")).build().expect("instance");

    let t = Instant::now();
    let (_, a) = sda_ls_solve(&inst, &cfg).expect("sda-ls");
    show("sda-ls", &a, t.elapsed().as_secs_f64());
    let t = Instant::now();
    let (_, b) = msda_solve(&inst, &cfg).expect("modified");
    show("modified-sda-ls", &b, t.elapsed().as_secs_f64());

    let ratios: Vec<String> = (1..=a.iterations.min(b.iterations))
        .filter_map(|k| Some(format!("{:.3}", b.step_flops(k)? as f64 / a.step_flops(k)? as f64)))
        .collect();
    println!("flop ratio per iteration {}", ratios.join(" "));
}
