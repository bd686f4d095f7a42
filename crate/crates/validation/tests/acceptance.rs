//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use nare_core::dense_sda::{dense_sda_init, dense_sda_solve, dense_sda_step, spectral_check};
use nare_core::modified::{audit_symmetry, msda_solve};
use nare_core::probe::random_matrix;
use nare_core::sda_ls::{sda_ls_init, sda_ls_solve, sda_ls_step, InitScaling};
use nare_core::structured::{gamma_select, Shifted, ShiftedSolver};
use nare_core::transport::{assemble_dense, balance, gauss_legendre, NareInstance, Quadrature, TransportParams};
use nare_core::{SolveReport, SolverConfig};

mod tol {
    pub const SCALAR_X: f64 = 1e-12;
    pub const SCALAR_MAX_ITER: usize = 6;
    pub const SCALAR_SECONDS: f64 = 1.0;
    pub const DENSE_MATCH: f64 = 1e-10;
    pub const DENSE_MATCH_SECONDS: f64 = 30.0;
    pub const ITERATE_MATCH: f64 = 1e-10;
    pub const AUDIT: f64 = 1e-10;
    pub const AUDIT_STEPS: usize = 5;
    pub const FLOP_RATIO: (f64, f64) = (0.4, 0.6);
    pub const RATE_CONSTANT: f64 = 1e3;
    pub const SWEEP_MAX_ITER: usize = 15;
    pub const NONNEG: f64 = -1e-12;
    pub const RESIDUAL_FACTOR: f64 = 10.0;
    pub const SPECTRAL: f64 = 1e-8;
    pub const SCALING_RATIO: f64 = 2.5;
    pub const SCALING_SECONDS: f64 = 120.0;
    pub const SMW: f64 = 1e-12;
    pub const SMW_SECONDS: f64 = 5.0;
}

const GRID: [(f64, f64); 3] = [(0.5, 0.5), (0.9, 0.1), (0.999, 0.001)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gl(n: usize, c: f64, alpha: f64) -> NareInstance<f64> {
    NareInstance::build(&TransportParams::new(c, alpha, n).unwrap(), &gauss_legendre(n)).unwrap()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn headline(r: &SolveReport) -> f64 {
    r.original_residual.or(r.final_residual).unwrap_or(f64::INFINITY)
}

fn scalar_oracle() -> Outcome {
    let t = Instant::now();
    let params = TransportParams::new(0.5, 0.0, 1).unwrap();
    let inst = NareInstance::build(&params, &Quadrature::new(vec![0.5], vec![1.0]).unwrap()).unwrap();
    let expect = 3.0 - 8f64.sqrt();
    let cfg = SolverConfig::default();

    let dense = dense_sda_solve(&inst, &cfg).unwrap();
    let (xl, rl) = sda_ls_solve(&inst, &cfg).unwrap();
    let (xm, rm) = msda_solve(&inst, &cfg).unwrap();
    let runs = [
        ("dense", dense.x[(0, 0)], dense.report.iterations),
        ("sda-ls", xl.to_dense()[(0, 0)], rl.iterations),
        ("modified", xm.to_dense()[(0, 0)], rm.iterations),
    ];
    let secs = t.elapsed().as_secs_f64();
    let err = runs.iter().map(|r| (r.1 - expect).abs()).fold(0.0, f64::max);
    let iters = runs.iter().map(|r| r.2).max().unwrap();
    outcome(
        err <= tol::SCALAR_X && iters <= tol::SCALAR_MAX_ITER && secs < tol::SCALAR_SECONDS,
        format!("max |x - (3-2√2)| = {err:.2e}, max iterations {iters}, {secs:.3} s"),
    )
}

/// Converged large-scale runs at n = 64, reused by the nonnegativity/residual criterion.
struct Run {
    label: String,
    x: DMatrix<f64>,
    report: SolveReport,
}

fn dense_equivalence(runs: &mut Vec<Run>) -> Outcome {
    let t = Instant::now();
    let cfg = SolverConfig::default();
    let mut worst = (0.0f64, String::new());
    for n in [16, 32, 64] {
        for (c, alpha) in GRID {
            let inst = gl(n, c, alpha);
            let dense = dense_sda_solve(&inst, &cfg).unwrap();
            let (xl, rl) = sda_ls_solve(&inst, &cfg).unwrap();
            let (xm, rm) = msda_solve(&inst, &cfg).unwrap();
            for (name, x, report) in [("sda-ls", xl.to_dense(), rl), ("modified", xm.to_dense(), rm)] {
                let d = rel(&x, &dense.x);
                if d >= worst.0 {
                    worst = (d, format!("{name} n={n} ({c},{alpha})"));
                }
                if n == 64 {
                    runs.push(Run {
                        label: format!("{name} ({c},{alpha})"),
                        x,
                        report,
                    });
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst.0 <= tol::DENSE_MATCH && secs < tol::DENSE_MATCH_SECONDS,
        format!("max relative difference {:.2e} at {}, {secs:.1} s", worst.0, worst.1),
    )
}

fn iterate_equivalence() -> Outcome {
    let cfg = SolverConfig::default().with_trunc_rel(0.0);
    let cases = [(32, 0.5, 0.5), (32, 0.9, 0.1), (32, 0.999, 0.001), (64, 0.5, 0.5)];
    let mut worst = (0.0f64, String::new());
    let mut steps_total = 0;
    for (n, c, alpha) in cases {
        let inst = gl(n, c, alpha);
        let steps = dense_sda_solve(&inst, &cfg).unwrap().report.iterations;
        let mut dense = dense_sda_init(&assemble_dense(&inst, 64).unwrap(), gamma_select(&inst)).unwrap();
        let mut state = sda_ls_init(&inst, &cfg, InitScaling::Original).unwrap();
        for k in 0..=steps {
            if k > 0 {
                dense_sda_step(&mut dense).unwrap();
                sda_ls_step(&mut state, &cfg).unwrap();
            }
            let d = rel(&state.h.to_dense(), &dense.h);
            if d >= worst.0 {
                worst = (d, format!("n={n} ({c},{alpha}) k={k}"));
            }
        }
        steps_total += steps;
    }
    outcome(
        worst.0 <= tol::ITERATE_MATCH,
        format!("{steps_total} iterates compared, max relative difference {:.2e} at {}", worst.0, worst.1),
    )
}

fn symmetry_audit() -> Outcome {
    let cfg = SolverConfig::default();
    let mut worst = (0.0f64, String::new());
    for n in [16, 64] {
        for (c, alpha) in GRID {
            let audit = audit_symmetry(&balance(&gl(n, c, alpha)).unwrap(), &cfg, tol::AUDIT_STEPS).unwrap();
            let d = audit.max_deviation();
            if d >= worst.0 {
                worst = (d, format!("n={n} ({c},{alpha})"));
            }
        }
    }
    outcome(worst.0 <= tol::AUDIT, format!("max deviation over k ≤ {} is {:.2e} at {}", tol::AUDIT_STEPS, worst.0, worst.1))
}

fn flop_halving() -> Outcome {
    let inst = gl(1024, 0.9, 0.1);
    let cfg = SolverConfig::default().with_max_iter(8);
    let (_, ro) = sda_ls_solve(&inst, &cfg).unwrap();
    let (_, rm) = msda_solve(&inst, &cfg).unwrap();
    let k_max = ro.iterations.min(rm.iterations);
    let ratios: Vec<f64> = (2..=k_max)
        .map(|k| rm.step_flops(k).unwrap() as f64 / ro.step_flops(k).unwrap() as f64)
        .collect();
    let in_band = ratios.iter().all(|r| (tol::FLOP_RATIO.0..=tol::FLOP_RATIO.1).contains(r));
    let products = |r: &SolveReport| -> Vec<u64> { r.flop_snapshots.iter().map(|s| s.counts.implicit_block_products).collect() };
    let (po, pm) = (products(&ro), products(&rm));
    let counts_ok = po.iter().all(|&p| p == 4) && pm.iter().all(|&p| p == 2) && !po.is_empty();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    outcome(
        in_band && counts_ok && !ratios.is_empty(),
        format!(
            "n=1024, k=2..{k_max}: ratio in [{lo:.3}, {hi:.3}]; block products per step {:?} vs {:?}",
            po.first().copied(),
            pm.first().copied()
        ),
    )
}

/// `max r_{k+1}/r_k²` over the last three transitions ending above `floor`.
fn rate_constant(history: &[f64], floor: f64) -> Option<f64> {
    let pairs: Vec<f64> = history
        .windows(2)
        .filter(|w| w[1] > floor)
        .map(|w| w[1] / (w[0] * w[0]))
        .collect();
    (pairs.len() >= 3).then(|| pairs[pairs.len() - 3..].iter().copied().fold(0.0, f64::max))
}

fn quadratic_convergence() -> Outcome {
    let cfg = SolverConfig::default().with_operator_norms(true);
    let floor = tol::RESIDUAL_FACTOR * cfg.tol;
    let mut worst_c = 0.0f64;
    let mut worst_ce = 0.0f64;
    let mut rate_ok = true;
    for (c, alpha) in GRID {
        let (_, r) = msda_solve(&gl(64, c, alpha), &cfg).unwrap();
        let res = r.evaluated_residuals();
        match rate_constant(&res, floor) {
            Some(cr) => worst_c = worst_c.max(cr),
            None => rate_ok = false,
        }
        match rate_constant(&r.e_norm_history, f64::EPSILON) {
            Some(ce) => worst_ce = worst_ce.max(ce),
            None => rate_ok = false,
        }
    }
    rate_ok &= worst_c <= tol::RATE_CONSTANT && worst_ce <= tol::RATE_CONSTANT;

    let cfg = SolverConfig::default().with_max_iter(tol::SWEEP_MAX_ITER);
    let mut failures = Vec::new();
    for n in [256, 1024, 4096] {
        for (c, alpha) in GRID {
            let (_, r) = msda_solve(&gl(n, c, alpha), &cfg).unwrap();
            if !r.converged() {
                failures.push(format!("n={n} ({c},{alpha}) γ={:.1e} r={:.1e}", r.gamma, headline(&r)));
            }
        }
    }
    outcome(
        rate_ok && failures.is_empty(),
        format!(
            "n=64 terminal rate C_res={worst_c:.2e}, C_E={worst_ce:.2e} (limit {:.0e}); not converged within {} iterations: {}",
            tol::RATE_CONSTANT,
            tol::SWEEP_MAX_ITER,
            if failures.is_empty() { "none".to_string() } else { failures.join("; ") }
        ),
    )
}

fn nonnegativity(runs: &[Run]) -> Outcome {
    let limit = tol::RESIDUAL_FACTOR * SolverConfig::default().tol;
    let min = runs.iter().map(|r| r.x.min()).fold(f64::INFINITY, f64::min);
    let (res, at) = runs
        .iter()
        .map(|r| (headline(&r.report), r.label.as_str()))
        .fold((0.0, ""), |a, b| if b.0 > a.0 { b } else { a });
    outcome(
        !runs.is_empty() && min >= tol::NONNEG && res <= limit,
        format!("{} runs at n=64: min entry {min:.2e}, max original residual {res:.2e} ({at})", runs.len()),
    )
}

fn spectral_relation() -> Outcome {
    let mut worst = 0.0f64;
    for (c, alpha) in GRID {
        worst = worst.max(spectral_check(&gl(8, c, alpha)).unwrap().match_distance);
    }
    outcome(worst <= tol::SPECTRAL, format!("n=8 Hausdorff distance {worst:.3e} (limit {:.0e})", tol::SPECTRAL))
}

fn linear_scaling() -> Outcome {
    let t = Instant::now();
    let cfg = SolverConfig::default().with_max_iter(12);
    let per_iter = |n: usize| -> (f64, Vec<usize>) {
        let inst = gl(n, 0.9, 0.1);
        (0..2)
            .map(|_| {
                let (_, r) = msda_solve(&inst, &cfg).unwrap();
                let secs: f64 = r.wall_times.iter().skip(1).sum();
                (secs / (r.wall_times.len() - 1) as f64, r.rank_history.iter().map(|x| x.h).collect())
            })
            .fold((f64::INFINITY, Vec::new()), |a, b| if b.0 < a.0 { b } else { a })
    };
    let (small, rs) = per_iter(2048);
    let (large, rl) = per_iter(4096);
    let ratio = large / small;
    let secs = t.elapsed().as_secs_f64();
    outcome(
        ratio <= tol::SCALING_RATIO && secs < tol::SCALING_SECONDS,
        format!(
            "mean step time {:.1} ms (n=2048) vs {:.1} ms (n=4096), ratio {ratio:.2}; final ranks {:?}/{:?}; {secs:.1} s",
            small * 1e3,
            large * 1e3,
            rs.last(),
            rl.last()
        ),
    )
}

fn smw_round_trips() -> Outcome {
    let t = Instant::now();
    let inst = gl(4096, 0.9, 0.1);
    let binst = balance(&inst).unwrap();
    let probes = random_matrix::<f64>(4096, 100, 0x5eed);
    let mut worst = 0.0f64;
    let mut check = |solver: &ShiftedSolver<f64>| {
        for which in [Shifted::E, Shifted::A, Shifted::W, Shifted::V] {
            for transpose in [false, true] {
                let back = solver.apply(which, &solver.solve(which, &probes, transpose), transpose);
                for j in 0..probes.ncols() {
                    let e = (back.column(j) - probes.column(j)).norm() / probes.column(j).norm();
                    worst = worst.max(e);
                }
            }
        }
    };
    check(&ShiftedSolver::new(&inst, gamma_select(&inst)).unwrap());
    check(&ShiftedSolver::new(&binst, gamma_select(&binst)).unwrap());
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst <= tol::SMW && secs < tol::SMW_SECONDS,
        format!("n=4096, 100 probes × 4 operators × 2 orientations × 2 scalings: max error {worst:.2e}, {secs:.2} s"),
    )
}

fn main() -> ExitCode {
    let mut runs = Vec::new();
    type Criterion = Box<dyn FnOnce(&mut Vec<Run>) -> Outcome>;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("scalar analytic oracle", Box::new(|_| scalar_oracle())),
        ("dense-oracle equivalence", Box::new(dense_equivalence)),
        ("untruncated iterate equivalence", Box::new(|_| iterate_equivalence())),
        ("balanced symmetry audit", Box::new(|_| symmetry_audit())),
        ("flop halving", Box::new(|_| flop_halving())),
        ("quadratic convergence", Box::new(|_| quadratic_convergence())),
        ("nonnegativity and residual", Box::new(|r| nonnegativity(r))),
        ("spectral relation", Box::new(|_| spectral_relation())),
        ("linear scaling", Box::new(|_| linear_scaling())),
        ("shifted solve round trips", Box::new(|_| smw_round_trips())),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let o = run(&mut runs);
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{failed} of 10 criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
