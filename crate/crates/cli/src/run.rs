use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use nalgebra::DMatrix;
use nare_core::dense_sda::{dense_sda_init, dense_sda_solve, dense_sda_step, spectral_check, SpectralReport, SPECTRAL_CHECK_CAP};
use nare_core::modified::{audit_symmetry, msda_init, msda_solve, msda_step, SymmetryAudit, AUDIT_CAP};
use nare_core::sda_ls::{sda_ls_init, sda_ls_solve, sda_ls_step, InitScaling};
use nare_core::structured::gamma_select;
use nare_core::transport::{assemble_dense, balance, DEFAULT_DENSE_CAP};
use nare_core::{Algorithm, Instance, NareError, Params, SolveReport, SolverConfig, Spec, Termination};
use serde::Serialize;

use crate::args::{parse_list, parse_pairs, BenchArgs, GenerateArgs, InstanceArgs, SolveArgs, VerifyArgs};
use crate::output::{self, BenchRecord, IterationRow, SolutionSummary, SolveOutput};

/// Exit 1 for `Usage`, exit 2 for `Numerical`.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<NareError> for Failure {
    fn from(e: NareError) -> Self {
        match e {
            NareError::NearSingular { .. } | NareError::RankOverflow { .. } | NareError::NotConverged { .. } => {
                Failure::Numerical(format!("error: {e}"))
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::MaxIterations => "max-iterations",
        Termination::Stagnated => "stagnated",
    }
}

fn load_instance(a: &InstanceArgs) -> Result<Instance, Failure> {
    if let Some(path) = &a.instance {
        return Ok(Spec::load(path)?.build()?);
    }
    match (a.n, a.c, a.alpha) {
        (Some(n), Some(c), Some(alpha)) => Ok(Spec::gauss_legendre(Params::new(c, alpha, n)?).build()?),
        _ => Err(Failure::Usage("give either --instance <file> or all of --n, --c and --alpha".into())),
    }
}

pub fn generate(a: &GenerateArgs) -> Outcome {
    let spec = Spec::gauss_legendre(Params::new(a.c, a.alpha, a.n)?);
    let path = match &a.file {
        Some(p) => p.clone(),
        None => {
            output::ensure_dir(&a.out.out)?;
            a.out.out.join(format!("instance-n{}-c{}-alpha{}.txt", a.n, a.c, a.alpha))
        }
    };
    spec.save(&path)?;
    println!("{}", path.display());
    Ok(())
}

/// Runs one solver and returns the report with a summary of `X`.
fn run_solver(inst: &Instance, algo: Algorithm, config: &SolverConfig) -> Result<(SolveReport, SolutionSummary), Failure> {
    Ok(match algo {
        Algorithm::DenseSda => {
            let sol = dense_sda_solve(inst, config)?;
            (sol.report, SolutionSummary::from_dense(&sol.x))
        }
        Algorithm::SdaLs => {
            let (x, report) = sda_ls_solve(inst, config)?;
            (report, SolutionSummary::from_low_rank(&x))
        }
        Algorithm::ModifiedSdaLs => {
            let (x, report) = msda_solve(inst, config)?;
            (report, SolutionSummary::from_low_rank(&x))
        }
    })
}

fn headline_residual(report: &SolveReport) -> Option<f64> {
    report.original_residual.or(report.final_residual)
}

pub fn solve(a: &SolveArgs) -> Outcome {
    let inst = load_instance(&a.instance)?;
    let config = a.config.config();
    config.validate()?;
    let n = inst.n();
    if a.algo == Algorithm::DenseSda && n > DEFAULT_DENSE_CAP {
        return Err(Failure::Usage(format!("dense-sda is limited to n <= {DEFAULT_DENSE_CAP}, got n = {n}")));
    }
    if a.audit && n > AUDIT_CAP {
        return Err(Failure::Usage(format!("--audit is limited to n <= {AUDIT_CAP}, got n = {n}")));
    }

    let (report, solution) = run_solver(&inst, a.algo, &config)?;
    let audit = if a.audit {
        Some(audit_symmetry(&balance(&inst)?, &config, 5)?)
    } else {
        None
    };

    output::ensure_dir(&a.out.out)?;
    let (json, csv) = output::report_paths(&a.out.out, a.algo);
    output::write_json(
        &json,
        &SolveOutput {
            report: &report,
            solution: solution.clone(),
            audit,
        },
    )?;
    output::write_flops_csv(&csv, &report)?;

    println!(
        "{} n={} iterations={} termination={} residual={:e} rank={} x11={:.10}",
        a.algo,
        n,
        report.iterations,
        termination_label(report.termination),
        headline_residual(&report).unwrap_or(f64::NAN),
        solution.rank,
        solution.x11,
    );
    println!("{}", json.display());
    println!("{}", csv.display());

    if report.converged() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "{} did not converge: {} after {} iterations, residual {:e}",
            a.algo,
            termination_label(report.termination),
            report.iterations,
            headline_residual(&report).unwrap_or(f64::NAN),
        )))
    }
}

#[derive(Debug, Clone, Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    limit: f64,
    pass: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, limit: f64) -> Self {
        Check {
            name,
            value,
            limit,
            pass: value <= limit,
        }
    }

    fn at_least(name: &'static str, value: f64, limit: f64) -> Self {
        Check {
            name,
            value,
            limit,
            pass: value >= limit,
        }
    }
}

#[derive(Debug, Serialize)]
struct VerifyOutput {
    n: usize,
    algorithm: Algorithm,
    passed: bool,
    checks: Vec<Check>,
    dense: SolveReport,
    solver: SolveReport,
    iterate_differences: Option<Vec<f64>>,
    audit: Option<SymmetryAudit>,
    spectral: Option<SpectralReport>,
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.norm();
    if scale == 0.0 {
        a.norm()
    } else {
        (a - b).norm() / scale
    }
}

/// `‖H_k − H_k^dense‖_F / ‖H_k^dense‖_F` for `k = 0..=steps`, on the scale the solver iterates on.
fn iterate_differences(inst: &Instance, algo: Algorithm, config: &SolverConfig, steps: usize) -> Result<Vec<f64>, Failure> {
    let mut out = Vec::with_capacity(steps + 1);
    match algo {
        Algorithm::SdaLs => {
            let mut dense = dense_sda_init(&assemble_dense(inst, DEFAULT_DENSE_CAP)?, gamma_select(inst))?;
            let mut state = sda_ls_init(inst, config, InitScaling::Original)?;
            out.push(rel_diff(&state.h.to_dense(), &dense.h));
            for _ in 0..steps {
                dense_sda_step(&mut dense)?;
                sda_ls_step(&mut state, config)?;
                out.push(rel_diff(&state.h.to_dense(), &dense.h));
            }
        }
        Algorithm::ModifiedSdaLs => {
            let binst = balance(inst)?;
            let mut dense = dense_sda_init(&assemble_dense(&binst, DEFAULT_DENSE_CAP)?, gamma_select(&binst))?;
            let mut state = msda_init(&binst, config)?;
            out.push(rel_diff(&state.h.to_dense(), &dense.h));
            for _ in 0..steps {
                dense_sda_step(&mut dense)?;
                msda_step(&mut state, config)?;
                out.push(rel_diff(&state.h.to_dense(), &dense.h));
            }
        }
        Algorithm::DenseSda => {}
    }
    Ok(out)
}

pub fn verify(a: &VerifyArgs) -> Outcome {
    let inst = load_instance(&a.instance)?;
    let config = a.config.config();
    config.validate()?;
    let n = inst.n();
    if n > DEFAULT_DENSE_CAP {
        return Err(Failure::Usage(format!("verify needs the dense oracle, limited to n <= {DEFAULT_DENSE_CAP}, got n = {n}")));
    }

    let dense = dense_sda_solve(&inst, &config)?;
    let x = match a.algo {
        Algorithm::SdaLs => sda_ls_solve(&inst, &config)?,
        _ => msda_solve(&inst, &config)?,
    };
    let (x, report) = (x.0.to_dense(), x.1);

    let residual_limit = 10.0 * config.tol;
    let mut checks = vec![
        Check::at_most("solution-difference", rel_diff(&x, &dense.x), a.match_tol),
        Check::at_most("dense-residual", dense.report.final_residual.unwrap_or(f64::INFINITY), residual_limit),
        Check::at_most("solver-residual", headline_residual(&report).unwrap_or(f64::INFINITY), residual_limit),
        Check::at_least("nonnegativity", x.min(), -1e-12),
    ];

    let iterate_diffs = if config.trunc_rel == 0.0 {
        let steps = dense.report.iterations.min(report.iterations);
        let diffs = iterate_differences(&inst, a.algo, &config, steps)?;
        checks.push(Check::at_most("iterate-difference", diffs.iter().copied().fold(0.0, f64::max), a.match_tol));
        Some(diffs)
    } else {
        None
    };

    let audit = if a.audit && n <= AUDIT_CAP {
        let audit = audit_symmetry(&balance(&inst)?, &config, a.audit_steps)?;
        checks.push(Check::at_most("symmetry-audit", audit.max_deviation(), a.audit_tol));
        Some(audit)
    } else {
        if a.audit {
            eprintln!("note: symmetry audit skipped, n = {n} exceeds {AUDIT_CAP}");
        }
        None
    };

    let spectral = (n <= SPECTRAL_CHECK_CAP).then(|| spectral_check(&inst)).transpose()?;

    let passed = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!(
            "{} {:<20} {:>12.4e} (limit {:.1e})",
            if c.pass { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.limit
        );
    }
    if let Some(s) = &spectral {
        println!("info spectral-match-distance {:.4e}", s.match_distance);
    }

    output::ensure_dir(&a.out.out)?;
    let path = a.out.out.join(format!("verify-{}.json", a.algo));
    output::write_json(
        &path,
        &VerifyOutput {
            n,
            algorithm: a.algo,
            passed,
            checks: checks.clone(),
            dense: dense.report,
            solver: report,
            iterate_differences: iterate_diffs,
            audit,
            spectral,
        },
    )?;
    println!("{}", path.display());

    if passed {
        Ok(())
    } else {
        let failed: Vec<String> = checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("  {}: {:e} violates limit {:e}", c.name, c.value, c.limit))
            .collect();
        Err(Failure::Numerical(format!("verify failed {} check(s):\n{}", failed.len(), failed.join("\n"))))
    }
}

struct Cell {
    n: usize,
    c: f64,
    alpha: f64,
}

fn bench_record(cell: &Cell, algo: Algorithm, run: &Result<(SolveReport, SolutionSummary), Failure>) -> BenchRecord {
    let mut r = BenchRecord {
        n: cell.n,
        c: cell.c,
        alpha: cell.alpha,
        algorithm: algo.to_string(),
        ..BenchRecord::default()
    };
    match run {
        Ok((report, _)) => {
            r.iterations = report.iterations;
            r.final_residual = headline_residual(report);
            r.max_rank = report.max_rank();
            r.total_flops = report.totals.total();
            r.flops_per_iteration = (1..=report.iterations).filter_map(|k| report.step_flops(k)).collect();
            r.wall_time = report.total_seconds();
            r.status = termination_label(report.termination).into();
        }
        Err(Failure::Usage(m) | Failure::Numerical(m)) => {
            r.status = "error".into();
            r.error = m.clone();
        }
    }
    r
}

type CellOutput = (Vec<BenchRecord>, Vec<IterationRow>);

fn bench_cell(cell: &Cell, config: &SolverConfig) -> CellOutput {
    let inst = Params::new(cell.c, cell.alpha, cell.n).and_then(|p| Spec::gauss_legendre(p).build());
    let run = |algo| match &inst {
        Ok(inst) => run_solver(inst, algo, config),
        Err(e) => Err(Failure::from(e.clone())),
    };
    let original = run(Algorithm::SdaLs);
    let modified = run(Algorithm::ModifiedSdaLs);
    let mut records = vec![
        bench_record(cell, Algorithm::SdaLs, &original),
        bench_record(cell, Algorithm::ModifiedSdaLs, &modified),
    ];

    let mut rows = Vec::new();
    if let (Ok((ro, _)), Ok((rm, _))) = (&original, &modified) {
        for k in 1..=ro.iterations.min(rm.iterations) {
            if let (Some(so), Some(sm)) = (ro.step_flops(k), rm.step_flops(k)) {
                rows.push(IterationRow {
                    n: cell.n,
                    c: cell.c,
                    alpha: cell.alpha,
                    k,
                    sda_ls: so,
                    modified: sm,
                });
            }
        }
        let so: u64 = rows.iter().map(|r| r.sda_ls).sum();
        let sm: u64 = rows.iter().map(|r| r.modified).sum();
        if so > 0 {
            for r in &mut records {
                r.ratio = Some(sm as f64 / so as f64);
            }
        }
    }
    (records, rows)
}

pub fn bench(a: &BenchArgs) -> Outcome {
    let ns: Vec<usize> = parse_list(&a.n_list, "n").map_err(Failure::Usage)?;
    let pairs = parse_pairs(&a.params).map_err(Failure::Usage)?;
    if a.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let config = SolverConfig::default()
        .with_tol(a.tol)
        .with_trunc_rel(a.trunc_rel)
        .with_max_iter(a.max_iter)
        .with_max_rank(a.max_rank);
    config.validate()?;

    let cells: Vec<Cell> = ns
        .iter()
        .flat_map(|&n| pairs.iter().map(move |&(c, alpha)| Cell { n, c, alpha }))
        .collect();
    let results: Mutex<Vec<Option<CellOutput>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..a.jobs.min(cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let out = bench_cell(cell, &config);
                for r in &out.0 {
                    eprintln!(
                        "n={} c={} alpha={} {}: {} iterations={} residual={}",
                        r.n,
                        r.c,
                        r.alpha,
                        r.algorithm,
                        r.status,
                        r.iterations,
                        r.final_residual.map(|x| format!("{x:e}")).unwrap_or_else(|| "-".into())
                    );
                }
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });

    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (r, it) in results.into_inner().unwrap().into_iter().flatten() {
        records.extend(r);
        rows.extend(it);
    }
    output::ensure_dir(&a.out.out)?;
    output::write_bench(&a.out.out, &records, &rows)?;
    let path: PathBuf = a.out.out.join("bench.csv");
    println!("{}", path.display());
    Ok(())
}
