//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs as a plain binary so the report is never captured.

use std::process::ExitCode;
use std::time::Instant;

use ncsc::diagnostics::{
    check_point_lemmas, kl_exponent_probe, quadratic_second_order_check, rate_trend,
};
use ncsc::experiment::{
    run_experiment, run_verification, write_results, ExperimentConfig, ProblemSpec, QuadraticSpec,
    ResultRow, SolverSpec, StartSpec, VerifyConfig,
};
use ncsc::problems::QuadraticNCSC;
use ncsc::solvers::TraceRecord;
use ncsc::{LineSearchConfig, SeededRng, StopRule};

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn report(id: usize, title: &str, verdict: &Verdict) {
    let tag = if verdict.passed { "PASS" } else { "FAIL" };
    println!("{tag} [{id:>2}] {title}: {}", verdict.detail);
}

/// Rows of the seeded benchmark plus the config they came from.
struct Bench {
    cfg: ExperimentConfig,
    rows: Vec<ResultRow>,
    seconds: f64,
}

const BENCH_CONFIG: &str = r#"{
    "problem": {"kind": "synthetic", "seed": 1, "d": 50, "N": 75, "rho_x": 0.1, "rho_y": 10.0},
    "solvers": [
        {"solver": "alg1-gda"},
        {"solver": "alg2-bb"},
        {"solver": "alg2-pf"},
        {"solver": "ttgda-grid"},
        {"solver": "gdbb"}
    ],
    "stop": {"grad_tol": 1e-7, "max_iters": 100000}
}"#;

fn run_bench() -> Bench {
    let cfg = ExperimentConfig::from_json(BENCH_CONFIG).expect("bench config");
    let start = Instant::now();
    let rows = run_experiment(&cfg, true).expect("bench run");
    Bench {
        cfg,
        rows,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn row<'a>(bench: &'a Bench, label: &str) -> &'a ResultRow {
    bench
        .rows
        .iter()
        .find(|r| r.report.algorithm == label)
        .unwrap_or_else(|| panic!("no {label} row"))
}

fn closed_form_convergence() -> Verdict {
    let solvers = [
        r#"{"solver": "alg1-gda", "ls": {"tau": 1.0}}"#,
        r#"{"solver": "alg2-bb", "ls": {"tau": 1.0}}"#,
        r#"{"solver": "alg2-pf", "ls": {"tau": 1.0}}"#,
        r#"{"solver": "gdbb", "tau": 1.0}"#,
        r#"{"solver": "ttgda-grid"}"#,
    ];
    let stop = StopRule::new(1e-9, 5000);
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let problem = ProblemSpec::Quadratic(QuadraticSpec::Random {
            seed,
            n: 1 + (seed % 10) as usize,
            m: 1 + (seed % 6) as usize,
        });
        let inst = problem.build().expect("quadratic instance");
        let solution = inst.solution.clone().expect("closed form");
        let z0 = inst.start_point(StartSpec::Origin).expect("start");
        for text in solvers {
            let spec: SolverSpec = serde_json::from_str(text).expect("solver spec");
            let label = spec.label();
            match spec.run(inst.oracle.as_ref(), &stop, &z0, false) {
                Ok(r) => {
                    let dist = r.final_point().expect("final point").distance(&solution);
                    worst = worst.max(dist);
                    if dist.is_nan() || dist > 1e-6 || r.iters > 5000 {
                        failures.push(format!(
                            "seed {seed} {label}: dist {dist:.2e} after {} iters",
                            r.iters
                        ));
                    }
                }
                Err(e) => failures.push(format!("seed {seed} {label}: {e}")),
            }
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let mut detail = format!(
        "20 instances x 5 solvers, worst distance {worst:.2e}, {seconds:.1} s (limit 60 s)"
    );
    if !failures.is_empty() {
        detail.push_str(&format!(
            "; {} misses: {}",
            failures.len(),
            failures.join(", ")
        ));
    }
    Verdict::new(failures.is_empty() && seconds <= 60.0, detail)
}

fn lemma_suite(verify: &ncsc::experiment::VerifyReport) -> Verdict {
    let violations: u64 = verify
        .inequalities
        .iter()
        .map(|r| r.violations as u64)
        .sum();
    let samples: u64 = verify.inequalities.iter().map(|r| r.samples as u64).sum();
    let worst = verify
        .inequalities
        .iter()
        .map(|r| r.slack / (1.0 + r.lhs.abs() + r.rhs.abs()))
        .fold(f64::INFINITY, f64::min);
    let bad: Vec<String> = verify
        .inequalities
        .iter()
        .filter(|r| r.violations > 0)
        .map(|r| format!("{}/{} ({})", r.problem, r.name, r.violations))
        .collect();
    Verdict::new(
        violations == 0 && verify.config.lemma_samples == 1000,
        format!(
            "{} inequalities, {samples} checks, {violations} violations, worst relative slack {worst:.2e} {}",
            verify.inequalities.len(),
            bad.join(" ")
        ),
    )
}

fn derivative_checks(verify: &ncsc::experiment::VerifyReport) -> Verdict {
    let fd: Vec<_> = verify
        .checks
        .iter()
        .filter(|c| {
            ["grad_f", "grad_h", "y_dir_second", "phi_grad"]
                .iter()
                .any(|n| c.name.ends_with(n))
        })
        .collect();
    let detail = fd
        .iter()
        .map(|c| format!("{} {:.1e}/{:.0e}", c.name, c.value, c.limit))
        .collect::<Vec<_>>()
        .join(", ");
    Verdict::new(
        fd.len() == 8 && fd.iter().all(|c| c.passed) && verify.config.fd_samples == 20,
        detail,
    )
}

fn second_order_equivalence() -> Verdict {
    let mut rng = SeededRng::new(4);
    let mut worst = 0.0_f64;
    for i in 0..50usize {
        let (n, m) = (1 + i % 10, 1 + i % 6);
        let q = QuadraticNCSC::random(&mut rng, n, m).expect("instance");
        let err = quadratic_second_order_check(&q, 2.0 / q.mu()).expect("schur check");
        worst = worst.max(err / (1.0 + q.a().norm()));
    }
    Verdict::new(
        worst <= 1e-10,
        format!("50 instances, worst error / (1 + |A|) = {worst:.2e} (limit 1e-10)"),
    )
}

fn nonincreasing(prev: f64, next: f64) -> bool {
    next <= prev + LineSearchConfig::default().fp_slack * prev.abs().max(1.0)
}

/// Checks `H_k` against the trace; `H_k` is compared only between steps
/// that share a `beta`, since raising `beta` raises the merit itself.
fn merit_violations(trace: &[TraceRecord]) -> usize {
    let mut bad = 0;
    for t in trace {
        if let (Some(h), Some(avg)) = (t.merit, t.merit_avg) {
            if !nonincreasing(avg, h) {
                bad += 1;
            }
        }
    }
    for w in trace.windows(2) {
        if let (Some(a), Some(b)) = (w[0].merit_avg, w[1].merit_avg) {
            if w[0].beta == w[1].beta && !nonincreasing(a, b) {
                bad += 1;
            }
        }
    }
    bad
}

fn merit_monotonicity(bench: &Bench) -> Verdict {
    let mut passed = true;
    let mut parts = Vec::new();
    for r in &bench.rows {
        let rep = &r.report;
        let tracked = rep.trace.iter().any(|t| t.merit_avg.is_some());
        let bad = merit_violations(&rep.trace);
        let floors = match (rep.min_eta_y, rep.min_eta_x) {
            (Some(ey), Some(ex)) => {
                passed &= ey > 0.0 && ex > 0.0;
                format!("min eta ({ey:.1e}, {ex:.1e})")
            }
            _ => "fixed steps".to_string(),
        };
        passed &= bad == 0;
        let merit = if tracked {
            format!("{bad} merit violations")
        } else {
            "no merit".to_string()
        };
        parts.push(format!("{} {merit}, {floors}", rep.algorithm));
    }
    Verdict::new(passed, parts.join("; "))
}

fn beta_stabilization(bench: &Bench) -> Verdict {
    let c = 1.0;
    let inst = ProblemSpec::Quadratic(QuadraticSpec::Random {
        seed: 2,
        n: 5,
        m: 3,
    })
    .build()
    .expect("quadratic");
    let mu = inst.oracle.mu_hint().expect("mu");
    let z0 = inst.start_point(StartSpec::Ones).expect("start");
    let spec: SolverSpec =
        serde_json::from_str(r#"{"solver": "alg2-pf", "c": 1.0, "ls": {"tau": 1.0}}"#).unwrap();
    let run = spec
        .run(inst.oracle.as_ref(), &StopRule::new(1e-9, 5000), &z0, true)
        .expect("quadratic alg2-pf");
    let settled = run.trace.first().and_then(|t| t.beta).unwrap_or(f64::NAN);
    let constant = run.trace.iter().all(|t| t.beta == Some(settled));
    let cap = 2.0 * (c + 1.0) / mu;
    let quad_ok = constant && settled <= cap * (1.0 + 1e-12);

    let pf = &row(bench, "GDA-PF").report;
    let (n_points, rho_y) = match &bench.cfg.problem {
        ProblemSpec::Synthetic {
            n_points, rho_y, ..
        } => (*n_points as f64, *rho_y),
        _ => unreachable!("bench runs on the synthetic instance"),
    };
    let robust_cap = 2.0 * (c + 1.0) * n_points / (rho_y - 2.0);
    let robust_max = pf
        .trace
        .iter()
        .filter_map(|t| t.beta)
        .fold(0.0_f64, f64::max);
    Verdict::new(
        quad_ok && robust_max <= robust_cap,
        format!(
            "quadratic beta {settled:.4} constant={constant} (cap {cap:.4}); regression max beta {robust_max:.3} (cap {robust_cap:.3})"
        ),
    )
}

fn table_orderings(bench: &Bench) -> Verdict {
    let ls = &row(bench, "GDA-LS").report;
    let bb = &row(bench, "GDA-BB").report;
    let tt = &row(bench, "TTGDA").report;
    let gdbb = &row(bench, "GD-BB").report;
    let a = (bb.g_evals as f64) < 0.2 * tt.g_evals as f64;
    let b = bb.iters < ls.iters;
    let c = bb.hvp_evals == 0 && gdbb.hvp_evals >= gdbb.iters as u64;
    let converged: Vec<&ResultRow> = bench
        .rows
        .iter()
        .filter(|r| r.report.status.is_converged())
        .collect();
    let f_ref = converged.first().map_or(f64::NAN, |r| r.report.final_f);
    let spread = converged
        .iter()
        .map(|r| (r.report.final_f - f_ref).abs() / f_ref.abs().max(f64::MIN_POSITIVE))
        .fold(0.0_f64, f64::max);
    let d = converged.len() >= 2 && spread <= 1e-4;
    let time_ok = bench.seconds <= 300.0;
    let counts = bench
        .rows
        .iter()
        .map(|r| {
            format!(
                "{} {}it/{}g/{}hvp",
                r.report.algorithm, r.report.iters, r.report.g_evals, r.report.hvp_evals
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    Verdict::new(
        a && b && c && d && time_ok,
        format!(
            "(a)={a} (b)={b} (c)={c} (d)={d} spread {spread:.1e} over {} converged, {:.1} s; {counts}",
            converged.len(),
            bench.seconds
        ),
    )
}

fn rate_monitor(bench: &Bench) -> Verdict {
    let ls = &row(bench, "GDA-LS").report;
    let grads: Vec<f64> = ls.trace.iter().map(|t| t.grad_norm).collect();
    match rate_trend(&grads) {
        Ok(trend) => Verdict::new(
            trend.is_nonincreasing(),
            format!(
                "slope {:.3e} +- {:.3e} over {} iterations",
                trend.fit.slope, trend.fit.slope_std_error, trend.fit.n
            ),
        ),
        Err(e) => Verdict::new(false, e.to_string()),
    }
}

fn kl_probe() -> Verdict {
    let inst = ProblemSpec::Quadratic(QuadraticSpec::Random {
        seed: 6,
        n: 4,
        m: 3,
    })
    .build()
    .expect("quadratic");
    let z0 = inst.start_point(StartSpec::Ones).expect("start");
    let spec: SolverSpec =
        serde_json::from_str(r#"{"solver": "alg1-gda", "eta_grid": [0.5], "ls": {"tau": 1.0}}"#)
            .unwrap();
    let run = spec
        .run(inst.oracle.as_ref(), &StopRule::new(1e-9, 5000), &z0, true)
        .expect("quadratic run");
    let merits: Vec<f64> = run.trace.iter().filter_map(|t| t.merit).collect();
    let grads: Vec<f64> = run.trace.iter().map(|t| t.grad_norm).collect();
    let quad = kl_exponent_probe(&merits, &grads);

    let gaps: Vec<f64> = (0..60).map(|k| 0.8_f64.powi(k)).collect();
    let h_inf = 1.5;
    let mut merits: Vec<f64> = gaps.iter().map(|g| h_inf + g).collect();
    let mut grads: Vec<f64> = gaps.iter().map(|g| 3.0 * g.powf(0.75)).collect();
    merits.push(h_inf);
    grads.push(0.0);
    let power = kl_exponent_probe(&merits, &grads);

    match (quad, power) {
        (Ok(q), Ok(p)) => Verdict::new(
            (0.4..=0.6).contains(&q.theta) && (p.theta - 0.75).abs() <= 0.01,
            format!(
                "quadratic theta {:.3} from {} points; power-law theta {:.4}",
                q.theta, q.points, p.theta
            ),
        ),
        (q, p) => Verdict::new(false, format!("quadratic {q:?}, power law {p:?}")),
    }
}

fn without_time(rows: &[ResultRow]) -> Vec<String> {
    let mut buf = Vec::new();
    write_results(&mut buf, rows).expect("render");
    String::from_utf8(buf)
        .expect("utf8")
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

fn determinism(first: &Bench) -> Verdict {
    let second = run_bench();
    let (a, b) = (without_time(&first.rows), without_time(&second.rows));
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len());
    Verdict::new(
        differing == 0,
        format!(
            "{} rows compared, {differing} differ (rerun {:.1} s)",
            a.len() - 1,
            second.seconds
        ),
    )
}

fn main() -> ExitCode {
    let verify = run_verification(&VerifyConfig::default()).expect("verification suite");
    let lemma_check = {
        // an explicit spot check that the lemma records are produced per point
        let inst = ProblemSpec::Quadratic(QuadraticSpec::Random {
            seed: 0,
            n: 2,
            m: 2,
        })
        .build()
        .expect("quadratic");
        let z = inst.start_point(StartSpec::Ones).expect("start");
        let mu = inst.oracle.mu_hint().expect("mu");
        check_point_lemmas(inst.oracle.as_ref(), mu, 2.0 / mu, z.x(), z.y(), None, None)
            .map(|r| r.records.len())
            .unwrap_or(0)
    };
    let bench = run_bench();

    let mut verdicts = vec![
        (
            "closed-form convergence on random quadratics",
            closed_form_convergence(),
        ),
        ("gradient-bound inequalities hold on sampled points", {
            let mut v = lemma_suite(&verify);
            v.passed &= lemma_check == 6;
            v
        }),
        (
            "finite-difference derivative checks",
            derivative_checks(&verify),
        ),
        (
            "Schur complement matches the value-function Hessian",
            second_order_equivalence(),
        ),
        (
            "merit monotonicity and positive step floors",
            merit_monotonicity(&bench),
        ),
        ("beta stabilization", beta_stabilization(&bench)),
        ("scaled benchmark orderings", table_orderings(&bench)),
        ("rate monitor on GDA-LS", rate_monitor(&bench)),
        ("KL exponent probe", kl_probe()),
    ];
    verdicts.push((
        "benchmark rerun is byte-identical except time",
        determinism(&bench),
    ));

    for (i, (title, v)) in verdicts.iter().enumerate() {
        report(i + 1, title, v);
    }
    let failed = verdicts.iter().filter(|(_, v)| !v.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        verdicts.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
