//! Experiment plumbing: JSON configurations, instance construction, solver
//! dispatch, fixed-column CSV rows, and the verification suite.
//!
//! Everything the command-line tool does is available here so other front
//! ends (and tests) produce byte-identical output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bb::{BbConfig, BbVariant};
use crate::common::{
    standard_normal_vector, JointPoint, LineSearchConfig, SeededRng, StopRule, TauSchedule, Vector,
};
use crate::diagnostics::{
    check_point_lemmas, quadratic_second_order_check, summarize_lemmas, transfer_bounds,
    y_curvature_check, CurvatureCheck, LemmaReport, TransferBound,
};
use crate::error::{Error, Result};
use crate::oracle::{
    estimate_beta0, fd_check, fd_check_phi_grad, FdTarget, PhiOracle, PhiOracleConfig,
    ProblemOracle,
};
use crate::problems::{
    gen_synthetic, parse_libsvm, sparse_random_project, QuadraticNCSC, RegressionData,
    RobustRegression,
};
use crate::solvers::{
    run_alg1, run_alg2, run_gdbb, run_ttgda, ttgda_grid_search, tune_step_pairs, Alg1Params,
    Alg2Params, GdBbParams, GdaDirection, GradientClamp, RunReport, TraceRecord, TtgdaParams,
};

/// Initial steps tried by the tuned line-search GDA, for both `eta_y` and `eta_x`.
pub const ALG1_ETA_GRID: [f64; 7] = [0.005, 0.001, 0.05, 0.01, 0.5, 0.1, 1.0];
pub const TTGDA_ETA_Y_GRID: [f64; 5] = [0.001, 0.005, 0.01, 0.05, 0.1];
pub const TTGDA_THETA_GRID: [f64; 3] = [0.001, 0.01, 0.1];

pub const CSV_HEADER: &str = "alg,iter,f_ev,g_ev,hvp,f,gx_norm,gy_norm,gphi_norm,time_s";
pub const TRACE_HEADER: &str = "k,merit,merit_avg,grad_norm,eta_y,eta_x,beta";

fn default_rho_x() -> f64 {
    0.1
}

fn default_rho_y() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuadraticSpec {
    /// `QuadraticNCSC::random` with the given seed and sizes.
    Random { seed: u64, n: usize, m: usize },
    /// Explicit data; `a` and `b` are row-major lists of rows.
    Explicit {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        mu: f64,
        c: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Quadratic(QuadraticSpec),
    /// Robust regression on Gaussian data.
    Synthetic {
        seed: u64,
        d: usize,
        #[serde(rename = "N")]
        n_points: usize,
        #[serde(default = "default_rho_x")]
        rho_x: f64,
        #[serde(default = "default_rho_y")]
        rho_y: f64,
    },
    /// Robust regression on a LIBSVM file, optionally projected to
    /// `target_dim` features with a seeded sparse sign projection.
    Libsvm {
        path: PathBuf,
        #[serde(default)]
        target_dim: Option<usize>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_rho_x")]
        rho_x: f64,
        #[serde(default = "default_rho_y")]
        rho_y: f64,
    },
    /// Robust regression on a headerless CSV written by `gen-data`.
    Csv {
        path: PathBuf,
        #[serde(default = "default_rho_x")]
        rho_x: f64,
        #[serde(default = "default_rho_y")]
        rho_y: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartSpec {
    Origin,
    Ones,
}

impl ProblemSpec {
    fn data_path(&self) -> Option<&Path> {
        match self {
            ProblemSpec::Libsvm { path, .. } | ProblemSpec::Csv { path, .. } => Some(path),
            _ => None,
        }
    }

    /// Origin, except all-ones for LIBSVM data.
    pub fn default_start(&self) -> StartSpec {
        match self {
            ProblemSpec::Libsvm { .. } => StartSpec::Ones,
            _ => StartSpec::Origin,
        }
    }

    pub fn build(&self) -> Result<Instance> {
        let (oracle, solution): (Box<dyn ProblemOracle>, Option<JointPoint>) = match self {
            ProblemSpec::Quadratic(spec) => {
                let q = match spec {
                    QuadraticSpec::Random { seed, n, m } => {
                        QuadraticNCSC::random(&mut SeededRng::new(*seed), *n, *m)?
                    }
                    QuadraticSpec::Explicit { a, b, mu, c } => QuadraticNCSC::new(
                        rows_to_matrix(a)?,
                        rows_to_matrix(b)?,
                        *mu,
                        Vector::from_vec(c.clone()),
                    )?,
                };
                let sol = q.solution()?;
                (Box::new(q), Some(sol))
            }
            ProblemSpec::Synthetic {
                seed,
                d,
                n_points,
                rho_x,
                rho_y,
            } => {
                let data = gen_synthetic(&mut SeededRng::new(*seed), *d, *n_points)?;
                (Box::new(RobustRegression::new(data, *rho_x, *rho_y)?), None)
            }
            ProblemSpec::Libsvm {
                path,
                target_dim,
                seed,
                rho_x,
                rho_y,
            } => {
                let ds = parse_libsvm(path)?;
                let dense = match target_dim {
                    Some(t) => sparse_random_project(&ds, *t, &mut SeededRng::new(*seed), true)?,
                    None => ds.to_dense(),
                };
                let data = RegressionData::from_matrix(&dense, ds.labels.clone())?;
                (Box::new(RobustRegression::new(data, *rho_x, *rho_y)?), None)
            }
            ProblemSpec::Csv { path, rho_x, rho_y } => {
                let data = RegressionData::read_csv(BufReader::new(File::open(path)?))?;
                (Box::new(RobustRegression::new(data, *rho_x, *rho_y)?), None)
            }
        };
        Ok(Instance {
            oracle,
            solution,
            start: self.default_start(),
        })
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<nalgebra::DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(
            "matrices must be nonempty lists of equal-length rows".into(),
        ));
    }
    Ok(nalgebra::DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

/// A constructed problem with its starting point convention.
pub struct Instance {
    pub oracle: Box<dyn ProblemOracle>,
    /// Closed-form minimax point, when available.
    pub solution: Option<JointPoint>,
    pub start: StartSpec,
}

impl Instance {
    pub fn start_point(&self, start: StartSpec) -> Result<JointPoint> {
        let (n, m) = self.oracle.dims();
        let fill = match start {
            StartSpec::Origin => 0.0,
            StartSpec::Ones => 1.0,
        };
        JointPoint::new(Vector::from_element(n, fill), Vector::from_element(m, fill))
    }
}

/// Initial `beta` for parameter-free GDA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Beta0Spec {
    Value(f64),
    /// `"estimate"`: secant estimate of `1/mu` at the starting point.
    Named(Beta0Rule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Beta0Rule {
    Estimate,
}

impl Default for Beta0Spec {
    fn default() -> Self {
        Beta0Spec::Named(Beta0Rule::Estimate)
    }
}

fn default_c() -> f64 {
    1.0
}

fn default_period() -> usize {
    20
}

fn monotone_ls() -> LineSearchConfig {
    LineSearchConfig {
        tau: TauSchedule::Constant(1.0),
        ..Default::default()
    }
}

fn alg1_grid() -> Vec<f64> {
    ALG1_ETA_GRID.to_vec()
}

fn ttgda_eta_y_grid() -> Vec<f64> {
    TTGDA_ETA_Y_GRID.to_vec()
}

fn ttgda_theta_grid() -> Vec<f64> {
    TTGDA_THETA_GRID.to_vec()
}

fn gdbb_defaults() -> GdBbParams {
    GdBbParams::new(1.0, StopRule::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "kebab-case")]
pub enum SolverSpec {
    /// Line-search GDA with a known modulus; the initial steps are tuned
    /// over `eta_grid x eta_grid` and the best run is reported.
    Alg1Gda {
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        mu: Option<f64>,
        #[serde(default = "alg1_grid")]
        eta_grid: Vec<f64>,
        #[serde(default = "monotone_ls")]
        ls: LineSearchConfig,
    },
    /// Parameter-free GDA with the `beta` test disabled; `beta0` defaults to `2/mu`.
    Alg2Bb {
        #[serde(default)]
        beta0: Option<f64>,
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default)]
        ls: LineSearchConfig,
        #[serde(default)]
        bb: BbConfig,
        #[serde(default)]
        clamp: Option<GradientClamp>,
    },
    /// Parameter-free GDA with periodic `beta` tests.
    Alg2Pf {
        #[serde(default)]
        beta0: Beta0Spec,
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_period")]
        period: usize,
        #[serde(default)]
        ls: LineSearchConfig,
        #[serde(default)]
        bb: BbConfig,
        #[serde(default)]
        clamp: Option<GradientClamp>,
    },
    Ttgda {
        eta_x: f64,
        eta_y: f64,
    },
    TtgdaGrid {
        #[serde(default = "ttgda_eta_y_grid")]
        eta_y_set: Vec<f64>,
        #[serde(default = "ttgda_theta_grid")]
        theta_set: Vec<f64>,
    },
    /// BB gradient descent on the merit; `beta` defaults to `2/mu`.
    Gdbb {
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default = "gdbb_gamma")]
        gamma: f64,
        #[serde(default = "gdbb_alpha")]
        alpha: f64,
        #[serde(default = "gdbb_tau")]
        tau: TauSchedule,
        #[serde(default)]
        variant: BbVariant,
    },
}

fn gdbb_gamma() -> f64 {
    gdbb_defaults().gamma
}

fn gdbb_alpha() -> f64 {
    gdbb_defaults().alpha
}

fn gdbb_tau() -> TauSchedule {
    gdbb_defaults().tau
}

impl SolverSpec {
    /// Row label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            SolverSpec::Alg1Gda { .. } => "GDA-LS",
            SolverSpec::Alg2Bb { .. } => "GDA-BB",
            SolverSpec::Alg2Pf { period: 0, .. } => "GDA-BB",
            SolverSpec::Alg2Pf { .. } => "GDA-PF",
            SolverSpec::Ttgda { .. } | SolverSpec::TtgdaGrid { .. } => "TTGDA",
            SolverSpec::Gdbb { .. } => "GD-BB",
        }
    }

    /// Runs the solver. Failures during iteration come back as a report
    /// status; only invalid configurations are errors.
    pub fn run(
        &self,
        oracle: &dyn ProblemOracle,
        stop: &StopRule,
        z0: &JointPoint,
        record_trace: bool,
    ) -> Result<RunReport> {
        let mu_or = |explicit: Option<f64>, what: &str| {
            explicit.or_else(|| oracle.mu_hint()).ok_or_else(|| {
                Error::Config(format!(
                    "{what} needs the concavity modulus; set mu or use alg2-pf, which does not"
                ))
            })
        };
        match self {
            SolverSpec::Alg1Gda {
                beta,
                mu,
                eta_grid,
                ls,
            } => {
                let mu = mu_or(*mu, "alg1-gda")?;
                let beta = beta.unwrap_or(2.0 / mu);
                if eta_grid.is_empty() {
                    return Err(Error::Config("alg1-gda needs a nonempty eta_grid".into()));
                }
                let pairs: Vec<(f64, f64)> = eta_grid
                    .iter()
                    .flat_map(|&ey| eta_grid.iter().map(move |&ex| (ey, ex)))
                    .collect();
                let run = |(eta_y, eta_x): (f64, f64), stop: &StopRule| {
                    let params = Alg1Params {
                        beta,
                        mu,
                        eta_y,
                        eta_x,
                        ls: ls.clone(),
                        stop: stop.clone(),
                        record_trace,
                    };
                    run_alg1(oracle, &params, &mut GdaDirection, z0)
                };
                match tune_step_pairs(&pairs, stop, |eta_y, eta_x, stop| run((eta_y, eta_x), stop))
                {
                    Ok(grid) => Ok(grid
                        .runs
                        .into_iter()
                        .nth(grid.best)
                        .expect("best index")
                        .report),
                    // every combination diverged: surface the first as the row
                    Err(Error::Numeric(_)) => run(pairs[0], stop),
                    Err(e) => Err(e),
                }
            }
            SolverSpec::Alg2Bb {
                beta0,
                c,
                ls,
                bb,
                clamp,
            } => {
                let beta0 = match beta0 {
                    Some(b) => *b,
                    None => 2.0 / mu_or(None, "alg2-bb without beta0")?,
                };
                let params = Alg2Params {
                    beta0,
                    c: *c,
                    ls: ls.clone(),
                    bb: *bb,
                    beta_check_period: 0,
                    clamp: *clamp,
                    stop: stop.clone(),
                    record_trace,
                };
                run_alg2(oracle, &params, z0)
            }
            SolverSpec::Alg2Pf {
                beta0,
                c,
                period,
                ls,
                bb,
                clamp,
            } => {
                let beta0 = match beta0 {
                    Beta0Spec::Value(b) => *b,
                    Beta0Spec::Named(Beta0Rule::Estimate) => {
                        let y_other = z0.y().add_scalar(1.0);
                        estimate_beta0(oracle, z0.x(), z0.y(), &y_other)?
                    }
                };
                let params = Alg2Params {
                    beta0,
                    c: *c,
                    ls: ls.clone(),
                    bb: *bb,
                    beta_check_period: *period,
                    clamp: *clamp,
                    stop: stop.clone(),
                    record_trace,
                };
                run_alg2(oracle, &params, z0)
            }
            SolverSpec::Ttgda { eta_x, eta_y } => {
                let params = TtgdaParams {
                    eta_x: *eta_x,
                    eta_y: *eta_y,
                    stop: stop.clone(),
                    record_trace,
                };
                run_ttgda(oracle, &params, z0)
            }
            SolverSpec::TtgdaGrid {
                eta_y_set,
                theta_set,
            } => {
                match ttgda_grid_search(oracle, eta_y_set, theta_set, stop, z0, record_trace) {
                    Ok(grid) => Ok(grid
                        .runs
                        .into_iter()
                        .nth(grid.best)
                        .expect("best index")
                        .report),
                    // every combination diverged: surface the first as the row
                    Err(Error::Numeric(_)) => {
                        let params = TtgdaParams {
                            eta_x: theta_set[0] * eta_y_set[0],
                            eta_y: eta_y_set[0],
                            stop: stop.clone(),
                            record_trace,
                        };
                        run_ttgda(oracle, &params, z0)
                    }
                    Err(e) => Err(e),
                }
            }
            SolverSpec::Gdbb {
                beta,
                gamma,
                alpha,
                tau,
                variant,
            } => {
                let beta = match beta {
                    Some(b) => *b,
                    None => 2.0 / mu_or(None, "gdbb without beta")?,
                };
                let mut params = GdBbParams::new(beta, stop.clone());
                params.gamma = *gamma;
                params.alpha = *alpha;
                params.tau = tau.clone();
                params.variant = *variant;
                params.record_trace = record_trace;
                run_gdbb(oracle, &params, z0)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Results CSV; printed to stdout when absent.
    pub csv: Option<PathBuf>,
    /// Per-iteration trace CSV of a single run.
    pub trace: Option<PathBuf>,
    /// Directory for per-solver traces of a bench, named `<row>_<label>.csv`.
    pub trace_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    /// The solver of a single run.
    #[serde(default)]
    pub solver: Option<SolverSpec>,
    /// The solvers of a bench, reported in this order.
    #[serde(default)]
    pub solvers: Vec<SolverSpec>,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub start: Option<StartSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    /// Accuracy of the final `|grad Phi|` evaluation.
    #[serde(default)]
    pub phi: PhiOracleConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::from_json(&text)
    }

    /// The run solver and bench solvers, in order.
    pub fn solver_list(&self) -> Vec<&SolverSpec> {
        self.solver.iter().chain(self.solvers.iter()).collect()
    }

    fn validate(&self) -> Result<()> {
        self.stop.validate()?;
        if let Some(path) = self.problem.data_path() {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "data file {} does not exist",
                    path.display()
                )));
            }
        }
        if self.solver_list().is_empty() {
            return Err(Error::Config("config names no solver".into()));
        }
        Ok(())
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub report: RunReport,
    /// `y`-curvature at the final iterate, when the problem declares a modulus.
    pub curvature: Option<CurvatureCheck>,
}

impl ResultRow {
    /// Comma-separated row matching [`CSV_HEADER`], floats in `{:.6e}`.
    pub fn csv_line(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            r.algorithm,
            r.iters,
            r.f_evals,
            r.g_evals,
            r.hvp_evals,
            r.final_f,
            r.final_grad_x_norm,
            r.final_grad_y_norm,
            r.final_phi_grad_norm.unwrap_or(f64::NAN),
            r.wall_time
        )
    }

    pub fn exit_code(&self) -> i32 {
        self.report.status.exit_code()
    }
}

/// Runs one solver end to end and attaches the final `|grad Phi|`.
pub fn execute(
    instance: &Instance,
    spec: &SolverSpec,
    stop: &StopRule,
    z0: &JointPoint,
    phi: &PhiOracleConfig,
    record_trace: bool,
) -> Result<ResultRow> {
    let mut report = spec.run(instance.oracle.as_ref(), stop, z0, record_trace)?;
    if report
        .attach_phi_grad(instance.oracle.as_ref(), phi)
        .is_err()
    {
        report.final_phi_grad_norm = None;
    }
    let oracle = instance.oracle.as_ref();
    let curvature = match (oracle.mu_hint(), report.final_point()) {
        (Some(mu), Ok(z)) => y_curvature_check(oracle, z.x(), z.y(), mu).ok(),
        _ => None,
    };
    Ok(ResultRow { report, curvature })
}

/// All rows of a config, computed in parallel and returned in config order.
pub fn run_experiment(cfg: &ExperimentConfig, record_trace: bool) -> Result<Vec<ResultRow>> {
    let instance = cfg.problem.build()?;
    let z0 = instance.start_point(cfg.start.unwrap_or(instance.start))?;
    cfg.solver_list()
        .par_iter()
        .map(|spec| execute(&instance, spec, &cfg.stop, &z0, &cfg.phi, record_trace))
        .collect()
}

pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.csv_line())?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|a| format!("{a:.6e}")).unwrap_or_default()
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceRecord]) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{TRACE_HEADER}")?;
    for t in trace {
        writeln!(
            w,
            "{},{},{},{:.6e},{},{},{}",
            t.k,
            opt(t.merit),
            opt(t.merit_avg),
            t.grad_norm,
            opt(t.eta_y),
            opt(t.eta_x),
            opt(t.beta)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a file only after its full content is ready, so failures leave
/// nothing behind.
pub fn write_file_atomically(path: &Path, content: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::Io(e)
    })
}

/// Worst status over the rows: 0 if all converged, else 2 or 3.
pub fn combined_exit_code(rows: &[ResultRow]) -> i32 {
    rows.iter().map(ResultRow::exit_code).max().unwrap_or(0)
}

/// Writes a headerless synthetic regression dataset; identical per seed.
pub fn gen_data<W: Write>(out: W, seed: u64, d: usize, n_points: usize) -> Result<()> {
    let data = gen_synthetic(&mut SeededRng::new(seed), d, n_points)?;
    data.write_csv(out)
}

/// Sizes and sample counts of the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub quad_n: usize,
    pub quad_m: usize,
    pub robust_d: usize,
    pub robust_points: usize,
    pub lemma_samples: usize,
    pub fd_samples: usize,
    pub schur_instances: usize,
    /// Test-only fault injection: perturbs `grad_x f` of both problems.
    pub corrupt_gradient: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            quad_n: 4,
            quad_m: 3,
            robust_d: 3,
            robust_points: 5,
            lemma_samples: 1000,
            fd_samples: 20,
            schur_instances: 50,
            corrupt_gradient: false,
        }
    }
}

/// A scalar check against a limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl CheckRecord {
    fn at_most(name: String, value: f64, limit: f64) -> Self {
        Self {
            passed: value <= limit,
            name,
            value,
            limit,
        }
    }
}

/// Worst case of one inequality on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub problem: String,
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub samples: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub checks: Vec<CheckRecord>,
    pub inequalities: Vec<InequalityRow>,
    pub transfer: Vec<TransferBound>,
    pub passed: bool,
}

impl VerifyReport {
    /// Names of failed checks and violated inequalities.
    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.clone())
            .chain(
                self.inequalities
                    .iter()
                    .filter(|r| r.violations > 0)
                    .map(|r| format!("{}/{}", r.problem, r.name)),
            )
            .collect()
    }
}

/// Wraps an oracle and shifts `grad_x f` by a constant offset.
pub struct CorruptedGradient<O> {
    pub inner: O,
    pub offset: f64,
}

impl<O: ProblemOracle> ProblemOracle for CorruptedGradient<O> {
    fn dims(&self) -> (usize, usize) {
        self.inner.dims()
    }
    fn value(&self, x: &Vector, y: &Vector) -> f64 {
        self.inner.value(x, y)
    }
    fn grad_x(&self, x: &Vector, y: &Vector) -> Vector {
        self.inner.grad_x(x, y).add_scalar(self.offset)
    }
    fn grad_y(&self, x: &Vector, y: &Vector) -> Vector {
        self.inner.grad_y(x, y)
    }
    fn grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector) {
        let (gx, gy) = self.inner.grad(x, y);
        (gx.add_scalar(self.offset), gy)
    }
    fn value_and_grad_y(&self, x: &Vector, y: &Vector) -> (f64, Vector) {
        self.inner.value_and_grad_y(x, y)
    }
    fn y_dir_second(&self, x: &Vector, y: &Vector, v: &Vector) -> (Vector, Vector) {
        self.inner.y_dir_second(x, y, v)
    }
    fn mu_hint(&self) -> Option<f64> {
        self.inner.mu_hint()
    }
}

/// Uniform draw from the ball of the given radius.
fn ball_point(rng: &mut SeededRng, dim: usize, radius: f64) -> Result<Vector> {
    let g = standard_normal_vector(rng, dim)?;
    let norm = g.norm();
    let r = radius * rng.uniform().powf(1.0 / dim as f64);
    Ok(if norm > 0.0 { g * (r / norm) } else { g })
}

struct VerifyProblem<'a> {
    name: &'static str,
    oracle: &'a dyn ProblemOracle,
    mu: f64,
    /// Radius for `x` samples; `None` samples `3 N(0, I)`.
    x_radius: Option<f64>,
}

impl VerifyProblem<'_> {
    fn sample(&self, rng: &mut SeededRng) -> Result<(Vector, Vector)> {
        let (n, m) = self.oracle.dims();
        let x = match self.x_radius {
            Some(r) => ball_point(rng, n, r)?,
            None => 3.0 * standard_normal_vector(rng, n)?,
        };
        let y = 3.0 * standard_normal_vector(rng, m)?;
        Ok((x, y))
    }
}

/// Finite-difference, lemma, Schur and transfer-bound checks on a random
/// quadratic and a small robust-regression instance.
pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut rng = SeededRng::new(cfg.seed);
    let quad = QuadraticNCSC::random(&mut rng, cfg.quad_n, cfg.quad_m)?;
    let data = gen_synthetic(&mut rng, cfg.robust_d, cfg.robust_points)?;
    let robust = RobustRegression::new(data, default_rho_x(), default_rho_y())?;
    let offset = if cfg.corrupt_gradient { 1e-2 } else { 0.0 };
    let quad_o = CorruptedGradient {
        inner: &quad,
        offset,
    };
    let robust_o = CorruptedGradient {
        inner: &robust,
        offset,
    };
    let problems = [
        VerifyProblem {
            name: "quadratic",
            oracle: &quad_o,
            mu: quad.mu(),
            x_radius: None,
        },
        VerifyProblem {
            name: "robust_regression",
            oracle: &robust_o,
            mu: robust.mu(),
            x_radius: Some(1.0),
        },
    ];
    let phi_cfg = PhiOracleConfig::default();
    let mut checks = Vec::new();
    let mut inequalities = Vec::new();
    for p in &problems {
        let beta = 2.0 / p.mu;
        let mut worst = [0.0_f64; 4];
        for _ in 0..cfg.fd_samples {
            let (x, y) = p.sample(&mut rng)?;
            let v = standard_normal_vector(&mut rng, y.len())?;
            let z = JointPoint::new(x.clone(), y)?;
            worst[0] = worst[0].max(fd_check(p.oracle, &z, &FdTarget::GradF));
            worst[1] = worst[1].max(fd_check(p.oracle, &z, &FdTarget::GradH { beta }));
            worst[2] = worst[2].max(fd_check(p.oracle, &z, &FdTarget::YDirSecond { v }));
            worst[3] = worst[3].max(fd_check_phi_grad(p.oracle, &x, &phi_cfg)?);
        }
        for (i, (name, limit)) in [
            ("grad_f", 1e-6),
            ("grad_h", 1e-6),
            ("y_dir_second", 1e-5),
            ("phi_grad", 1e-5),
        ]
        .into_iter()
        .enumerate()
        {
            checks.push(CheckRecord::at_most(
                format!("{}/{name}", p.name),
                worst[i],
                limit,
            ));
        }
        let mut phi = PhiOracle::new(phi_cfg.clone())?;
        let mut reports: Vec<LemmaReport> = Vec::with_capacity(cfg.lemma_samples);
        for _ in 0..cfg.lemma_samples {
            let (x, y) = p.sample(&mut rng)?;
            reports.push(check_point_lemmas(
                p.oracle,
                p.mu,
                beta,
                &x,
                &y,
                None,
                Some(&mut phi),
            )?);
        }
        inequalities.extend(
            summarize_lemmas(&reports)
                .into_iter()
                .map(|s| InequalityRow {
                    problem: p.name.to_string(),
                    name: s.name,
                    lhs: s.lhs,
                    rhs: s.rhs,
                    slack: s.slack,
                    samples: s.samples,
                    violations: s.violations,
                }),
        );
    }
    let mut worst_schur = 0.0_f64;
    for _ in 0..cfg.schur_instances {
        let q = QuadraticNCSC::random(&mut rng, cfg.quad_n, cfg.quad_m)?;
        let err = quadratic_second_order_check(&q, 2.0 / q.mu())?;
        worst_schur = worst_schur.max(err / (1.0 + q.a().norm()));
    }
    checks.push(CheckRecord::at_most(
        "quadratic/schur_identity".into(),
        worst_schur,
        1e-10,
    ));
    let transfer = vec![
        transfer_bounds(0.1, 2.0, 1.0, 1.0)?,
        transfer_bounds(0.0, 2.0, 1.0, 1.0)?,
    ];
    let spot = (transfer[0].bound_min_to_rm - 0.3).abs()
        + (transfer[0].bound_rm_to_min - 0.1 * 10f64.sqrt()).abs();
    checks.push(CheckRecord::at_most(
        "transfer_bounds/spot_values".into(),
        spot,
        1e-12,
    ));
    let mut report = VerifyReport {
        config: cfg.clone(),
        checks,
        inequalities,
        transfer,
        passed: false,
    };
    report.passed = report.failures().is_empty();
    Ok(report)
}
