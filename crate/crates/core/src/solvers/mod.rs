//! Solver drivers: the generic line-search framework with a known modulus,
//! parameter-free GDA with BB steps, and the two baselines (fixed-step
//! two-timescale GDA and BB gradient descent on the merit).

mod alg1;
mod alg2;
mod gdbb;
mod ttgda;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::common::{all_finite, joint_norm, EvalCounters, JointPoint, StopRule, Vector};
use crate::error::{Error, Result};
use crate::oracle::{PhiOracle, PhiOracleConfig, ProblemOracle};

pub use alg1::{run_alg1, Alg1Params, DirectionProvider, GdaDirection, ScaledGradientDirection};
pub use alg2::{run_alg2, Alg2Params, GradientClamp};
pub use gdbb::{run_gdbb, GdBbParams};
pub use ttgda::{run_ttgda, ttgda_grid_search, tune_step_pairs, GridResult, GridRun, TtgdaParams};

/// Iterates with `|z| > DIVERGENCE_NORM` abort the run.
pub const DIVERGENCE_NORM: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    TimeLimit,
    Diverged,
    LineSearchFailed,
    NumericFailure,
}

impl RunStatus {
    /// 0 on convergence, 2 on budget exhaustion, 3 on divergence or failure.
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Converged => 0,
            RunStatus::MaxIterations | RunStatus::TimeLimit => 2,
            RunStatus::Diverged | RunStatus::LineSearchFailed | RunStatus::NumericFailure => 3,
        }
    }

    pub fn is_converged(self) -> bool {
        self == RunStatus::Converged
    }
}

/// State at iterate `k` and the steps taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    /// `h_beta(z_k)` under the current `beta`.
    pub merit: Option<f64>,
    /// Nonmonotone reference value `H_k`.
    pub merit_avg: Option<f64>,
    /// `|grad f(z_k)|`
    pub grad_norm: f64,
    pub eta_y: Option<f64>,
    pub eta_x: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub status: RunStatus,
    pub message: Option<String>,
    pub iters: usize,
    pub f_evals: u64,
    pub g_evals: u64,
    pub hvp_evals: u64,
    /// Seconds spent in the solver loop.
    pub wall_time: f64,
    pub final_f: f64,
    pub final_grad_x_norm: f64,
    pub final_grad_y_norm: f64,
    /// Filled by [`RunReport::attach_phi_grad`]; needs an inner maximization.
    pub final_phi_grad_norm: Option<f64>,
    pub phi_time: Option<f64>,
    pub min_eta_y: Option<f64>,
    pub min_eta_x: Option<f64>,
    pub final_beta: Option<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRecord>,
}

impl RunReport {
    pub fn final_point(&self) -> Result<JointPoint> {
        JointPoint::from_slices(&self.x, &self.y)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.final_grad_x_norm.hypot(self.final_grad_y_norm)
    }

    pub fn counters(&self) -> EvalCounters {
        EvalCounters {
            f_evals: self.f_evals,
            g_evals: self.g_evals,
            hvp_evals: self.hvp_evals,
            wall_time: self.wall_time,
        }
    }

    /// Computes `|grad Phi|` at the final iterate (timed separately).
    pub fn attach_phi_grad(
        &mut self,
        oracle: &dyn ProblemOracle,
        cfg: &PhiOracleConfig,
    ) -> Result<f64> {
        let start = Instant::now();
        let x = Vector::from_column_slice(&self.x);
        if !all_finite(&x) {
            return Err(Error::non_finite("final iterate", &self.x, &self.y));
        }
        let mut phi = PhiOracle::new(cfg.clone())?;
        let g = phi.grad(oracle, &x)?.norm();
        self.final_phi_grad_norm = Some(g);
        self.phi_time = Some(start.elapsed().as_secs_f64());
        Ok(g)
    }
}

/// Picks the converged run with the fewest iterations, falling back to the
/// non-diverged run with the smallest final gradient. Ties keep the earlier run.
pub fn select_best(reports: &[RunReport]) -> Option<usize> {
    let converged = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.status.is_converged())
        .min_by_key(|(_, r)| r.iters)
        .map(|(i, _)| i);
    converged.or_else(|| {
        reports
            .iter()
            .enumerate()
            .filter(|(_, r)| matches!(r.status, RunStatus::MaxIterations | RunStatus::TimeLimit))
            .min_by(|(_, a), (_, b)| a.final_grad_norm().total_cmp(&b.final_grad_norm()))
            .map(|(i, _)| i)
    })
}

/// Mutable bookkeeping shared by all drivers.
pub(crate) struct Progress {
    start: Instant,
    pub x: Vector,
    pub y: Vector,
    pub iters: usize,
    pub beta: Option<f64>,
    min_eta_y: Option<f64>,
    min_eta_x: Option<f64>,
    record_trace: bool,
    trace: Vec<TraceRecord>,
}

impl Progress {
    pub fn new(oracle: &dyn ProblemOracle, z0: &JointPoint, record_trace: bool) -> Result<Self> {
        if oracle.dims() != z0.dims() {
            return Err(Error::Argument(format!(
                "initial point has dims {:?}, oracle expects {:?}",
                z0.dims(),
                oracle.dims()
            )));
        }
        Ok(Self {
            start: Instant::now(),
            x: z0.x().clone(),
            y: z0.y().clone(),
            iters: 0,
            beta: None,
            min_eta_y: None,
            min_eta_x: None,
            record_trace,
            trace: Vec::new(),
        })
    }

    /// Termination test at the top of iteration `k`.
    pub fn stop_reason(&self, stop: &StopRule, grad_norm: f64) -> Option<RunStatus> {
        if grad_norm <= stop.grad_tol {
            Some(RunStatus::Converged)
        } else if self.iters >= stop.max_iters {
            Some(RunStatus::MaxIterations)
        } else if stop
            .max_wall_time
            .is_some_and(|t| self.start.elapsed().as_secs_f64() >= t)
        {
            Some(RunStatus::TimeLimit)
        } else {
            None
        }
    }

    pub fn diverged(&self) -> bool {
        !(all_finite(&self.x) && all_finite(&self.y))
            || joint_norm(&self.x, &self.y) > DIVERGENCE_NORM
    }

    pub fn note_steps(&mut self, eta_y: f64, eta_x: f64) {
        self.min_eta_y = Some(self.min_eta_y.map_or(eta_y, |m| m.min(eta_y)));
        self.min_eta_x = Some(self.min_eta_x.map_or(eta_x, |m| m.min(eta_x)));
    }

    pub fn push(&mut self, rec: TraceRecord) {
        if self.record_trace {
            self.trace.push(rec);
        }
    }

    /// Converts the loop outcome into a report. Configuration and argument
    /// errors propagate; runtime failures become a status.
    pub fn conclude(
        self,
        oracle: &dyn ProblemOracle,
        algorithm: &str,
        counters: EvalCounters,
        outcome: Result<RunStatus>,
    ) -> Result<RunReport> {
        let wall_time = self.start.elapsed().as_secs_f64();
        let (status, message) = match outcome {
            Ok(s) => (s, None),
            Err(e @ Error::LineSearch { .. }) => (RunStatus::LineSearchFailed, Some(e.to_string())),
            Err(e @ (Error::NonFinite { .. } | Error::Numeric(_))) => {
                (RunStatus::NumericFailure, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        let (final_f, gxn, gyn) = if all_finite(&self.x) && all_finite(&self.y) {
            let (gx, gy) = oracle.grad(&self.x, &self.y);
            (oracle.value(&self.x, &self.y), gx.norm(), gy.norm())
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        Ok(RunReport {
            algorithm: algorithm.to_string(),
            status,
            message,
            iters: self.iters,
            f_evals: counters.f_evals,
            g_evals: counters.g_evals,
            hvp_evals: counters.hvp_evals,
            wall_time,
            final_f,
            final_grad_x_norm: gxn,
            final_grad_y_norm: gyn,
            final_phi_grad_norm: None,
            phi_time: None,
            min_eta_y: self.min_eta_y,
            min_eta_x: self.min_eta_x,
            final_beta: self.beta,
            x: self.x.as_slice().to_vec(),
            y: self.y.as_slice().to_vec(),
            trace: self.trace,
        })
    }
}
