use serde::{Deserialize, Serialize};

use super::{Progress, RunReport, RunStatus, TraceRecord};
use crate::common::{joint_norm, zh_average, JointPoint, LineSearchConfig, StopRule, Vector};
use crate::error::{Error, Result};
use crate::linesearch::{search_x, search_y};
use crate::oracle::{ProblemOracle, RegularizedObjective};

/// Supplies the `x` search direction at `(x_k, y_{k+1})`.
///
/// Every emitted `d` must satisfy `|d| <= a1 |g|` and `<d, g> <= -a2 |g|^2`
/// for `g = grad_x f(x_k, y_{k+1})` and the constants `(a1, a2)`.
pub trait DirectionProvider {
    fn direction(&mut self, x: &Vector, y_next: &Vector, grad_x_f: &Vector) -> Vector;

    fn constants(&self) -> (f64, f64);
}

/// `d = -grad_x f`, with `a1 = a2 = 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GdaDirection;

impl DirectionProvider for GdaDirection {
    fn direction(&mut self, _x: &Vector, _y_next: &Vector, grad_x_f: &Vector) -> Vector {
        -grad_x_f
    }

    fn constants(&self) -> (f64, f64) {
        (1.0, 1.0)
    }
}

/// `d = -D grad_x f` for a fixed positive diagonal `D`.
#[derive(Debug, Clone)]
pub struct ScaledGradientDirection {
    scale: Vector,
}

impl ScaledGradientDirection {
    pub fn new(scale: Vector) -> Result<Self> {
        if scale.is_empty() || scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config(
                "diagonal scaling must be positive and finite".into(),
            ));
        }
        Ok(Self { scale })
    }
}

impl DirectionProvider for ScaledGradientDirection {
    fn direction(&mut self, _x: &Vector, _y_next: &Vector, grad_x_f: &Vector) -> Vector {
        -self.scale.component_mul(grad_x_f)
    }

    fn constants(&self) -> (f64, f64) {
        (self.scale.max(), self.scale.min())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alg1Params {
    pub beta: f64,
    pub mu: f64,
    /// Initial trial steps of the two searches, reused every iteration.
    pub eta_y: f64,
    pub eta_x: f64,
    pub ls: LineSearchConfig,
    pub stop: StopRule,
    #[serde(default)]
    pub record_trace: bool,
}

fn check_direction(d: &Vector, g: &Vector, (a1, a2): (f64, f64)) -> Result<()> {
    let g_norm = g.norm();
    let slack = 1e-12 * (1.0 + g_norm * g_norm);
    if d.norm() > a1 * g_norm * (1.0 + 1e-12) + 1e-300 || d.dot(g) > -a2 * g_norm * g_norm + slack {
        return Err(Error::Config(format!(
            "search direction violates the gradient-related bounds with a1 = {a1}, a2 = {a2}"
        )));
    }
    Ok(())
}

/// The line-search framework with a known concavity modulus.
///
/// Each iteration backtracks an ascent step in `y` against the running
/// reference `H_k`, then a descent step in `x` from `(x_k, y_{k+1})`, and
/// finally mixes the new merit into `H_{k+1}`.
pub fn run_alg1(
    oracle: &dyn ProblemOracle,
    params: &Alg1Params,
    dir: &mut dyn DirectionProvider,
    z0: &JointPoint,
) -> Result<RunReport> {
    params.ls.validate()?;
    params.stop.validate()?;
    if !(params.eta_x > 0.0 && params.eta_y > 0.0) {
        return Err(Error::Config("initial steps must be positive".into()));
    }
    let (a1, a2) = dir.constants();
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(Error::Config(format!(
            "direction constants must be positive, got ({a1}, {a2})"
        )));
    }
    let mut reg = RegularizedObjective::with_modulus(oracle, params.beta, params.mu)?;
    let mut p = Progress::new(oracle, z0, params.record_trace)?;
    p.beta = Some(params.beta);
    let outcome = iterate(&mut reg, params, dir, &mut p);
    let counters = reg.counters();
    p.conclude(oracle, "GDA-LS", counters, outcome)
}

fn iterate(
    reg: &mut RegularizedObjective<'_>,
    params: &Alg1Params,
    dir: &mut dyn DirectionProvider,
    p: &mut Progress,
) -> Result<RunStatus> {
    let ls = &params.ls;
    let b1 = params.beta * params.mu - 1.0;
    let b2 = dir.constants().1 / 2.0;
    let mut h = reg.evaluate(&p.x, &p.y)?.h;
    let mut merit_avg = h;
    loop {
        let (gx, gy) = reg.grad_f(&p.x, &p.y)?;
        let grad_norm = joint_norm(&gx, &gy);
        let mut rec = TraceRecord {
            k: p.iters,
            merit: Some(h),
            merit_avg: Some(merit_avg),
            grad_norm,
            eta_y: None,
            eta_x: None,
            beta: Some(params.beta),
        };
        if let Some(status) = p.stop_reason(&params.stop, grad_norm) {
            p.push(rec);
            return Ok(status);
        }
        let gy_sq = gy.norm_squared();
        let ys = search_y(
            reg,
            &p.x,
            &p.y,
            &gy,
            merit_avg,
            ls.gamma_y * b1,
            params.eta_y,
            ls,
            None,
        )?;
        let y_next = ys.point;
        let gx_half = reg.grad_x_f(&p.x, &y_next)?;
        let d = dir.direction(&p.x, &y_next, &gx_half);
        check_direction(&d, &gx_half, dir.constants())?;
        let y_term = ls.gamma_x * b1 * ys.step * gy_sq;
        let xs = search_x(
            reg,
            &p.x,
            &y_next,
            &d,
            gx_half.norm_squared(),
            merit_avg,
            y_term,
            ls.gamma_x * b2,
            params.eta_x,
            ls,
            None,
        )?;
        p.x = xs.point;
        p.y = y_next;
        h = xs.accepted_value;
        merit_avg = zh_average(merit_avg, h, ls.tau.at(p.iters))?;
        p.note_steps(ys.step, xs.step);
        rec.eta_y = Some(ys.step);
        rec.eta_x = Some(xs.step);
        p.push(rec);
        p.iters += 1;
        if p.diverged() {
            return Ok(RunStatus::Diverged);
        }
    }
}
