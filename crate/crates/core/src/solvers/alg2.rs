use serde::{Deserialize, Serialize};

use super::{Progress, RunReport, RunStatus, TraceRecord};
use crate::bb::{BbConfig, BbMemory, StepBounds};
use crate::common::{joint_norm, zh_average, JointPoint, LineSearchConfig, StopRule, Vector};
use crate::error::{Error, Result};
use crate::linesearch::{search_x, search_y, GradientCap};
use crate::oracle::{ProblemOracle, RegularizedObjective};

const MAX_DOUBLINGS: usize = 60;

/// Optional bound `|grad_y f| <= Gamma` along the run, with
/// `Gamma = gamma0 |grad_y f(z_0)| + gamma1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradientClamp {
    pub gamma0: f64,
    pub gamma1: f64,
}

impl Default for GradientClamp {
    fn default() -> Self {
        Self {
            gamma0: 10.0,
            gamma1: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alg2Params {
    pub beta0: f64,
    /// Required ascent margin in the `beta` test and the `y` search.
    pub c: f64,
    #[serde(default)]
    pub ls: LineSearchConfig,
    #[serde(default)]
    pub bb: BbConfig,
    /// Run the `beta` test every this many iterations; 0 never runs it.
    pub beta_check_period: usize,
    #[serde(default)]
    pub clamp: Option<GradientClamp>,
    pub stop: StopRule,
    #[serde(default)]
    pub record_trace: bool,
}

impl Alg2Params {
    /// Period-20 `beta` checks with `c = 1` and default line-search settings.
    pub fn new(beta0: f64, stop: StopRule) -> Self {
        Self {
            beta0,
            c: 1.0,
            ls: LineSearchConfig::default(),
            bb: BbConfig::default(),
            beta_check_period: 20,
            clamp: None,
            stop,
            record_trace: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::Config(format!(
                "beta0 must be positive, got {}",
                self.beta0
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        if let Some(cl) = self.clamp {
            if !(cl.gamma0 >= 0.0 && cl.gamma1 > 0.0) {
                return Err(Error::Config(
                    "clamp needs gamma0 >= 0 and gamma1 > 0".into(),
                ));
            }
        }
        self.ls.validate()?;
        self.stop.validate()
    }
}

/// Parameter-free alternating GDA with BB initial steps.
///
/// `beta` starts at `beta0` and doubles whenever the periodic test
/// `<grad_y h, grad_y f> > -c |grad_y f|^2` fires, so no modulus is needed.
/// The merit reference is kept as separate averages of `f` and
/// `|grad_y f|^2`, which stay meaningful when `beta` changes.
pub fn run_alg2(
    oracle: &dyn ProblemOracle,
    params: &Alg2Params,
    z0: &JointPoint,
) -> Result<RunReport> {
    params.validate()?;
    let mut reg = RegularizedObjective::new(oracle, params.beta0)?;
    let mut p = Progress::new(oracle, z0, params.record_trace)?;
    p.beta = Some(params.beta0);
    let outcome = iterate(&mut reg, params, &mut p);
    let counters = reg.counters();
    let label = if params.beta_check_period == 0 {
        "GDA-BB"
    } else {
        "GDA-PF"
    };
    p.conclude(oracle, label, counters, outcome)
}

/// Doubles `beta` until the ascent test passes; each test costs one
/// gradient and one second-derivative action.
fn stabilize_beta(
    reg: &mut RegularizedObjective<'_>,
    x: &Vector,
    y: &Vector,
    gy: &Vector,
    c: f64,
) -> Result<()> {
    let gy_sq = gy.norm_squared();
    if gy_sq == 0.0 {
        return Ok(());
    }
    for _ in 0..=MAX_DOUBLINGS {
        let (_, gy_now) = reg.grad_f(x, y)?;
        let (_, s) = reg.y_dir_second(x, y, &gy_now)?;
        let inner = gy_sq + reg.beta() * s.dot(gy);
        if inner <= -c * gy_sq {
            return Ok(());
        }
        reg.set_beta(2.0 * reg.beta());
    }
    Err(Error::Config(format!(
        "beta exceeded {MAX_DOUBLINGS} doublings; is f strongly concave in y?"
    )))
}

fn iterate(
    reg: &mut RegularizedObjective<'_>,
    params: &Alg2Params,
    p: &mut Progress,
) -> Result<RunStatus> {
    let ls = &params.ls;
    let c = params.c;
    let bounds = StepBounds {
        eta_min_y: ls.eta_min_y,
        eta_max_y: ls.eta_max_y,
        eta_min_x: ls.eta_min_x,
        eta_max_x: ls.eta_max_x,
    };
    let mut mem = BbMemory::new();
    let start = reg.evaluate(&p.x, &p.y)?;
    let (mut f_k, mut gy_sq_k) = (start.f, start.grad_y_sq);
    let (mut f_avg, mut g_avg) = (f_k, gy_sq_k);
    let gamma_sq = params
        .clamp
        .map(|cl| (cl.gamma0 * gy_sq_k.sqrt() + cl.gamma1).powi(2));
    loop {
        let (gx, gy) = reg.grad_f(&p.x, &p.y)?;
        let grad_norm = joint_norm(&gx, &gy);
        let stop = p.stop_reason(&params.stop, grad_norm);
        let period = params.beta_check_period;
        if stop.is_none() && period > 0 && p.iters.is_multiple_of(period) {
            stabilize_beta(reg, &p.x, &p.y, &gy, c)?;
            p.beta = Some(reg.beta());
        }
        let beta = reg.beta();
        let h_ref = f_avg + 0.5 * beta * g_avg;
        let h_k = f_k + 0.5 * beta * gy_sq_k;
        let xi = h_ref.max(h_k);
        let mut rec = TraceRecord {
            k: p.iters,
            merit: Some(h_k),
            merit_avg: Some(h_ref),
            grad_norm,
            eta_y: None,
            eta_x: None,
            beta: Some(beta),
        };
        if let Some(status) = stop {
            p.push(rec);
            return Ok(status);
        }
        let gy_sq = gy.norm_squared();
        let eta_y0 = mem.eta_y(&p.y, &gy, params.bb.variant_y, &bounds);
        let cap_y = gamma_sq.map(|b| GradientCap {
            bound_sq: b,
            slope: ls.gamma_y * (c + 1.0) / beta,
            ref_sq: gy_sq,
        });
        let ys = search_y(reg, &p.x, &p.y, &gy, xi, ls.gamma_y * c, eta_y0, ls, cap_y)?;
        let y_next = ys.point;
        let gx_half = reg.grad_x_f(&p.x, &y_next)?;
        let eta_x0 = mem.eta_x(&p.x, &gx_half, params.bb.variant_x, &bounds);
        mem.record(&p.x, &p.y, &gy, &gx_half);
        let cap_x = gamma_sq.map(|b| GradientCap {
            bound_sq: b,
            slope: 0.0,
            ref_sq: 0.0,
        });
        let xs = search_x(
            reg,
            &p.x,
            &y_next,
            &(-&gx_half),
            gx_half.norm_squared(),
            xi,
            ls.gamma_x * c * ys.step * gy_sq,
            ls.gamma_x / 2.0,
            eta_x0,
            ls,
            cap_x,
        )?;
        p.x = xs.point;
        p.y = y_next;
        f_k = xs.accepted_f;
        gy_sq_k = xs.accepted_grad_y_sq;
        let tau = ls.tau.at(p.iters);
        f_avg = zh_average(f_avg, f_k, tau)?;
        g_avg = zh_average(g_avg, gy_sq_k, tau)?;
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
