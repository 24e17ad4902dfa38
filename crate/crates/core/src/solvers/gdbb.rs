use serde::{Deserialize, Serialize};

use super::{Progress, RunReport, RunStatus, TraceRecord};
use crate::bb::{bb_step, BbVariant};
use crate::common::{
    joint_norm, zh_average, JointPoint, LineSearchConfig, StopRule, TauSchedule, Vector,
};
use crate::error::{Error, Result};
use crate::linesearch::search_joint;
use crate::oracle::{ProblemOracle, RegularizedObjective};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdBbParams {
    pub beta: f64,
    /// Checked against `beta` when known; falls back to the oracle's hint.
    #[serde(default)]
    pub mu: Option<f64>,
    pub gamma: f64,
    pub alpha: f64,
    pub tau: TauSchedule,
    pub eta_min: f64,
    pub eta_max: f64,
    pub max_backtracks: usize,
    #[serde(default)]
    pub variant: BbVariant,
    pub stop: StopRule,
    #[serde(default)]
    pub record_trace: bool,
}

impl GdBbParams {
    pub fn new(beta: f64, stop: StopRule) -> Self {
        Self {
            beta,
            mu: None,
            gamma: 1e-4,
            alpha: 0.5,
            tau: TauSchedule::Constant(1e-3),
            eta_min: 1e-10,
            eta_max: 1e6,
            max_backtracks: 60,
            variant: BbVariant::Bb1,
            stop,
            record_trace: false,
        }
    }

    fn search_config(&self) -> Result<LineSearchConfig> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.eta_min > 0.0 && self.eta_min <= self.eta_max && self.eta_max.is_finite()) {
            return Err(Error::Config("need 0 < eta_min <= eta_max < inf".into()));
        }
        let cfg = LineSearchConfig {
            alpha: self.alpha,
            tau: self.tau.clone(),
            max_backtracks: self.max_backtracks,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Gradient descent on the merit `h_beta` over the joint variable, with BB
/// trial steps and a nonmonotone Armijo search. Every gradient needs a
/// second-derivative action, unlike the alternating schemes.
pub fn run_gdbb(
    oracle: &dyn ProblemOracle,
    params: &GdBbParams,
    z0: &JointPoint,
) -> Result<RunReport> {
    let cfg = params.search_config()?;
    params.stop.validate()?;
    let mut reg = match params.mu.or_else(|| oracle.mu_hint()) {
        Some(mu) => RegularizedObjective::with_modulus(oracle, params.beta, mu)?,
        None => RegularizedObjective::new(oracle, params.beta)?,
    };
    let mut p = Progress::new(oracle, z0, params.record_trace)?;
    p.beta = Some(params.beta);
    let outcome = iterate(&mut reg, params, &cfg, &mut p);
    let counters = reg.counters();
    p.conclude(oracle, "GD-BB", counters, outcome)
}

fn stack(a: &Vector, b: &Vector) -> Vector {
    Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn iterate(
    reg: &mut RegularizedObjective<'_>,
    params: &GdBbParams,
    cfg: &LineSearchConfig,
    p: &mut Progress,
) -> Result<RunStatus> {
    let mut h = reg.evaluate(&p.x, &p.y)?.h;
    let mut merit_avg = h;
    let mut prev: Option<(Vector, Vector)> = None;
    loop {
        let g = reg.gradient(&p.x, &p.y)?;
        let grad_norm = joint_norm(&g.gx, &g.gy);
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
        let w = stack(&p.x, &p.y);
        let gw = stack(&g.hx, &g.hy);
        let eta0 = match &prev {
            Some((pw, pg)) => bb_step(
                &(&w - pw),
                &(&gw - pg),
                params.variant,
                params.eta_min,
                params.eta_max,
            ),
            None => params.eta_max,
        };
        let (out, y_new) = search_joint(
            reg,
            &p.x,
            &p.y,
            &g.hx,
            &g.hy,
            merit_avg,
            params.gamma,
            eta0,
            cfg,
        )?;
        prev = Some((w, gw));
        p.x = out.point;
        p.y = y_new;
        h = out.accepted_value;
        merit_avg = zh_average(merit_avg, h, params.tau.at(p.iters))?;
        p.note_steps(out.step, out.step);
        rec.eta_y = Some(out.step);
        rec.eta_x = Some(out.step);
        p.push(rec);
        p.iters += 1;
        if p.diverged() {
            return Ok(RunStatus::Diverged);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::common::SeededRng;
    use crate::problems::QuadraticNCSC;

    #[test]
    fn converges_on_scalar_quadratic() {
        let q = QuadraticNCSC::scalar(-0.5, 1.0, 1.0, 1.0).unwrap();
        let z0 = JointPoint::from_slices(&[1.0], &[0.0]).unwrap();
        let r = run_gdbb(&q, &GdBbParams::new(2.0, StopRule::new(1e-9, 5000)), &z0).unwrap();
        assert_eq!(r.status, RunStatus::Converged);
        assert!(r.final_point().unwrap().distance(&q.solution().unwrap()) <= 1e-6);
        assert!(r.hvp_evals >= r.iters as u64);
    }

    #[test]
    fn monotone_variant_decreases_merit() {
        let mut rng = SeededRng::new(5);
        let q = QuadraticNCSC::random(&mut rng, 5, 3).unwrap();
        let mut prm = GdBbParams::new(2.0 / q.mu(), StopRule::new(1e-9, 5000));
        prm.tau = TauSchedule::Constant(1.0);
        prm.record_trace = true;
        let r = run_gdbb(&q, &prm, &JointPoint::zeros(5, 3).unwrap()).unwrap();
        assert_eq!(r.status, RunStatus::Converged);
        for w in r.trace.windows(2) {
            let (prev, next) = (w[0].merit.unwrap(), w[1].merit.unwrap());
            assert!(next <= prev + LineSearchConfig::default().fp_slack * prev.abs().max(1.0));
        }
        assert!(r.final_point().unwrap().distance(&q.solution().unwrap()) <= 1e-6);
    }

    #[test]
    fn rejects_small_beta_with_known_modulus() {
        let q = QuadraticNCSC::scalar(-0.5, 1.0, 1.0, 1.0).unwrap();
        let z0 = JointPoint::zeros(1, 1).unwrap();
        let r = run_gdbb(&q, &GdBbParams::new(0.5, StopRule::new(1e-9, 10)), &z0);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
