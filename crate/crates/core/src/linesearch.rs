//! Backtracking searches on the merit `h_beta` for the alternating
//! ascent (`y`) and descent (`x`) steps.
//!
//! Both searches try `eta_init * alpha^j` for `j = 0, 1, ...` and accept the
//! first step whose merit clears a threshold (the ZH average, or its
//! safeguarded variant) minus a required decrease. They only compare merit
//! values and never evaluate the inner maximization.

use crate::common::{LineSearchConfig, Vector};
use crate::error::{Error, Result};
use crate::oracle::{MeritValue, RegularizedObjective};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Accepted step `eta_init * alpha^(trial_count - 1)`.
    pub step: f64,
    pub trial_count: usize,
    /// Merit at the accepted point.
    pub accepted_value: f64,
    /// `f` at the accepted point.
    pub accepted_f: f64,
    /// `|grad_y f|^2` at the accepted point.
    pub accepted_grad_y_sq: f64,
    /// The updated block (`y` for the ascent search, `x` for the descent search).
    pub point: Vector,
}

/// Extra acceptance test bounding `|grad_y f|` at the trial point:
/// `|grad_y f(trial)|^2 <= bound_sq - slope * eta * ref_sq`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCap {
    pub bound_sq: f64,
    pub slope: f64,
    pub ref_sq: f64,
}

impl GradientCap {
    fn admits(&self, trial: &MeritValue, eta: f64) -> bool {
        trial.grad_y_sq <= self.bound_sq - self.slope * eta * self.ref_sq
    }
}

fn backtrack(
    eta_init: f64,
    cfg: &LineSearchConfig,
    threshold: f64,
    mut trial: impl FnMut(f64) -> Result<(MeritValue, Vector)>,
    required_decrease: impl Fn(f64) -> f64,
    cap: Option<GradientCap>,
) -> Result<SearchOutcome> {
    if !(eta_init > 0.0 && eta_init.is_finite()) {
        return Err(Error::Argument(format!(
            "initial step must be positive, got {eta_init}"
        )));
    }
    if !threshold.is_finite() {
        return Err(Error::Numeric(format!(
            "line-search threshold is {threshold}"
        )));
    }
    let slack = cfg.fp_slack * threshold.abs().max(1.0);
    let mut eta = eta_init;
    let mut last_value = f64::NAN;
    for j in 0..cfg.max_backtracks {
        match trial(eta) {
            Ok((merit, point)) => {
                last_value = merit.h;
                let ok = merit.h <= threshold - required_decrease(eta) + slack
                    && cap.is_none_or(|c| c.admits(&merit, eta));
                if ok {
                    return Ok(SearchOutcome {
                        step: eta,
                        trial_count: j + 1,
                        accepted_value: merit.h,
                        accepted_f: merit.f,
                        accepted_grad_y_sq: merit.grad_y_sq,
                        point,
                    });
                }
            }
            // an overflowing trial is rejected like any other failing step
            Err(Error::NonFinite { .. }) => last_value = f64::INFINITY,
            Err(e) => return Err(e),
        }
        eta *= cfg.alpha;
    }
    Err(Error::LineSearch {
        trials: cfg.max_backtracks,
        last_step: eta / cfg.alpha,
        last_value,
        threshold,
    })
}

/// Ascent search on `y`: accepts the largest `eta` in the grid with
/// `h(x, y + eta g) <= threshold - decrease_coeff * eta * |g|^2`, where
/// `g = grad_y f(x, y)`. One `f_eval` per trial.
#[allow(clippy::too_many_arguments)]
pub fn search_y(
    reg: &mut RegularizedObjective<'_>,
    x: &Vector,
    y: &Vector,
    grad_y_f: &Vector,
    threshold: f64,
    decrease_coeff: f64,
    eta_init: f64,
    cfg: &LineSearchConfig,
    cap: Option<GradientCap>,
) -> Result<SearchOutcome> {
    let g_sq = grad_y_f.norm_squared();
    backtrack(
        eta_init,
        cfg,
        threshold,
        |eta| {
            let y_trial = y + eta * grad_y_f;
            let m = reg.evaluate(x, &y_trial)?;
            Ok((m, y_trial))
        },
        |eta| decrease_coeff * eta * g_sq,
        cap,
    )
}

/// Descent search on `x` along `d_x`: accepts the largest `eta` in the grid
/// with `h(x + eta d, y_next) <= threshold - y_decrease_term
/// - x_decrease_coeff * eta * grad_x_sq`, where `grad_x_sq = |grad_x f(x, y_next)|^2`.
#[allow(clippy::too_many_arguments)]
pub fn search_x(
    reg: &mut RegularizedObjective<'_>,
    x: &Vector,
    y_next: &Vector,
    d_x: &Vector,
    grad_x_sq: f64,
    threshold: f64,
    y_decrease_term: f64,
    x_decrease_coeff: f64,
    eta_init: f64,
    cfg: &LineSearchConfig,
    cap: Option<GradientCap>,
) -> Result<SearchOutcome> {
    backtrack(
        eta_init,
        cfg,
        threshold,
        |eta| {
            let x_trial = x + eta * d_x;
            let m = reg.evaluate(&x_trial, y_next)?;
            Ok((m, x_trial))
        },
        |eta| y_decrease_term + x_decrease_coeff * eta * grad_x_sq,
        cap,
    )
}

/// Joint search on `w = (x, y)` along `-grad h`, used by gradient descent on
/// the merit directly: `h(w - eta grad) <= threshold - gamma * eta * |grad|^2`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn search_joint(
    reg: &mut RegularizedObjective<'_>,
    x: &Vector,
    y: &Vector,
    hx: &Vector,
    hy: &Vector,
    threshold: f64,
    gamma: f64,
    eta_init: f64,
    cfg: &LineSearchConfig,
) -> Result<(SearchOutcome, Vector)> {
    let g_sq = hx.norm_squared() + hy.norm_squared();
    let mut y_accepted = None;
    let out = backtrack(
        eta_init,
        cfg,
        threshold,
        |eta| {
            let x_trial = x - eta * hx;
            let y_trial = y - eta * hy;
            let m = reg.evaluate(&x_trial, &y_trial)?;
            y_accepted = Some(y_trial);
            Ok((m, x_trial))
        },
        |eta| gamma * eta * g_sq,
        None,
    )?;
    Ok((out, y_accepted.expect("accepted trial sets y")))
}
