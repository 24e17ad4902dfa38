//! Problem oracles and the regularized merit function
//! `h_beta(x, y) = f(x, y) + (beta / 2) |grad_y f(x, y)|^2`.
//!
//! The merit gradient needs the mixed and `y`-`y` second derivatives of `f`
//! applied to the same vector `grad_y f`, so the oracle contract exposes one
//! combined directional action instead of two separate Hessian products.

use serde::{Deserialize, Serialize};

use crate::common::{all_finite, EvalCounters, JointPoint, Vector};
use crate::error::{Error, Result};

/// A smooth objective `f(x, y)` that is strongly concave in `y`.
///
/// Implementations must be shareable across threads for read-only evaluation.
pub trait ProblemOracle: Send + Sync {
    /// `(n, m)`: lengths of the `x` and `y` blocks.
    fn dims(&self) -> (usize, usize);

    fn value(&self, x: &Vector, y: &Vector) -> f64;

    fn grad_x(&self, x: &Vector, y: &Vector) -> Vector;

    fn grad_y(&self, x: &Vector, y: &Vector) -> Vector;

    /// Both partial gradients. Override when the blocks share work.
    fn grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector) {
        (self.grad_x(x, y), self.grad_y(x, y))
    }

    /// `f` and `grad_y f` together; this is what one merit evaluation needs.
    fn value_and_grad_y(&self, x: &Vector, y: &Vector) -> (f64, Vector) {
        (self.value(x, y), self.grad_y(x, y))
    }

    /// Directional derivative of the full gradient along `(0, v)`:
    /// returns `(grad^2_xy f * v, grad^2_yy f * v)`.
    fn y_dir_second(&self, x: &Vector, y: &Vector, v: &Vector) -> (Vector, Vector);

    /// Strong-concavity modulus in `y`, when known.
    fn mu_hint(&self) -> Option<f64> {
        None
    }
}

impl<T: ProblemOracle + ?Sized> ProblemOracle for &T {
    fn dims(&self) -> (usize, usize) {
        (**self).dims()
    }
    fn value(&self, x: &Vector, y: &Vector) -> f64 {
        (**self).value(x, y)
    }
    fn grad_x(&self, x: &Vector, y: &Vector) -> Vector {
        (**self).grad_x(x, y)
    }
    fn grad_y(&self, x: &Vector, y: &Vector) -> Vector {
        (**self).grad_y(x, y)
    }
    fn grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector) {
        (**self).grad(x, y)
    }
    fn value_and_grad_y(&self, x: &Vector, y: &Vector) -> (f64, Vector) {
        (**self).value_and_grad_y(x, y)
    }
    fn y_dir_second(&self, x: &Vector, y: &Vector, v: &Vector) -> (Vector, Vector) {
        (**self).y_dir_second(x, y, v)
    }
    fn mu_hint(&self) -> Option<f64> {
        (**self).mu_hint()
    }
}

/// Requires the modulus for anything that depends on it.
pub fn require_mu(oracle: &dyn ProblemOracle) -> Result<f64> {
    oracle.mu_hint().ok_or_else(|| {
        Error::Config(
            "strong-concavity modulus unknown; supply mu explicitly or use the parameter-free GDA (alg2)"
                .into(),
        )
    })
}

/// One merit evaluation, with the parts it was assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeritValue {
    pub h: f64,
    pub f: f64,
    pub grad_y_sq: f64,
}

/// `grad h_beta` plus the `grad f` it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct MeritGradient {
    pub hx: Vector,
    pub hy: Vector,
    pub gx: Vector,
    pub gy: Vector,
}

/// `h_beta` over a borrowed oracle. Owns the counters of one run.
pub struct RegularizedObjective<'a> {
    oracle: &'a dyn ProblemOracle,
    beta: f64,
    counters: EvalCounters,
}

impl<'a> RegularizedObjective<'a> {
    pub fn new(oracle: &'a dyn ProblemOracle, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!(
                "beta must be positive and finite, got {beta}"
            )));
        }
        Ok(Self {
            oracle,
            beta,
            counters: EvalCounters::default(),
        })
    }

    /// Construction for the known-modulus framework: requires `beta > 1/mu`.
    pub fn with_modulus(oracle: &'a dyn ProblemOracle, beta: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::Config(format!("mu must be positive, got {mu}")));
        }
        if beta * mu <= 1.0 {
            return Err(Error::Config(format!(
                "beta = {beta} must exceed 1/mu = {}",
                1.0 / mu
            )));
        }
        Self::new(oracle, beta)
    }

    pub fn oracle(&self) -> &'a dyn ProblemOracle {
        self.oracle
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    pub fn counters(&self) -> EvalCounters {
        self.counters
    }

    pub(crate) fn counters_mut(&mut self) -> &mut EvalCounters {
        &mut self.counters
    }

    /// Evaluates `h_beta(x, y)` (one `f_eval`).
    pub fn evaluate(&mut self, x: &Vector, y: &Vector) -> Result<MeritValue> {
        self.counters.f_evals += 1;
        let (f, gy) = self.oracle.value_and_grad_y(x, y);
        let grad_y_sq = gy.norm_squared();
        let h = f + 0.5 * self.beta * grad_y_sq;
        if !h.is_finite() {
            return Err(Error::non_finite("merit value", x.as_slice(), y.as_slice()));
        }
        Ok(MeritValue { h, f, grad_y_sq })
    }

    pub fn h_eval(&mut self, z: &JointPoint) -> Result<f64> {
        self.evaluate(z.x(), z.y()).map(|m| m.h)
    }

    /// `grad h_beta` (one `g_eval` plus one `hvp_eval`).
    pub fn gradient(&mut self, x: &Vector, y: &Vector) -> Result<MeritGradient> {
        self.counters.g_evals += 1;
        self.counters.hvp_evals += 1;
        let (gx, gy) = self.oracle.grad(x, y);
        let (sx, sy) = self.oracle.y_dir_second(x, y, &gy);
        let hx = &gx + self.beta * sx;
        let hy = &gy + self.beta * sy;
        if !(all_finite(&hx) && all_finite(&hy)) {
            return Err(Error::non_finite(
                "merit gradient",
                x.as_slice(),
                y.as_slice(),
            ));
        }
        Ok(MeritGradient { hx, hy, gx, gy })
    }

    pub fn h_grad(&mut self, z: &JointPoint) -> Result<(Vector, Vector)> {
        self.gradient(z.x(), z.y()).map(|g| (g.hx, g.hy))
    }

    /// Full `grad f` (one `g_eval`).
    pub fn grad_f(&mut self, x: &Vector, y: &Vector) -> Result<(Vector, Vector)> {
        self.counters.g_evals += 1;
        let (gx, gy) = self.oracle.grad(x, y);
        if !(all_finite(&gx) && all_finite(&gy)) {
            return Err(Error::non_finite("gradient", x.as_slice(), y.as_slice()));
        }
        Ok((gx, gy))
    }

    /// `grad_x f` alone (one `g_eval`).
    pub fn grad_x_f(&mut self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.counters.g_evals += 1;
        let gx = self.oracle.grad_x(x, y);
        if !all_finite(&gx) {
            return Err(Error::non_finite("x-gradient", x.as_slice(), y.as_slice()));
        }
        Ok(gx)
    }

    /// One `hvp_eval`.
    pub fn y_dir_second(&mut self, x: &Vector, y: &Vector, v: &Vector) -> Result<(Vector, Vector)> {
        self.counters.hvp_evals += 1;
        let (sx, sy) = self.oracle.y_dir_second(x, y, v);
        if !(all_finite(&sx) && all_finite(&sy)) {
            return Err(Error::non_finite(
                "second-derivative action",
                x.as_slice(),
                y.as_slice(),
            ));
        }
        Ok((sx, sy))
    }
}

/// Estimate of `beta_0` from a secant of the `y`-curvature:
/// `|y - y'|^2 / (2 [f(x,y) - f(x,y') + <grad_y f(x,y), y' - y>])`, which lies
/// in `(0, 1/mu]` for a `mu`-strongly concave slice.
pub fn estimate_beta0(
    oracle: &dyn ProblemOracle,
    x: &Vector,
    y: &Vector,
    y_other: &Vector,
) -> Result<f64> {
    let dy = y_other - y;
    let dist_sq = dy.norm_squared();
    if dist_sq == 0.0 {
        return Err(Error::Argument("beta_0 estimate needs y' != y".into()));
    }
    let gy = oracle.grad_y(x, y);
    let gap = oracle.value(x, y) - oracle.value(x, y_other) + gy.dot(&dy);
    if !(gap > 0.0) || !gap.is_finite() {
        return Err(Error::Numeric(format!(
            "beta_0 estimate has nonpositive curvature gap {gap:e}; is f concave in y?"
        )));
    }
    Ok(dist_sq / (2.0 * gap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhiOracleConfig {
    /// Target for `|grad_y f(x, y+)|`.
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    pub warm_start: bool,
}

impl Default for PhiOracleConfig {
    fn default() -> Self {
        Self {
            inner_tol: 1e-11,
            inner_max_iters: 100_000,
            warm_start: true,
        }
    }
}

/// High-accuracy value function `Phi(x) = max_y f(x, y)`, solved by gradient
/// ascent with backtracking. Keeps the last maximizer for warm starts.
#[derive(Debug, Clone, Default)]
pub struct PhiOracle {
    config: PhiOracleConfig,
    last_y: Option<Vector>,
    last_step: Option<f64>,
}

impl PhiOracle {
    pub fn new(config: PhiOracleConfig) -> Result<Self> {
        if !(config.inner_tol > 0.0) {
            return Err(Error::Config(format!(
                "inner_tol must be positive, got {}",
                config.inner_tol
            )));
        }
        Ok(Self {
            config,
            last_y: None,
            last_step: None,
        })
    }

    pub fn config(&self) -> &PhiOracleConfig {
        &self.config
    }

    /// Returns `(Phi(x), y+)` with `|grad_y f(x, y+)| <= inner_tol`.
    pub fn eval(&mut self, oracle: &dyn ProblemOracle, x: &Vector) -> Result<(f64, Vector)> {
        let (_, m) = oracle.dims();
        let start = match (&self.last_y, self.config.warm_start) {
            (Some(y), true) if y.len() == m => y.clone(),
            _ => Vector::zeros(m),
        };
        let step0 = if self.config.warm_start {
            self.last_step
        } else {
            None
        };
        let (y, step) = self.maximize(oracle, x, start, step0.unwrap_or(1.0))?;
        let phi = oracle.value(x, &y);
        if self.config.warm_start {
            self.last_y = Some(y.clone());
            self.last_step = Some(step);
        }
        Ok((phi, y))
    }

    /// `grad Phi(x) = grad_x f(x, y+)`.
    pub fn grad(&mut self, oracle: &dyn ProblemOracle, x: &Vector) -> Result<Vector> {
        let (_, y) = self.eval(oracle, x)?;
        Ok(oracle.grad_x(x, &y))
    }

    // Backtracking on a secant curvature estimate: a trial step is accepted
    // when it shrinks the gradient and `step * L_est <= 1`. Objective values
    // are not compared because at the target residual their differences sit
    // below rounding.
    fn maximize(
        &self,
        oracle: &dyn ProblemOracle,
        x: &Vector,
        mut y: Vector,
        mut step: f64,
    ) -> Result<(Vector, f64)> {
        let tol = self.config.inner_tol;
        let mut g = oracle.grad_y(x, &y);
        let mut g_norm = g.norm();
        for iter in 0..self.config.inner_max_iters {
            if !g_norm.is_finite() {
                return Err(Error::non_finite(
                    "inner gradient",
                    x.as_slice(),
                    y.as_slice(),
                ));
            }
            if g_norm <= tol {
                return Ok((y, step));
            }
            let mut accepted = None;
            for _ in 0..200 {
                let y_trial = &y + step * &g;
                let g_trial = oracle.grad_y(x, &y_trial);
                let trial_norm = g_trial.norm();
                let curvature = (&g_trial - &g).norm() / (step * g_norm);
                if trial_norm.is_finite() && trial_norm < g_norm && step * curvature <= 1.0 {
                    accepted = Some((y_trial, g_trial, trial_norm, curvature));
                    break;
                }
                step = if curvature.is_finite() && curvature > 0.0 {
                    (0.5 / curvature).min(0.5 * step)
                } else {
                    0.5 * step
                };
            }
            let Some((y_next, g_next, norm_next, curvature)) = accepted else {
                return Err(Error::Convergence {
                    residual: g_norm,
                    iters: iter,
                });
            };
            y = y_next;
            g = g_next;
            g_norm = norm_next;
            if curvature > 0.0 {
                step = (1.0 / curvature).min(4.0 * step);
            } else {
                step *= 2.0;
            }
        }
        if g_norm <= tol {
            Ok((y, step))
        } else {
            Err(Error::Convergence {
                residual: g_norm,
                iters: self.config.inner_max_iters,
            })
        }
    }
}

/// Cold-start evaluation of `Phi(x)` and its maximizer.
pub fn phi_eval(
    oracle: &dyn ProblemOracle,
    x: &Vector,
    cfg: &PhiOracleConfig,
) -> Result<(f64, Vector)> {
    PhiOracle::new(cfg.clone())?.eval(oracle, x)
}

pub fn phi_grad(oracle: &dyn ProblemOracle, x: &Vector, cfg: &PhiOracleConfig) -> Result<Vector> {
    PhiOracle::new(cfg.clone())?.grad(oracle, x)
}

/// Which analytic derivative `fd_check` compares against central differences.
#[derive(Debug, Clone, PartialEq)]
pub enum FdTarget {
    GradF,
    GradH {
        beta: f64,
    },
    /// Directional second derivative along `(0, v)`.
    YDirSecond {
        v: Vector,
    },
}

/// Central-difference step: `eps^(1/3) * (1 + |z|_inf)`.
pub fn fd_step(scale_inf: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + scale_inf)
}

/// Relative discrepancy `|a - b|_inf / max(|a|_inf, |b|_inf)`, falling back to
/// the absolute discrepancy when both are essentially zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0_f64, |m, a| m.max(a.abs()));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn inf_norm(v: &Vector) -> f64 {
    v.amax()
}

/// Maximum relative error of an analytic derivative against central differences.
pub fn fd_check(oracle: &dyn ProblemOracle, z: &JointPoint, target: &FdTarget) -> f64 {
    let (x, y) = (z.x(), z.y());
    let h = fd_step(inf_norm(x).max(inf_norm(y)));
    match target {
        FdTarget::GradF => {
            let (gx, gy) = oracle.grad(x, y);
            let analytic: Vec<f64> = gx.iter().chain(gy.iter()).copied().collect();
            let numeric = central_gradient(x, y, h, |a, b| oracle.value(a, b));
            relative_error(&analytic, &numeric)
        }
        FdTarget::GradH { beta } => {
            let merit = |a: &Vector, b: &Vector| {
                let (f, gy) = oracle.value_and_grad_y(a, b);
                f + 0.5 * beta * gy.norm_squared()
            };
            let (gx, gy) = oracle.grad(x, y);
            let (sx, sy) = oracle.y_dir_second(x, y, &gy);
            let analytic: Vec<f64> = (&gx + *beta * sx)
                .iter()
                .chain((&gy + *beta * sy).iter())
                .copied()
                .collect();
            let numeric = central_gradient(x, y, h, merit);
            relative_error(&analytic, &numeric)
        }
        FdTarget::YDirSecond { v } => {
            let (sx, sy) = oracle.y_dir_second(x, y, v);
            let (px, py) = oracle.grad(x, &(y + h * v));
            let (mx, my) = oracle.grad(x, &(y - h * v));
            let numeric: Vec<f64> = ((px - mx) / (2.0 * h))
                .iter()
                .chain(((py - my) / (2.0 * h)).iter())
                .copied()
                .collect();
            let analytic: Vec<f64> = sx.iter().chain(sy.iter()).copied().collect();
            relative_error(&analytic, &numeric)
        }
    }
}

/// `grad Phi` from the oracle against central differences of `Phi`.
pub fn fd_check_phi_grad(
    oracle: &dyn ProblemOracle,
    x: &Vector,
    cfg: &PhiOracleConfig,
) -> Result<f64> {
    let mut phi = PhiOracle::new(cfg.clone())?;
    let analytic = phi.grad(oracle, x)?;
    let h = fd_step(inf_norm(x));
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let (fp, _) = phi.eval(oracle, &xp)?;
        let (fm, _) = phi.eval(oracle, &xm)?;
        numeric.push((fp - fm) / (2.0 * h));
    }
    Ok(relative_error(analytic.as_slice(), &numeric))
}

fn central_gradient(
    x: &Vector,
    y: &Vector,
    h: f64,
    value: impl Fn(&Vector, &Vector) -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + y.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        out.push((value(&xp, y) - value(&xm, y)) / (2.0 * h));
    }
    for j in 0..y.len() {
        let mut yp = y.clone();
        yp[j] += h;
        let mut ym = y.clone();
        ym[j] -= h;
        out.push((value(x, &yp) - value(x, &ym)) / (2.0 * h));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticNCSC;

    fn scalar_quadratic() -> QuadraticNCSC {
        QuadraticNCSC::scalar(-0.5, 1.0, 1.0, 1.0).unwrap()
    }

    fn v(a: f64) -> Vector {
        Vector::from_element(1, a)
    }

    #[test]
    fn h_eval_examples() {
        let q = scalar_quadratic();
        let mut reg = RegularizedObjective::new(&q, 2.0).unwrap();
        let z = JointPoint::from_slices(&[0.0], &[1.0]).unwrap();
        assert!((reg.h_eval(&z).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(reg.counters().f_evals, 1);
        let z = JointPoint::from_slices(&[0.0], &[0.0]).unwrap();
        assert_eq!(reg.h_eval(&z).unwrap(), 0.0);
        assert_eq!(reg.counters().f_evals, 2);
    }

    #[test]
    fn h_equals_f_at_inner_maximizer() {
        let q = scalar_quadratic();
        let mut reg = RegularizedObjective::new(&q, 5.0).unwrap();
        // y*(x) = b x / mu
        let z = JointPoint::from_slices(&[1.3], &[1.3]).unwrap();
        let f = q.value(z.x(), z.y());
        assert_eq!(reg.h_eval(&z).unwrap(), f);
        let (hx, hy) = reg.h_grad(&z).unwrap();
        assert_eq!(hx, q.grad_x(z.x(), z.y()));
        assert_eq!(hy[0], 0.0);
    }

    #[test]
    fn h_grad_example_and_counters() {
        let q = scalar_quadratic();
        let mut reg = RegularizedObjective::new(&q, 2.0).unwrap();
        let z = JointPoint::from_slices(&[0.0], &[1.0]).unwrap();
        let (hx, hy) = reg.h_grad(&z).unwrap();
        assert!((hx[0] - 0.0).abs() < 1e-15);
        assert!((hy[0] - 1.0).abs() < 1e-15);
        let c = reg.counters();
        assert_eq!((c.f_evals, c.g_evals, c.hvp_evals), (0, 1, 1));
    }

    #[test]
    fn modulus_check_on_construction() {
        let q = scalar_quadratic();
        assert!(matches!(
            RegularizedObjective::with_modulus(&q, 1.0, 1.0),
            Err(Error::Config(_))
        ));
        assert!(RegularizedObjective::with_modulus(&q, 1.5, 1.0).is_ok());
        assert!(RegularizedObjective::new(&q, 0.0).is_err());
    }

    struct NanOracle;
    impl ProblemOracle for NanOracle {
        fn dims(&self) -> (usize, usize) {
            (1, 1)
        }
        fn value(&self, _: &Vector, _: &Vector) -> f64 {
            f64::NAN
        }
        fn grad_x(&self, _: &Vector, _: &Vector) -> Vector {
            v(f64::NAN)
        }
        fn grad_y(&self, _: &Vector, _: &Vector) -> Vector {
            v(0.0)
        }
        fn y_dir_second(&self, _: &Vector, _: &Vector, _: &Vector) -> (Vector, Vector) {
            (v(0.0), v(-1.0))
        }
    }

    #[test]
    fn non_finite_output_carries_point() {
        let mut reg = RegularizedObjective::new(&NanOracle, 1.0).unwrap();
        match reg.evaluate(&v(2.0), &v(3.0)) {
            Err(Error::NonFinite { x, y, .. }) => {
                assert_eq!(x, vec![2.0]);
                assert_eq!(y, vec![3.0]);
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
        assert!(reg.grad_f(&v(0.0), &v(0.0)).is_err());
        assert!(require_mu(&NanOracle).is_err());
    }

    #[test]
    fn phi_eval_closed_form() {
        let q = scalar_quadratic();
        let cfg = PhiOracleConfig::default();
        let (phi, y) = phi_eval(&q, &v(0.0), &cfg).unwrap();
        assert!(phi.abs() < 1e-14);
        assert!(y[0].abs() < 1e-11);
        // Phi(x) = 0.5 (a + b^2/mu) x^2 + c x
        let (phi, y) = phi_eval(&q, &v(-2.0), &cfg).unwrap();
        assert!((phi + 1.0).abs() < 1e-12);
        assert!((y[0] + 2.0).abs() < 1e-10);
        assert!((phi_grad(&q, &v(0.0), &cfg).unwrap()[0] - 1.0).abs() < 1e-10);
        assert!(phi_grad(&q, &v(-2.0), &cfg).unwrap()[0].abs() < 1e-10);
    }

    #[test]
    fn phi_eval_meets_inner_tolerance() {
        let q = scalar_quadratic();
        let cfg = PhiOracleConfig {
            inner_tol: 1e-11,
            ..Default::default()
        };
        let mut phi = PhiOracle::new(cfg).unwrap();
        for x in [-3.0, 0.7, 12.0] {
            let (_, y) = phi.eval(&q, &v(x)).unwrap();
            assert!(q.grad_y(&v(x), &y).norm() <= 1e-11);
        }
    }

    #[test]
    fn phi_eval_reports_exhausted_budget() {
        let q = scalar_quadratic();
        let cfg = PhiOracleConfig {
            inner_max_iters: 0,
            warm_start: false,
            ..Default::default()
        };
        let r = phi_eval(&q, &v(5.0), &cfg);
        assert!(matches!(r, Err(Error::Convergence { .. })), "{r:?}");
    }

    #[test]
    fn beta0_estimate_is_inverse_modulus_on_quadratic() {
        let q = scalar_quadratic();
        let b = estimate_beta0(&q, &v(0.3), &v(-1.0), &v(2.5)).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        assert!(estimate_beta0(&q, &v(0.3), &v(1.0), &v(1.0)).is_err());
    }

    #[test]
    fn relative_error_handles_zero_vectors() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
    }
}
