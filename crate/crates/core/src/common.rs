//! Shared numeric types: joint iterates, evaluation counters, line-search and
//! stopping configuration, the ZH running average, and seeded randomness.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// A point `(x, y)` of the minimax problem. Both blocks are nonempty and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPoint {
    x: Vector,
    y: Vector,
}

impl JointPoint {
    pub fn new(x: Vector, y: Vector) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::Argument(format!(
                "joint point blocks must be nonempty (n = {}, m = {})",
                x.len(),
                y.len()
            )));
        }
        if !all_finite(&x) || !all_finite(&y) {
            return Err(Error::non_finite("coordinate", x.as_slice(), y.as_slice()));
        }
        Ok(Self { x, y })
    }

    pub fn from_slices(x: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(Vector::from_column_slice(x), Vector::from_column_slice(y))
    }

    pub fn zeros(n: usize, m: usize) -> Result<Self> {
        Self::new(Vector::zeros(n), Vector::zeros(m))
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.len(), self.y.len())
    }

    pub fn into_parts(self) -> (Vector, Vector) {
        (self.x, self.y)
    }

    /// Euclidean distance to another point of the same shape.
    pub fn distance(&self, other: &JointPoint) -> f64 {
        joint_norm(&(&self.x - &other.x), &(&self.y - &other.y))
    }
}

pub(crate) fn all_finite(v: &Vector) -> bool {
    v.iter().all(|a| a.is_finite())
}

/// `sqrt(|a|^2 + |b|^2)`
pub fn joint_norm(a: &Vector, b: &Vector) -> f64 {
    (a.norm_squared() + b.norm_squared()).sqrt()
}

/// Oracle-call counters for one solver run. Only ever incremented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCounters {
    /// Objective evaluations (`f` or `h_beta`; one `h_beta` counts once).
    pub f_evals: u64,
    /// Gradient evaluations of `f` (full or partial).
    pub g_evals: u64,
    /// Directional second-derivative actions along a `y` direction.
    pub hvp_evals: u64,
    pub wall_time: f64,
}

/// Mixing weights `tau_k` for the ZH running average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSchedule {
    Constant(f64),
    /// `tau_k = values[min(k, len - 1)]`
    Sequence(Vec<f64>),
}

impl Default for TauSchedule {
    fn default() -> Self {
        TauSchedule::Constant(1e-3)
    }
}

impl TauSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            TauSchedule::Constant(t) => *t,
            TauSchedule::Sequence(v) => v[k.min(v.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |t: f64| t > 0.0 && t <= 1.0;
        match self {
            TauSchedule::Constant(t) if ok(*t) => Ok(()),
            TauSchedule::Sequence(v) if !v.is_empty() && v.iter().all(|t| ok(*t)) => Ok(()),
            other => Err(Error::Config(format!(
                "tau schedule must be nonempty with every value in (0, 1], got {other:?}"
            ))),
        }
    }
}

/// Parameters shared by the backtracking searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearchConfig {
    pub alpha: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub tau: TauSchedule,
    pub eta_min_x: f64,
    pub eta_max_x: f64,
    pub eta_min_y: f64,
    pub eta_max_y: f64,
    pub max_backtracks: usize,
    /// Relative rounding allowance in the acceptance tests: a trial passes if
    /// it clears the threshold up to `fp_slack * max(1, |threshold|)`. Without
    /// it, merit differences below double resolution stall the search near
    /// tight tolerances.
    pub fp_slack: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gamma_x: 1e-12,
            gamma_y: 1e-5,
            tau: TauSchedule::default(),
            eta_min_x: 1e-6,
            eta_max_x: 1e6,
            eta_min_y: 1e-6,
            eta_max_y: 1e6,
            max_backtracks: 60,
            fp_slack: 1e-15,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(0.0 <= self.gamma_x && self.gamma_x < self.gamma_y && self.gamma_y < 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= gamma_x < gamma_y < 1, got gamma_x = {}, gamma_y = {}",
                self.gamma_x, self.gamma_y
            )));
        }
        for (axis, lo, hi) in [
            ("x", self.eta_min_x, self.eta_max_x),
            ("y", self.eta_min_y, self.eta_max_y),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "step bounds for {axis} must satisfy 0 < min <= max, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.fp_slack >= 0.0 && self.fp_slack < 1e-3) {
            return Err(Error::Config(format!(
                "fp_slack must lie in [0, 1e-3), got {}",
                self.fp_slack
            )));
        }
        if self.max_backtracks == 0 {
            return Err(Error::Config("max_backtracks must be positive".into()));
        }
        self.tau.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopRule {
    /// Target for `|grad f(x_k, y_k)|`.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub max_wall_time: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            grad_tol: 1e-7,
            max_iters: 10_000,
            max_wall_time: None,
        }
    }
}

impl StopRule {
    pub fn new(grad_tol: f64, max_iters: usize) -> Self {
        Self {
            grad_tol,
            max_iters,
            max_wall_time: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Deterministic random stream: ChaCha20 keyed by a 64-bit seed, with
/// Box-Muller normals.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha20Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "chacha20+box-muller";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

pub fn standard_normal_vector(rng: &mut SeededRng, len: usize) -> Result<Vector> {
    if len == 0 {
        return Err(Error::Argument("vector length must be at least 1".into()));
    }
    Ok(Vector::from_fn(len, |_, _| rng.standard_normal()))
}

/// ZH running average `(1 - tau) * h_prev + tau * h_new`.
pub fn zh_average(h_prev: f64, h_new: f64, tau: f64) -> Result<f64> {
    if !h_prev.is_finite() || !h_new.is_finite() || !tau.is_finite() {
        return Err(Error::Numeric(format!(
            "zh_average received non-finite input ({h_prev}, {h_new}, {tau})"
        )));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Argument(format!(
            "tau must lie in (0, 1], got {tau}"
        )));
    }
    let avg = (1.0 - tau) * h_prev + tau * h_new;
    // rounding must not push the average outside the segment
    Ok(avg.clamp(h_prev.min(h_new), h_prev.max(h_new)))
}
