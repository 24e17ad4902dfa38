//! Numerical certificates for the structure of `h_beta`: gradient-bound
//! inequalities, stationarity transfer, the Schur-complement identity on
//! quadratics, and empirical rate/exponent probes.
//!
//! Everything here is report-only: inequalities come back as signed slacks
//! and the caller decides what counts as failure.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::common::{standard_normal_vector, SeededRng, Vector};
use crate::error::{Error, Result};
use crate::oracle::{PhiOracle, ProblemOracle};
use crate::problems::QuadraticNCSC;

fn require_regularizing(beta: f64, mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Config(format!("mu must be positive, got {mu}")));
    }
    if !(beta * mu > 1.0 && beta.is_finite()) {
        return Err(Error::Config(format!(
            "need beta > 1/mu, got beta = {beta}, 1/mu = {}",
            1.0 / mu
        )));
    }
    Ok(())
}

/// How an `eps`-stationary point of one formulation transfers to the other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferBound {
    pub eps_in: f64,
    /// Stationarity of `h_beta` implied by an `eps`-minimax point: `(1 + beta L) eps`.
    pub bound_min_to_rm: f64,
    /// Minimax stationarity implied by an `eps`-stationary point of `h_beta`:
    /// `sqrt(2 [1 + (beta L)^2 / (beta mu - 1)^2]) eps`.
    pub bound_rm_to_min: f64,
    pub l_used: f64,
}

pub fn transfer_bounds(eps: f64, beta: f64, mu: f64, l: f64) -> Result<TransferBound> {
    require_regularizing(beta, mu)?;
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Config(format!(
            "Lipschitz estimate must be positive, got {l}"
        )));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Argument(format!(
            "eps must be nonnegative, got {eps}"
        )));
    }
    let bl = beta * l;
    let gap = beta * mu - 1.0;
    Ok(TransferBound {
        eps_in: eps,
        bound_min_to_rm: (1.0 + bl) * eps,
        bound_rm_to_min: (2.0 * (1.0 + bl * bl / (gap * gap))).sqrt() * eps,
        l_used: l,
    })
}

/// Local surrogate for the Lipschitz modulus of `grad f` near `(x, y)`.
///
/// Takes the largest `|grad^2 f (0, v)|` over the coordinate directions of
/// `y` and the normalized `grad_y f` direction, inflated by 10%. The
/// gradient-bound inequalities only use the curvature along `grad_y f`, so
/// including that direction makes them hold by construction.
pub fn estimate_local_lipschitz(oracle: &dyn ProblemOracle, x: &Vector, y: &Vector) -> f64 {
    let m = y.len();
    let action = |v: &Vector| {
        let (sx, sy) = oracle.y_dir_second(x, y, v);
        (sx.norm_squared() + sy.norm_squared()).sqrt()
    };
    let mut best = 0.0_f64;
    let mut e = Vector::zeros(m);
    for i in 0..m {
        e[i] = 1.0;
        best = best.max(action(&e));
        e[i] = 0.0;
    }
    let gy = oracle.grad_y(x, y);
    let gy_norm = gy.norm();
    if gy_norm > 0.0 && gy_norm.is_finite() {
        best = best.max(action(&(gy / gy_norm)));
    }
    1.1 * best
}

/// Coordinate directions are probed up to this many `y` components;
/// beyond it, a fixed set of random directions is used instead.
const CURVATURE_COORDINATE_LIMIT: usize = 512;
const CURVATURE_RANDOM_DIRECTIONS: usize = 64;

/// Sampled strong-concavity check in `y` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureCheck {
    /// Largest `v' grad^2_yy f v / |v|^2` over the probed directions.
    pub max_curvature: f64,
    pub mu: f64,
    pub directions: usize,
}

impl CurvatureCheck {
    /// Some probed direction is flatter than the declared modulus allows.
    pub fn violates(&self) -> bool {
        self.max_curvature > -self.mu + 1e-12
    }
}

/// Probes the `y`-curvature at `(x, y)` against `-mu`. The declared modulus
/// of some problems only holds on part of the domain, so iterates can leave
/// the region where it is valid.
pub fn y_curvature_check(
    oracle: &dyn ProblemOracle,
    x: &Vector,
    y: &Vector,
    mu: f64,
) -> Result<CurvatureCheck> {
    let m = y.len();
    if m == 0 {
        return Err(Error::Argument("y block is empty".into()));
    }
    let directions: Vec<Vector> = if m <= CURVATURE_COORDINATE_LIMIT {
        (0..m)
            .map(|i| Vector::from_fn(m, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect()
    } else {
        let mut rng = SeededRng::new(0);
        (0..CURVATURE_RANDOM_DIRECTIONS)
            .map(|_| standard_normal_vector(&mut rng, m))
            .collect::<Result<_>>()?
    };
    let mut max_curvature = f64::NEG_INFINITY;
    for v in &directions {
        let (_, hyy_v) = oracle.y_dir_second(x, y, v);
        let q = v.dot(&hyy_v) / v.norm_squared();
        if !q.is_finite() {
            return Err(Error::Numeric(format!("non-finite y-curvature {q}")));
        }
        max_curvature = max_curvature.max(q);
    }
    Ok(CurvatureCheck {
        max_curvature,
        mu,
        directions: directions.len(),
    })
}

/// One inequality `lhs <= rhs` evaluated at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative means the inequality failed.
    pub slack: f64,
}

impl InequalityRecord {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            slack: rhs - lhs,
        }
    }

    /// Fails by more than rounding: `slack < -1e-8 (1 + |lhs| + |rhs|)`.
    pub fn is_violation(&self) -> bool {
        !(self.slack >= -1e-8 * (1.0 + self.lhs.abs() + self.rhs.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub l_hat: f64,
    pub records: Vec<InequalityRecord>,
}

impl LemmaReport {
    pub fn violations(&self) -> impl Iterator<Item = &InequalityRecord> {
        self.records.iter().filter(|r| r.is_violation())
    }
}

pub const LEMMA_NAMES: [&str; 7] = [
    "grad_y_h_upper",
    "grad_x_h_upper",
    "grad_x_h_inner",
    "grad_x_h_lower",
    "grad_y_h_ascent",
    "grad_y_h_lower",
    "h_minus_phi_lower",
];

/// Evaluates the gradient-bound inequalities relating `grad h_beta` to
/// `grad f` at `(x, y)`. With a value-function oracle the lower bound
/// `h - Phi >= (beta/2 - 1/(2 mu)) |grad_y f|^2` is added as well.
///
/// `l_hat` defaults to [`estimate_local_lipschitz`] at the point.
pub fn check_point_lemmas(
    oracle: &dyn ProblemOracle,
    mu: f64,
    beta: f64,
    x: &Vector,
    y: &Vector,
    l_hat: Option<f64>,
    phi: Option<&mut PhiOracle>,
) -> Result<LemmaReport> {
    require_regularizing(beta, mu)?;
    let l = l_hat.unwrap_or_else(|| estimate_local_lipschitz(oracle, x, y));
    let (f, _) = oracle.value_and_grad_y(x, y);
    let (gx, gy) = oracle.grad(x, y);
    let (sx, sy) = oracle.y_dir_second(x, y, &gy);
    let hx = &gx + beta * sx;
    let hy = &gy + beta * sy;
    let (gx_n, gy_n) = (gx.norm(), gy.norm());
    let (gx_sq, gy_sq) = (gx_n * gx_n, gy_n * gy_n);
    let bl_sq = (beta * l).powi(2);
    let b1 = beta * mu - 1.0;
    let mut records = vec![
        InequalityRecord::new(LEMMA_NAMES[0], hy.norm(), (1.0 + beta * l) * gy_n),
        InequalityRecord::new(LEMMA_NAMES[1], hx.norm(), gx_n + beta * l * gy_n),
        InequalityRecord::new(LEMMA_NAMES[2], -2.0 * hx.dot(&gx) + gx_sq, bl_sq * gy_sq),
        // Young's inequality with C = 2
        InequalityRecord::new(
            LEMMA_NAMES[3],
            0.5 * gx_sq - bl_sq * gy_sq,
            hx.norm_squared(),
        ),
        InequalityRecord::new(LEMMA_NAMES[4], hy.dot(&gy), -b1 * gy_sq),
        InequalityRecord::new(LEMMA_NAMES[5], b1 * gy_n, hy.norm()),
    ];
    if let Some(phi) = phi {
        let (phi_x, _) = phi.eval(oracle, x)?;
        let h = f + 0.5 * beta * gy_sq;
        records.push(InequalityRecord::new(
            LEMMA_NAMES[6],
            (0.5 * beta - 0.5 / mu) * gy_sq,
            h - phi_x,
        ));
    }
    Ok(LemmaReport { l_hat: l, records })
}

/// Worst case of one inequality over many sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalitySummary {
    pub name: String,
    /// `lhs`, `rhs` and `slack` at the sample with the smallest relative slack.
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub samples: usize,
    pub violations: usize,
}

/// Folds per-point reports into one summary per inequality, in a fixed order.
pub fn summarize_lemmas(reports: &[LemmaReport]) -> Vec<InequalitySummary> {
    let mut out: Vec<InequalitySummary> = Vec::new();
    let relative = |r: &InequalityRecord| r.slack / (1.0 + r.lhs.abs() + r.rhs.abs());
    for report in reports {
        for rec in &report.records {
            let idx = match out.iter().position(|s| s.name == rec.name) {
                Some(i) => i,
                None => {
                    out.push(InequalitySummary {
                        name: rec.name.clone(),
                        lhs: rec.lhs,
                        rhs: rec.rhs,
                        slack: rec.slack,
                        samples: 0,
                        violations: 0,
                    });
                    out.len() - 1
                }
            };
            let s = &mut out[idx];
            s.samples += 1;
            if rec.is_violation() {
                s.violations += 1;
            }
            let current = s.slack / (1.0 + s.lhs.abs() + s.rhs.abs());
            if relative(rec) < current || relative(rec).is_nan() {
                s.lhs = rec.lhs;
                s.rhs = rec.rhs;
                s.slack = rec.slack;
            }
        }
    }
    out
}

/// Checks that the `x`-block Schur complement of the analytic Hessian of
/// `h_beta` at the minimax point equals `A + BB'/mu`; returns the Frobenius
/// norm of the difference.
///
/// On a quadratic the Hessian of `h_beta` is constant:
/// `[A + beta BB', (1 - beta mu) B; (1 - beta mu) B', mu (beta mu - 1) I]`.
pub fn quadratic_second_order_check(q: &QuadraticNCSC, beta: f64) -> Result<f64> {
    require_regularizing(beta, q.mu())?;
    let (a, b, mu) = (q.a(), q.b(), q.mu());
    let m = b.ncols();
    let bbt = b * b.transpose();
    let hxx = a + beta * &bbt;
    let hxy = (1.0 - beta * mu) * b;
    let hyy = DMatrix::<f64>::identity(m, m) * (mu * (beta * mu - 1.0));
    let hyy_inv = hyy
        .try_inverse()
        .ok_or_else(|| Error::Numeric("y-block of the merit Hessian is singular".into()))?;
    let schur = hxx - &hxy * hyy_inv * hxy.transpose();
    Ok((schur - q.phi_hessian()).norm())
}

/// Least-squares line `y = intercept + slope t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero with only two points.
    pub slope_std_error: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn linear_fit(t: &[f64], y: &[f64]) -> Result<LinearFit> {
    if t.len() != y.len() {
        return Err(Error::Argument(format!(
            "fit needs equal lengths, got {} and {}",
            t.len(),
            y.len()
        )));
    }
    let n = t.len();
    if n < 2 {
        return Err(Error::NotEstimable(format!(
            "need at least 2 points, got {n}"
        )));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("fit data must be finite".into()));
    }
    let nf = n as f64;
    let t_mean = t.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;
    let stt: f64 = t.iter().map(|a| (a - t_mean).powi(2)).sum();
    let syy: f64 = y.iter().map(|a| (a - y_mean).powi(2)).sum();
    let sty: f64 = t
        .iter()
        .zip(y)
        .map(|(a, b)| (a - t_mean) * (b - y_mean))
        .sum();
    if !(stt > 0.0) {
        return Err(Error::NotEstimable("regressor has no variation".into()));
    }
    let slope = sty / stt;
    let intercept = y_mean - slope * t_mean;
    let sse: f64 = t
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_std_error = if n > 2 {
        (sse / (nf - 2.0) / stt).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_std_error,
        r_squared,
        n,
    })
}

/// Fit of `log y` against `t`; the slope is the log of the per-step
/// contraction factor for linearly convergent sequences.
pub fn log_linear_fit(t: &[f64], y: &[f64]) -> Result<LinearFit> {
    if y.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Argument("log-linear fit needs positive data".into()));
    }
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(t, &logs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub theta: f64,
    pub points: usize,
    pub r_squared: f64,
}

/// Fewest qualifying points `kl_exponent_probe` will fit.
pub const KL_MIN_POINTS: usize = 10;

/// Estimates the exponent `theta` in `|grad h| ~ C (h - h_inf)^theta` from a
/// converged run, taking `h_inf` as the last merit value and fitting
/// `log |grad h|` against `log(h - h_inf)` over points with a gap above
/// `10 eps |h_inf|`.
pub fn kl_exponent_probe(merits: &[f64], grad_norms: &[f64]) -> Result<KlEstimate> {
    if merits.len() != grad_norms.len() {
        return Err(Error::Argument(format!(
            "trace lengths differ: {} merits, {} gradients",
            merits.len(),
            grad_norms.len()
        )));
    }
    let Some(&h_inf) = merits.last() else {
        return Err(Error::NotEstimable("empty trace".into()));
    };
    let floor = 10.0 * f64::EPSILON * h_inf.abs();
    let (log_gap, log_grad): (Vec<f64>, Vec<f64>) = merits
        .iter()
        .zip(grad_norms)
        .filter(|(h, g)| **h - h_inf > floor && **g > 0.0 && g.is_finite())
        .map(|(h, g)| ((h - h_inf).ln(), g.ln()))
        .unzip();
    if log_gap.len() < KL_MIN_POINTS {
        return Err(Error::NotEstimable(format!(
            "{} points with a resolvable gap, need {KL_MIN_POINTS}",
            log_gap.len()
        )));
    }
    let fit = linear_fit(&log_gap, &log_grad)?;
    Ok(KlEstimate {
        theta: fit.slope,
        points: fit.n,
        r_squared: fit.r_squared,
    })
}

/// Trend of `r_T = min_{k <= T} |grad_k| sqrt(T + 1)` over the second half
/// of a run. A sublinear `O(T^-1/2)` rate keeps `r_T` bounded, so a slope
/// that is positive beyond its standard error signals a slower rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTrend {
    pub fit: LinearFit,
}

impl RateTrend {
    pub fn is_nonincreasing(&self) -> bool {
        self.fit.slope <= self.fit.slope_std_error
    }
}

pub fn rate_trend(grad_norms: &[f64]) -> Result<RateTrend> {
    let mut best = f64::INFINITY;
    let r: Vec<f64> = grad_norms
        .iter()
        .enumerate()
        .map(|(t, g)| {
            best = best.min(*g);
            best * ((t + 1) as f64).sqrt()
        })
        .collect();
    let start = r.len() / 2;
    let t: Vec<f64> = (start..r.len()).map(|k| k as f64).collect();
    let fit = linear_fit(&t, &r[start..])?;
    Ok(RateTrend { fit })
}
