//! Barzilai-Borwein initial step sizes for alternating GDA.

use serde::{Deserialize, Serialize};

use crate::common::Vector;

const DEGENERATE: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BbVariant {
    /// Long step `|u|^2 / |<u, v>|`.
    #[default]
    Bb1,
    /// Short step `|<u, v>| / |v|^2`.
    Bb2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BbConfig {
    pub variant_y: BbVariant,
    pub variant_x: BbVariant,
}

/// Clipped BB quotient. Denominators or `|<u, v>|` below `1e-30` (or a
/// non-finite quotient) yield `eta_max`.
pub fn bb_step(u: &Vector, v: &Vector, variant: BbVariant, eta_min: f64, eta_max: f64) -> f64 {
    assert_eq!(
        u.len(),
        v.len(),
        "BB difference vectors must have equal length"
    );
    let uv = u.dot(v).abs();
    let (num, den) = match variant {
        BbVariant::Bb1 => (u.norm_squared(), uv),
        BbVariant::Bb2 => (uv, v.norm_squared()),
    };
    // orthogonal differences carry no curvature information for either quotient
    if den < DEGENERATE || uv < DEGENERATE {
        return eta_max;
    }
    let q = num / den;
    if !q.is_finite() {
        return eta_max;
    }
    q.max(eta_min).min(eta_max)
}

/// Iterates and gradients from the previous iteration.
///
/// `prev_grad_x_half` is `grad_x f(x_{k-1}, y_k)`, evaluated at the half step,
/// so `v_x` mixes points across iterations exactly as the alternating scheme
/// produces them.
#[derive(Debug, Clone, Default)]
pub struct BbMemory {
    prev_x: Option<Vector>,
    prev_y: Option<Vector>,
    prev_grad_y: Option<Vector>,
    prev_grad_x_half: Option<Vector>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBounds {
    pub eta_min_y: f64,
    pub eta_max_y: f64,
    pub eta_min_x: f64,
    pub eta_max_x: f64,
}

impl BbMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_valid(&self) -> bool {
        self.prev_x.is_some()
            && self.prev_y.is_some()
            && self.prev_grad_y.is_some()
            && self.prev_grad_x_half.is_some()
    }

    /// `eta_y` from `u = y_k - y_{k-1}`, `v = grad_y f(z_k) - grad_y f(z_{k-1})`;
    /// `eta_max_y` before any history exists.
    pub fn eta_y(&self, y: &Vector, grad_y: &Vector, variant: BbVariant, b: &StepBounds) -> f64 {
        match (&self.prev_y, &self.prev_grad_y) {
            (Some(py), Some(pg)) if self.is_valid() => {
                bb_step(&(y - py), &(grad_y - pg), variant, b.eta_min_y, b.eta_max_y)
            }
            _ => b.eta_max_y,
        }
    }

    /// `eta_x` from `u = x_k - x_{k-1}`,
    /// `v = grad_x f(x_k, y_{k+1}) - grad_x f(x_{k-1}, y_k)`.
    pub fn eta_x(
        &self,
        x: &Vector,
        grad_x_half: &Vector,
        variant: BbVariant,
        b: &StepBounds,
    ) -> f64 {
        match (&self.prev_x, &self.prev_grad_x_half) {
            (Some(px), Some(pg)) if self.is_valid() => bb_step(
                &(x - px),
                &(grad_x_half - pg),
                variant,
                b.eta_min_x,
                b.eta_max_x,
            ),
            _ => b.eta_max_x,
        }
    }

    /// Stores iteration `k` data for use at `k + 1`.
    pub fn record(&mut self, x: &Vector, y: &Vector, grad_y: &Vector, grad_x_half: &Vector) {
        self.prev_x = Some(x.clone());
        self.prev_y = Some(y.clone());
        self.prev_grad_y = Some(grad_y.clone());
        self.prev_grad_x_half = Some(grad_x_half.clone());
    }

    /// Both initial steps for iteration `k`, then records the iteration.
    pub fn pair_for_iteration(
        &mut self,
        x: &Vector,
        y: &Vector,
        grad_y: &Vector,
        grad_x_half: &Vector,
        cfg: &BbConfig,
        bounds: &StepBounds,
    ) -> (f64, f64) {
        let ey = self.eta_y(y, grad_y, cfg.variant_y, bounds);
        let ex = self.eta_x(x, grad_x_half, cfg.variant_x, bounds);
        self.record(x, y, grad_y, grad_x_half);
        (ey, ex)
    }
}
