//! Solvers and diagnostics for smooth nonconvex-strongly-concave minimax
//! problems `min_x max_y f(x, y)`, built on the regularized merit
//! `h_beta(x, y) = f(x, y) + (beta / 2) |grad_y f(x, y)|^2`.
//!
//! Stationary points of `h_beta` (for `beta > 1/mu`) are exactly the
//! first-order minimax points of `f`, so the alternating GDA schemes here
//! backtrack on `h_beta` instead of solving an inner maximization.

// `!(x > 0.0)` is used on purpose throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bb;
pub mod common;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod linesearch;
pub mod oracle;
pub mod problems;
pub mod solvers;

pub use common::{
    EvalCounters, JointPoint, LineSearchConfig, SeededRng, StopRule, TauSchedule, Vector,
};
pub use error::{Error, Result};
pub use oracle::{ProblemOracle, RegularizedObjective};
pub use solvers::{RunReport, RunStatus};
