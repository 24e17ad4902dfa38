use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{select_best, Progress, RunReport, RunStatus, TraceRecord};
use crate::common::{all_finite, joint_norm, JointPoint, StopRule};
use crate::error::{Error, Result};
use crate::oracle::{ProblemOracle, RegularizedObjective};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtgdaParams {
    pub eta_x: f64,
    pub eta_y: f64,
    pub stop: StopRule,
    #[serde(default)]
    pub record_trace: bool,
}

/// Fixed-step two-timescale alternating GDA:
/// `y+ = y + eta_y grad_y f(x, y)`, then `x+ = x - eta_x grad_x f(x, y+)`.
///
/// Each iteration is charged two gradient evaluations. The gradient that
/// certifies termination at the last iterate is not charged, so a run of `T`
/// iterations reports exactly `2T`.
pub fn run_ttgda(
    oracle: &dyn ProblemOracle,
    params: &TtgdaParams,
    z0: &JointPoint,
) -> Result<RunReport> {
    if !(params.eta_x > 0.0
        && params.eta_y > 0.0
        && params.eta_x.is_finite()
        && params.eta_y.is_finite())
    {
        return Err(Error::Config(format!(
            "step sizes must be positive, got eta_x = {}, eta_y = {}",
            params.eta_x, params.eta_y
        )));
    }
    params.stop.validate()?;
    // only used for its counters; the merit is never evaluated
    let mut reg = RegularizedObjective::new(oracle, 1.0)?;
    let mut p = Progress::new(oracle, z0, params.record_trace)?;
    let outcome = iterate(&mut reg, params, &mut p);
    let counters = reg.counters();
    p.conclude(oracle, "TTGDA", counters, outcome)
}

fn iterate(
    reg: &mut RegularizedObjective<'_>,
    params: &TtgdaParams,
    p: &mut Progress,
) -> Result<RunStatus> {
    loop {
        let (gx, gy) = reg.oracle().grad(&p.x, &p.y);
        if !(all_finite(&gx) && all_finite(&gy)) {
            return Err(Error::non_finite(
                "gradient",
                p.x.as_slice(),
                p.y.as_slice(),
            ));
        }
        let grad_norm = joint_norm(&gx, &gy);
        let mut rec = TraceRecord {
            k: p.iters,
            merit: None,
            merit_avg: None,
            grad_norm,
            eta_y: None,
            eta_x: None,
            beta: None,
        };
        if let Some(status) = p.stop_reason(&params.stop, grad_norm) {
            p.push(rec);
            return Ok(status);
        }
        reg.counters_mut().g_evals += 1;
        let y_next = &p.y + params.eta_y * gy;
        let gx_half = reg.grad_x_f(&p.x, &y_next)?;
        p.x -= params.eta_x * gx_half;
        p.y = y_next;
        p.note_steps(params.eta_y, params.eta_x);
        rec.eta_y = Some(params.eta_y);
        rec.eta_x = Some(params.eta_x);
        p.push(rec);
        p.iters += 1;
        if p.diverged() {
            return Ok(RunStatus::Diverged);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub eta_y: f64,
    pub eta_x: f64,
    pub report: RunReport,
    /// Stopped early because a run earlier in the grid had already
    /// converged in fewer iterations.
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Every combination, in input order.
    pub runs: Vec<GridRun>,
    /// Index into `runs` of the selected run.
    pub best: usize,
}

impl GridResult {
    pub fn best_run(&self) -> &GridRun {
        &self.runs[self.best]
    }
}

/// Runs started together by [`tune_step_pairs`]. Fixed, so the pruning
/// budget (and hence every report) does not depend on the thread count.
const GRID_WAVE: usize = 4;

/// Runs `run(eta_y, eta_x, stop)` for every pair, in parallel waves, and
/// selects as [`select_best`] does.
///
/// Once some run has converged in `K` iterations, later waves are capped at
/// `K` iterations: they can no longer win, and a run that ties still
/// converges within the cap, so the selection is unaffected.
pub fn tune_step_pairs<F>(pairs: &[(f64, f64)], stop: &StopRule, run: F) -> Result<GridResult>
where
    F: Fn(f64, f64, &StopRule) -> Result<RunReport> + Sync,
{
    if pairs.is_empty() {
        return Err(Error::Config("step grid is empty".into()));
    }
    let mut runs = Vec::with_capacity(pairs.len());
    let mut best_iters: Option<usize> = None;
    for wave in pairs.chunks(GRID_WAVE) {
        let mut capped = stop.clone();
        capped.max_iters = best_iters.map_or(stop.max_iters, |k| k.min(stop.max_iters));
        let reports = wave
            .par_iter()
            .map(|&(eta_y, eta_x)| run(eta_y, eta_x, &capped))
            .collect::<Result<Vec<_>>>()?;
        for (&(eta_y, eta_x), report) in wave.iter().zip(reports) {
            if report.status.is_converged() {
                best_iters = Some(best_iters.map_or(report.iters, |k| k.min(report.iters)));
            }
            let pruned =
                capped.max_iters < stop.max_iters && report.status == RunStatus::MaxIterations;
            runs.push(GridRun {
                eta_y,
                eta_x,
                report,
                pruned,
            });
        }
    }
    let reports: Vec<RunReport> = runs.iter().map(|r| r.report.clone()).collect();
    let best = select_best(&reports)
        .ok_or_else(|| Error::Numeric(format!("all {} step combinations failed", runs.len())))?;
    Ok(GridResult { runs, best })
}

/// Runs TTGDA on every `(eta_y, theta * eta_y)` pair and keeps the converged
/// run with the fewest iterations (or, failing that, the budget-limited run
/// with the smallest final gradient).
pub fn ttgda_grid_search(
    oracle: &dyn ProblemOracle,
    eta_y_set: &[f64],
    theta_set: &[f64],
    stop: &StopRule,
    z0: &JointPoint,
    record_trace: bool,
) -> Result<GridResult> {
    if eta_y_set.is_empty() || theta_set.is_empty() {
        return Err(Error::Config(
            "TTGDA grid needs nonempty step and ratio sets".into(),
        ));
    }
    let pairs: Vec<(f64, f64)> = eta_y_set
        .iter()
        .flat_map(|&ey| theta_set.iter().map(move |&t| (ey, t * ey)))
        .collect();
    tune_step_pairs(&pairs, stop, |eta_y, eta_x, stop| {
        let params = TtgdaParams {
            eta_x,
            eta_y,
            stop: stop.clone(),
            record_trace,
        };
        run_ttgda(oracle, &params, z0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticNCSC;

    fn scalar() -> QuadraticNCSC {
        QuadraticNCSC::scalar(-0.5, 1.0, 1.0, 1.0).unwrap()
    }

    fn params(eta_y: f64, eta_x: f64) -> TtgdaParams {
        TtgdaParams {
            eta_x,
            eta_y,
            stop: StopRule::new(1e-9, 5000),
            record_trace: false,
        }
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        let q = scalar();
        let z0 = JointPoint::from_slices(&[1.0], &[0.0]).unwrap();
        let r = run_ttgda(&q, &params(0.5, 0.1), &z0).unwrap();
        assert_eq!(r.status, RunStatus::Converged);
        assert!(r.final_point().unwrap().distance(&q.solution().unwrap()) <= 1e-6);
        assert_eq!(r.g_evals, 2 * r.iters as u64);
        assert_eq!((r.f_evals, r.hvp_evals), (0, 0));
    }

    #[test]
    fn large_x_step_diverges() {
        // with y tracking x exactly the x-map has slope 1 - 0.5 eta_x
        let q = scalar();
        let z0 = JointPoint::from_slices(&[1.0], &[0.0]).unwrap();
        let r = run_ttgda(&q, &params(0.5, 20.0), &z0).unwrap();
        assert_eq!(r.status, RunStatus::Diverged);
        assert_eq!(r.status.exit_code(), 3);
    }

    #[test]
    fn budget_counts_two_gradients_per_iteration() {
        let q = scalar();
        let z0 = JointPoint::from_slices(&[1.0], &[0.0]).unwrap();
        let mut prm = params(0.5, 0.1);
        prm.stop.max_iters = 7;
        let r = run_ttgda(&q, &prm, &z0).unwrap();
        assert_eq!(
            (r.status, r.iters, r.g_evals),
            (RunStatus::MaxIterations, 7, 14)
        );
    }

    #[test]
    fn grid_covers_every_combination() {
        let q = scalar();
        let z0 = JointPoint::from_slices(&[1.0], &[0.0]).unwrap();
        let stop = StopRule::new(1e-9, 20_000);
        let g = ttgda_grid_search(
            &q,
            &[0.001, 0.005, 0.01, 0.05, 0.1],
            &[0.001, 0.01, 0.1],
            &stop,
            &z0,
            false,
        )
        .unwrap();
        assert_eq!(g.runs.len(), 15);
        assert_eq!(g.runs[1].eta_x, 0.001 * 0.01);
        for run in &g.runs {
            assert_eq!(run.report.g_evals, 2 * run.report.iters as u64);
        }
        let best = g.best_run();
        assert!(g
            .runs
            .iter()
            .filter(|r| r.report.status.is_converged())
            .all(|r| r.report.iters >= best.report.iters));
    }

    #[test]
    fn singleton_grid_equals_direct_run() {
        let q = scalar();
        let z0 = JointPoint::from_slices(&[1.0], &[0.0]).unwrap();
        let stop = StopRule::new(1e-9, 5000);
        let g = ttgda_grid_search(&q, &[0.5], &[0.2], &stop, &z0, false).unwrap();
        let r = run_ttgda(&q, &params(0.5, 0.1), &z0).unwrap();
        assert_eq!(g.runs.len(), 1);
        assert_eq!(g.best_run().report.x, r.x);
        assert_eq!(g.best_run().report.iters, r.iters);
    }

    #[test]
    fn grid_skips_divergent_combination() {
        let q = scalar();
        let z0 = JointPoint::from_slices(&[1.0], &[0.0]).unwrap();
        let stop = StopRule::new(1e-9, 5000);
        let g = ttgda_grid_search(&q, &[0.5], &[40.0, 0.2], &stop, &z0, false).unwrap();
        assert_eq!(g.runs[0].report.status, RunStatus::Diverged);
        assert_eq!(g.best, 1);
        let all_bad = ttgda_grid_search(&q, &[0.5], &[40.0], &stop, &z0, false);
        assert!(matches!(all_bad, Err(Error::Numeric(_))));
    }

    #[test]
    fn pruning_keeps_the_unpruned_winner() {
        let q = scalar();
        let z0 = JointPoint::from_slices(&[1.0], &[0.0]).unwrap();
        let stop = StopRule::new(1e-9, 20_000);
        let eta_y = [0.01, 0.05, 0.1, 0.5, 0.9];
        let theta = [0.01, 0.1, 0.2];
        let g = ttgda_grid_search(&q, &eta_y, &theta, &stop, &z0, false).unwrap();
        let mut best: Option<(usize, usize)> = None;
        for (i, run) in g.runs.iter().enumerate() {
            let mut p = params(run.eta_y, run.eta_x);
            p.stop = stop.clone();
            let full = run_ttgda(&q, &p, &z0).unwrap();
            if full.status.is_converged() && best.is_none_or(|(_, k)| full.iters < k) {
                best = Some((i, full.iters));
            }
            if !run.pruned {
                assert_eq!(run.report.iters, full.iters);
            }
        }
        assert!(g.runs.iter().any(|r| r.pruned));
        assert_eq!(Some((g.best, g.best_run().report.iters)), best);
    }
}
