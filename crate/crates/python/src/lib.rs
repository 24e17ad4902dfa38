//! Python bindings. Configs and reports cross the boundary as JSON text so
//! the Python side sees exactly the schema the `minimax` CLI reads.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ncsc::diagnostics;
use ncsc::experiment::{self, ExperimentConfig, VerifyConfig};
use ncsc::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Argument(_) | Error::Config(_) | Error::Parse { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_json(text: serde_json::Result<String>) -> PyResult<String> {
    text.map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Runs every solver of a JSON experiment config and returns the run
/// reports as a JSON array, in config order.
#[pyfunction]
#[pyo3(signature = (config, record_trace = false))]
fn run_experiment_json(py: Python<'_>, config: &str, record_trace: bool) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config).map_err(to_py)?;
    let rows = py
        .detach(|| experiment::run_experiment(&cfg, record_trace))
        .map_err(to_py)?;
    let reports: Vec<_> = rows.into_iter().map(|r| r.report).collect();
    to_json(serde_json::to_string(&reports))
}

/// Runs a JSON experiment config and returns the CSV results table.
#[pyfunction]
fn results_csv(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config).map_err(to_py)?;
    let rows = py
        .detach(|| experiment::run_experiment(&cfg, false))
        .map_err(to_py)?;
    let mut buf = Vec::new();
    experiment::write_results(&mut buf, &rows).map_err(to_py)?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Runs the derivative, inequality and second-order checks; returns the
/// JSON report.
#[pyfunction]
#[pyo3(signature = (seed = 1, lemma_samples = 1000))]
fn verify_json(py: Python<'_>, seed: u64, lemma_samples: usize) -> PyResult<String> {
    let cfg = VerifyConfig {
        seed,
        lemma_samples,
        ..Default::default()
    };
    let report = py
        .detach(|| experiment::run_verification(&cfg))
        .map_err(to_py)?;
    to_json(serde_json::to_string(&report))
}

/// Synthetic regression data as headerless CSV: `d` features then the label.
#[pyfunction]
fn gen_data_csv(seed: u64, d: usize, n: usize) -> PyResult<String> {
    let mut buf = Vec::new();
    experiment::gen_data(&mut buf, seed, d, n).map_err(to_py)?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Bounds on the stationarity of one formulation implied by an `eps`
/// stationary point of the other: `(minimax -> regularized, regularized -> minimax)`.
#[pyfunction]
fn transfer_bounds(eps: f64, beta: f64, mu: f64, l: f64) -> PyResult<(f64, f64)> {
    let b = diagnostics::transfer_bounds(eps, beta, mu, l).map_err(to_py)?;
    Ok((b.bound_min_to_rm, b.bound_rm_to_min))
}

#[pymodule]
fn ncsc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_experiment_json, m)?)?;
    m.add_function(wrap_pyfunction!(results_csv, m)?)?;
    m.add_function(wrap_pyfunction!(verify_json, m)?)?;
    m.add_function(wrap_pyfunction!(gen_data_csv, m)?)?;
    m.add_function(wrap_pyfunction!(transfer_bounds, m)?)?;
    Ok(())
}
