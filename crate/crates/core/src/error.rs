use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// An oracle returned NaN or infinity. Carries the offending point.
    #[error("non-finite {what} at point with |x|_inf = {x_inf:e}, |y|_inf = {y_inf:e}")]
    NonFinite {
        what: &'static str,
        x: Vec<f64>,
        y: Vec<f64>,
        x_inf: f64,
        y_inf: f64,
    },

    #[error(
        "line search failed after {trials} trials (last step {last_step:e}, last value {last_value:e}, threshold {threshold:e})"
    )]
    LineSearch {
        trials: usize,
        last_step: f64,
        last_value: f64,
        threshold: f64,
    },

    #[error("inner maximization stopped at residual {residual:e} after {iters} iterations")]
    Convergence { residual: f64, iters: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("not estimable: {0}")]
    NotEstimable(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn non_finite(what: &'static str, x: &[f64], y: &[f64]) -> Self {
        let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        Error::NonFinite {
            what,
            x: x.to_vec(),
            y: y.to_vec(),
            x_inf: inf(x),
            y_inf: inf(y),
        }
    }
}
