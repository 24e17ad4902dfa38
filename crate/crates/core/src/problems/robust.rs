use std::io::{BufRead, Write};

use crate::common::{SeededRng, Vector};
use crate::error::{Error, Result};
use crate::oracle::ProblemOracle;

/// Smooth biweight loss `theta^2 / (1 + theta^2)` with its first two derivatives.
pub fn biweight(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    let d = 1.0 + t2;
    (
        t2 / d,
        2.0 * theta / (d * d),
        (2.0 - 6.0 * t2) / (d * d * d),
    )
}

/// Labeled regression data. Features are stored row-major, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    features: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
}

impl RegressionData {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || labels.is_empty() || features.len() != labels.len() * dim {
            return Err(Error::Argument(format!(
                "expected {} x {dim} features for {} labels, got {} values",
                labels.len(),
                labels.len(),
                features.len()
            )));
        }
        if features.iter().chain(&labels).any(|v| !v.is_finite()) {
            return Err(Error::Argument("regression data must be finite".into()));
        }
        Ok(Self {
            features,
            labels,
            dim,
        })
    }

    pub fn from_matrix(w: &nalgebra::DMatrix<f64>, labels: Vec<f64>) -> Result<Self> {
        let features = w.transpose().as_slice().to_vec();
        Self::new(features, labels, w.ncols())
    }

    pub fn n_points(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// One line per point: the features followed by the label, no header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        for i in 0..self.n_points() {
            let record: Vec<String> = self
                .row(i)
                .iter()
                .chain(std::iter::once(&self.labels[i]))
                .map(|v| format!("{v:?}"))
                .collect();
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(input);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut dim = None;
        for (idx, rec) in r.records().enumerate() {
            let line = idx + 1;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        msg: format!("bad number {s:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() < 2 {
                return Err(Error::Parse {
                    line,
                    msg: "need at least one feature and a label".into(),
                });
            }
            let d = vals.len() - 1;
            if *dim.get_or_insert(d) != d {
                return Err(Error::Parse {
                    line,
                    msg: format!(
                        "expected {} columns, found {}",
                        dim.unwrap() + 1,
                        vals.len()
                    ),
                });
            }
            features.extend_from_slice(&vals[..d]);
            labels.push(vals[d]);
        }
        Self::new(features, labels, dim.unwrap_or(0))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `w_i ~ N(0, I_d)` then `v_i ~ N(0, 1)`, drawn in that order.
pub fn gen_synthetic(rng: &mut SeededRng, d: usize, n_points: usize) -> Result<RegressionData> {
    if d == 0 || n_points == 0 {
        return Err(Error::Argument("d and N must be at least 1".into()));
    }
    let features = (0..d * n_points).map(|_| rng.standard_normal()).collect();
    let labels = (0..n_points).map(|_| rng.standard_normal()).collect();
    RegressionData::new(features, labels, d)
}

/// Adversarially perturbed biweight regression:
///
/// `f(x, y) = (1/N) sum_i [ phi(<w_i + y_i, x> - v_i) + (rho_x/2)|x|^2 - (rho_y/2)|y_i|^2 ]`
///
/// with `y` the concatenation of the `N` perturbations `y_i`, each of length `d`.
#[derive(Debug, Clone)]
pub struct RobustRegression {
    data: RegressionData,
    rho_x: f64,
    rho_y: f64,
}

impl RobustRegression {
    pub fn new(data: RegressionData, rho_x: f64, rho_y: f64) -> Result<Self> {
        if !(rho_x >= 0.0 && rho_x.is_finite()) {
            return Err(Error::Config(format!(
                "rho_x must be nonnegative, got {rho_x}"
            )));
        }
        if !(rho_y > 2.0 && rho_y.is_finite()) {
            return Err(Error::Config(format!(
                "rho_y must exceed 2 for a positive concavity modulus, got {rho_y}"
            )));
        }
        Ok(Self { data, rho_x, rho_y })
    }

    pub fn data(&self) -> &RegressionData {
        &self.data
    }

    pub fn rho_x(&self) -> f64 {
        self.rho_x
    }

    pub fn rho_y(&self) -> f64 {
        self.rho_y
    }

    /// `(rho_y - 2) / N`.
    pub fn mu(&self) -> f64 {
        (self.rho_y - 2.0) / self.data.n_points() as f64
    }

    fn check_dims(&self, x: &Vector, y: &Vector) {
        let (n, m) = self.dims();
        assert!(
            x.len() == n && y.len() == m,
            "robust regression expects x of length {n} and y of length {m}, got {} and {}",
            x.len(),
            y.len()
        );
    }

    /// `<w_i + y_i, x> - v_i`, with `y_i` the `i`-th block of `y`.
    fn residual(&self, i: usize, x: &[f64], y_i: &[f64]) -> f64 {
        self.data
            .row(i)
            .iter()
            .zip(y_i)
            .zip(x)
            .fold(-self.data.labels[i], |r, ((w, yk), xk)| r + (w + yk) * xk)
    }
}

impl ProblemOracle for RobustRegression {
    fn dims(&self) -> (usize, usize) {
        (self.data.dim, self.data.dim * self.data.n_points())
    }

    fn value(&self, x: &Vector, y: &Vector) -> f64 {
        self.value_and_grad_y(x, y).0
    }

    fn grad_x(&self, x: &Vector, y: &Vector) -> Vector {
        self.check_dims(x, y);
        let d = self.data.dim;
        let n_inv = 1.0 / self.data.n_points() as f64;
        let xs = x.as_slice();
        let mut gx = self.rho_x * x;
        let gxs = gx.as_mut_slice();
        for (i, y_i) in y.as_slice().chunks_exact(d).enumerate() {
            let (_, dphi, _) = biweight(self.residual(i, xs, y_i));
            let s = n_inv * dphi;
            for ((g, w), yk) in gxs.iter_mut().zip(self.data.row(i)).zip(y_i) {
                *g += s * (w + yk);
            }
        }
        gx
    }

    fn grad_y(&self, x: &Vector, y: &Vector) -> Vector {
        self.value_and_grad_y(x, y).1
    }

    fn grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector) {
        self.check_dims(x, y);
        let d = self.data.dim;
        let n_inv = 1.0 / self.data.n_points() as f64;
        let xs = x.as_slice();
        let mut gx = self.rho_x * x;
        let mut gy = Vector::zeros(y.len());
        let gxs = gx.as_mut_slice();
        for (i, (y_i, gy_i)) in y
            .as_slice()
            .chunks_exact(d)
            .zip(gy.as_mut_slice().chunks_exact_mut(d))
            .enumerate()
        {
            let (_, dphi, _) = biweight(self.residual(i, xs, y_i));
            let s = n_inv * dphi;
            for (((g, w), yk), (gyk, xk)) in gxs
                .iter_mut()
                .zip(self.data.row(i))
                .zip(y_i)
                .zip(gy_i.iter_mut().zip(xs))
            {
                *g += s * (w + yk);
                *gyk = n_inv * (dphi * xk - self.rho_y * yk);
            }
        }
        (gx, gy)
    }

    fn value_and_grad_y(&self, x: &Vector, y: &Vector) -> (f64, Vector) {
        self.check_dims(x, y);
        let d = self.data.dim;
        let n_inv = 1.0 / self.data.n_points() as f64;
        let xs = x.as_slice();
        let mut loss = 0.0;
        let mut gy = Vector::zeros(y.len());
        for (i, (y_i, gy_i)) in y
            .as_slice()
            .chunks_exact(d)
            .zip(gy.as_mut_slice().chunks_exact_mut(d))
            .enumerate()
        {
            let (phi, dphi, _) = biweight(self.residual(i, xs, y_i));
            loss += phi;
            for ((gyk, xk), yk) in gy_i.iter_mut().zip(xs).zip(y_i) {
                *gyk = n_inv * (dphi * xk - self.rho_y * yk);
            }
        }
        let f = n_inv * loss + 0.5 * self.rho_x * x.norm_squared()
            - 0.5 * self.rho_y * n_inv * y.norm_squared();
        (f, gy)
    }

    fn y_dir_second(&self, x: &Vector, y: &Vector, v: &Vector) -> (Vector, Vector) {
        self.check_dims(x, y);
        assert_eq!(v.len(), y.len(), "direction must have the length of y");
        let d = self.data.dim;
        let n_inv = 1.0 / self.data.n_points() as f64;
        let xs = x.as_slice();
        let mut sx = Vector::zeros(d);
        let mut sy = Vector::zeros(y.len());
        let sxs = sx.as_mut_slice();
        let blocks = y
            .as_slice()
            .chunks_exact(d)
            .zip(v.as_slice().chunks_exact(d));
        for (i, ((y_i, v_i), sy_i)) in blocks
            .zip(sy.as_mut_slice().chunks_exact_mut(d))
            .enumerate()
        {
            let (_, dphi, ddphi) = biweight(self.residual(i, xs, y_i));
            // derivative of the residual along (0, v) is <v_i, x>
            let dr: f64 = v_i.iter().zip(xs).map(|(a, b)| a * b).sum();
            let curv = ddphi * dr;
            let w = self.data.row(i);
            for k in 0..d {
                sxs[k] += n_inv * (curv * (w[k] + y_i[k]) + dphi * v_i[k]);
                sy_i[k] = n_inv * (curv * xs[k] - self.rho_y * v_i[k]);
            }
        }
        (sx, sy)
    }

    fn mu_hint(&self) -> Option<f64> {
        Some(self.mu())
    }
}
