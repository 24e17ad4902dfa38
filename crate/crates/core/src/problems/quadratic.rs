use nalgebra::DMatrix;

use crate::common::{standard_normal_vector, JointPoint, SeededRng, Vector};
use crate::error::{Error, Result};
use crate::oracle::ProblemOracle;

/// `f(x, y) = 0.5 x'Ax + x'By - (mu/2)|y|^2 + c'x`.
///
/// `A` may be indefinite; `A + BB'/mu` must be positive definite, which makes
/// `Phi(x) = 0.5 x'(A + BB'/mu)x + c'x` strongly convex with a unique
/// minimax point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticNCSC {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    mu: f64,
    c: Vector,
}

impl QuadraticNCSC {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, mu: f64, c: Vector) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.nrows() != n || b.ncols() == 0 || c.len() != n {
            return Err(Error::Argument(format!(
                "quadratic needs A n x n, B n x m, c of length n; got A {}x{}, B {}x{}, c {}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.len()
            )));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Config(format!("mu must be positive, got {mu}")));
        }
        let asym = (&a - a.transpose()).amax();
        if asym > 1e-12 * (1.0 + a.amax()) {
            return Err(Error::Config(format!(
                "A must be symmetric (asymmetry {asym:e})"
            )));
        }
        let q = Self { a, b, mu, c };
        if q.phi_hessian().cholesky().is_none() {
            return Err(Error::Config("A + BB'/mu must be positive definite".into()));
        }
        Ok(q)
    }

    /// The one-dimensional instance `f = (a/2)x^2 + bxy - (mu/2)y^2 + cx`.
    pub fn scalar(a: f64, b: f64, mu: f64, c: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            mu,
            Vector::from_element(1, c),
        )
    }

    /// Random instance with `A + BB'/mu` having eigenvalues in `[0.5, 2]`,
    /// `mu` in `[0.5, 2]` and Gaussian `B`, `c`. `A` itself is usually
    /// indefinite.
    pub fn random(rng: &mut SeededRng, n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Argument("dimensions must be positive".into()));
        }
        let mu = 0.5 + 1.5 * rng.uniform();
        let g = DMatrix::from_iterator(n, n, standard_normal_vector(rng, n * n)?.iter().copied());
        let qmat = g.qr().q();
        let eig = DMatrix::from_diagonal(&Vector::from_fn(n, |_, _| 0.5 + 1.5 * rng.uniform()));
        let target = &qmat * eig * qmat.transpose();
        let target = 0.5 * (&target + target.transpose());
        // entries of variance 1/(n + m) keep |B| = O(1) across sizes
        let b_scale = 1.0 / ((n + m) as f64).sqrt();
        let b = DMatrix::from_iterator(
            n,
            m,
            standard_normal_vector(rng, n * m)?
                .iter()
                .map(|v| v * b_scale),
        );
        let a = &target - &b * b.transpose() / mu;
        let a = 0.5 * (&a + a.transpose());
        let c = standard_normal_vector(rng, n)?;
        Self::new(a, b, mu, c)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    /// `A + BB'/mu`, the Hessian of `Phi`.
    pub fn phi_hessian(&self) -> DMatrix<f64> {
        &self.a + &self.b * self.b.transpose() / self.mu
    }

    pub fn phi_value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(self.phi_hessian() * x)) + self.c.dot(x)
    }

    /// `x* = -(A + BB'/mu)^{-1} c`, `y* = B'x*/mu`.
    pub fn solution(&self) -> Result<JointPoint> {
        let chol = self
            .phi_hessian()
            .cholesky()
            .ok_or_else(|| Error::Config("A + BB'/mu is singular or indefinite".into()))?;
        let x = -chol.solve(&self.c);
        let y = self.b.transpose() * &x / self.mu;
        JointPoint::new(x, y)
    }
}

impl ProblemOracle for QuadraticNCSC {
    fn dims(&self) -> (usize, usize) {
        (self.b.nrows(), self.b.ncols())
    }

    fn value(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * x.dot(&(&self.a * x)) + x.dot(&(&self.b * y)) - 0.5 * self.mu * y.norm_squared()
            + self.c.dot(x)
    }

    fn grad_x(&self, x: &Vector, y: &Vector) -> Vector {
        &self.a * x + &self.b * y + &self.c
    }

    fn grad_y(&self, x: &Vector, y: &Vector) -> Vector {
        self.b.tr_mul(x) - self.mu * y
    }

    fn y_dir_second(&self, _x: &Vector, _y: &Vector, v: &Vector) -> (Vector, Vector) {
        (&self.b * v, -self.mu * v)
    }

    fn mu_hint(&self) -> Option<f64> {
        Some(self.mu)
    }
}
