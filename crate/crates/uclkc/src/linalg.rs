//! Incremental weighted Gram matrix with a maintained inverse and log-determinant.
//!
//! The online loop performs one rank-1 update per time step, so refactorizing
//! the Gram matrix at every step would cost O(d^3) per step. Instead we keep
//! the inverse via the Sherman-Morrison identity and the log-determinant via
//! the matrix determinant lemma, both O(d^2) per update, and refresh the
//! inverse from scratch periodically to bound floating-point drift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, UclkcError};

/// Dense refresh cadence for the maintained inverse.
const REFRESH_INTERVAL: u64 = 10_000;

/// Weighted ridge-regression sufficient statistics.
///
/// Holds `gram = lambda*I + sum_i w_i x_i x_i^T`, its inverse, its
/// log-determinant, and the target vector `b = sum_i w_i y_i x_i`.
#[derive(Debug, Clone)]
pub struct GramAccumulator {
    dim: usize,
    lambda: f64,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    log_det: f64,
    target: DVector<f64>,
    updates_since_refresh: u64,
}

impl GramAccumulator {
    /// Creates an accumulator initialized at `lambda * I`.
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(UclkcError::InvalidParameter("dim must be >= 1".into()));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(UclkcError::InvalidParameter(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self {
            dim,
            lambda,
            gram: DMatrix::identity(dim, dim) * lambda,
            gram_inv: DMatrix::identity(dim, dim) / lambda,
            log_det: dim as f64 * lambda.ln(),
            target: DVector::zeros(dim),
            updates_since_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// Applies `gram += w * x x^T`, `b += w * y * x`.
    ///
    /// The inverse is updated with the Sherman-Morrison identity and the
    /// log-determinant with the matrix determinant lemma.
    pub fn rank_one_update(&mut self, x: &DVector<f64>, weight: f64, y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(UclkcError::InvalidParameter(format!(
                "vector length {} does not match dim {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(UclkcError::InvalidParameter("non-finite update vector".into()));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(UclkcError::InvalidParameter(format!(
                "weight must be positive and finite, got {weight}"
            )));
        }
        if !y.is_finite() {
            return Err(UclkcError::InvalidParameter("non-finite target value".into()));
        }

        let u = x * weight.sqrt();
        let inv_u = &self.gram_inv * &u;
        let denom = 1.0 + u.dot(&inv_u);
        self.log_det += denom.ln();
        // gram_inv -= (A^-1 u)(A^-1 u)^T / (1 + u^T A^-1 u)
        self.gram_inv.ger(-1.0 / denom, &inv_u, &inv_u, 1.0);
        self.gram.ger(weight, x, x, 1.0);
        self.target.axpy(weight * y, x, 1.0);

        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= REFRESH_INTERVAL {
            self.refresh_inverse();
        }
        Ok(())
    }

    /// Recomputes the inverse and log-determinant from the exact Gram matrix.
    pub fn refresh_inverse(&mut self) {
        let chol = self
            .gram
            .clone()
            .cholesky()
            .expect("gram matrix must stay positive definite");
        self.log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        self.gram_inv = chol.inverse();
        self.updates_since_refresh = 0;
    }

    /// Weighted ridge solution `gram^-1 * b`.
    pub fn solve(&self) -> DVector<f64> {
        &self.gram_inv * &self.target
    }

    /// `sqrt(x^T gram^-1 x)`.
    pub fn mahalanobis_inv(&self, x: &DVector<f64>) -> f64 {
        let q = x.dot(&(&self.gram_inv * x));
        q.max(0.0).sqrt()
    }

    /// `sqrt(x^T gram x)`.
    pub fn mahalanobis(&self, x: &DVector<f64>) -> f64 {
        let q = x.dot(&(&self.gram * x));
        q.max(0.0).sqrt()
    }
}
