//! Confidence radii, the variance estimator, the error slack, and the
//! exploration weight used by the online loop.
//!
//! All logarithms are natural. Radii are evaluated at the 1-based global step
//! index of the step about to execute.

use nalgebra::DVector;

use crate::error::{Result, UclkcError};
use crate::linalg::GramAccumulator;

/// Constants shared by the three confidence radii.
#[derive(Debug, Clone, Copy)]
pub struct RadiusParams {
    pub d: usize,
    pub lambda: f64,
    pub delta: f64,
    pub b_theta: f64,
    pub h: f64,
    /// Multiplier on all three radii. The analysis fixes it to 1; the
    /// experiment harness exposes it because the theoretical constants are
    /// vacuously large at simulation scale.
    pub radius_scale: f64,
}

impl RadiusParams {
    pub fn new(d: usize, lambda: f64, delta: f64, b_theta: f64, h: f64) -> Result<Self> {
        if d == 0 || !(lambda > 0.0) || !(delta > 0.0 && delta < 1.0) || !(b_theta > 0.0) || !(h > 0.0)
        {
            return Err(UclkcError::InvalidParameter(
                "radius parameters must be positive with delta in (0, 1)".into(),
            ));
        }
        Ok(Self {
            d,
            lambda,
            delta,
            b_theta,
            h,
            radius_scale: 1.0,
        })
    }

    pub fn with_radius_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(UclkcError::InvalidParameter(
                "radius_scale must be positive".into(),
            ));
        }
        self.radius_scale = scale;
        Ok(self)
    }

    #[inline]
    fn log_conf(&self, t: usize) -> f64 {
        (4.0 * (t as f64) * (t as f64) / self.delta).ln()
    }
}

/// Radius of the main ellipsoid around the weighted ridge estimate.
pub fn beta_hat(t: usize, p: &RadiusParams) -> f64 {
    let d = p.d as f64;
    let lc = p.log_conf(t);
    p.radius_scale
        * (8.0 * (d * (1.0 + t as f64 / p.lambda).ln() * lc).sqrt()
            + 4.0 * d.sqrt() * lc
            + p.lambda.sqrt() * p.b_theta)
}

/// Radius of the auxiliary ellipsoid around the weighted estimate, scaled by d.
pub fn beta_check(t: usize, p: &RadiusParams) -> f64 {
    let d = p.d as f64;
    let lc = p.log_conf(t);
    p.radius_scale
        * (8.0 * d * ((1.0 + t as f64 / p.lambda).ln() * lc).sqrt()
            + 4.0 * d.sqrt() * lc
            + p.lambda.sqrt() * p.b_theta)
}

/// Radius of the auxiliary ellipsoid around the unweighted estimate.
pub fn beta_tilde(t: usize, p: &RadiusParams) -> f64 {
    let d = p.d as f64;
    let h2 = p.h * p.h;
    let lc = p.log_conf(t);
    p.radius_scale
        * (8.0 * h2 * (d * (1.0 + t as f64 * h2 / (d * p.lambda)).ln() * lc).sqrt()
            + 4.0 * h2 * lc
            + p.lambda.sqrt() * p.b_theta)
}

#[inline]
fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// Plug-in variance estimate with both inner products projected onto their
/// valid ranges before combination. May be negative.
pub fn variance_estimate(
    phi_w2: &DVector<f64>,
    phi_w: &DVector<f64>,
    theta_tilde: &DVector<f64>,
    theta_hat: &DVector<f64>,
    h: f64,
) -> f64 {
    let second = clamp(phi_w2.dot(theta_tilde), 0.0, h * h);
    let first = clamp(phi_w.dot(theta_hat), 0.0, h);
    second - first * first
}

/// Upper bound on the variance-estimation error, in `[0, 2 H^2]`.
pub fn error_bound(
    phi_w: &DVector<f64>,
    phi_w2: &DVector<f64>,
    gram_hat: &GramAccumulator,
    gram_tilde: &GramAccumulator,
    t: usize,
    p: &RadiusParams,
) -> f64 {
    let h2 = p.h * p.h;
    let first = (2.0 * p.h * beta_check(t, p) * gram_hat.mahalanobis_inv(phi_w)).min(h2);
    let second = (beta_tilde(t, p) * gram_tilde.mahalanobis_inv(phi_w2)).min(h2);
    first + second
}

/// Exploration weight `sqrt(max(H^2/d, var + e))`; at least `H/sqrt(d)`.
pub fn sigma_bar(var_est: f64, e_t: f64, h: f64, d: usize) -> f64 {
    (var_est + e_t).max(h * h / d as f64).sqrt()
}

/// Ellipsoid snapshot frozen at an episode start.
#[derive(Debug, Clone)]
pub struct ConfidenceSet {
    pub center: DVector<f64>,
    pub gram_snapshot: GramAccumulator,
    pub radius: f64,
}

impl ConfidenceSet {
    pub fn new(center: DVector<f64>, gram_snapshot: GramAccumulator, radius: f64) -> Self {
        Self {
            center,
            gram_snapshot,
            radius,
        }
    }

    /// Ellipsoid membership only; feasibility of the induced transition rows
    /// is handled by the planner.
    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        self.gram_snapshot.mahalanobis(&(theta - &self.center)) <= self.radius
    }
}
