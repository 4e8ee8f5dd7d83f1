//! The two-state hard-to-learn benchmark instance and its closed-form optimum.
//!
//! State `x0` pays no reward and escapes to `x1` with probability
//! `delta + <a, theta>`; state `x1` pays reward 1 and falls back to `x0` with
//! probability `delta`. Actions are sign vectors in `{-1, +1}^(d-1)` and the
//! unknown direction `theta` decides which action maximizes the escape rate.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UclkcError};
use crate::mdp::{FeatureMap, LinearMixtureMDP, OracleSolution};

/// Parameters of the benchmark instance.
///
/// The gap `Delta` is `scale * (d-1) / (45 * sqrt(2 T ln2 / (5 delta_conf)))`;
/// `scale = 1` is the lower-bound construction, `scale = 3` the experiment
/// configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardInstanceParams {
    pub dim: usize,
    /// Recovery probability `delta` of the x1 -> x0 transition.
    pub delta_mdp: f64,
    pub horizon: usize,
    /// Confidence parameter entering the formula for `Delta`.
    pub delta_conf: f64,
    pub scale: f64,
    /// Signs of the coordinates of `theta`; `+1` or `-1` each.
    pub sign_vector: Vec<i8>,
    /// Optimality gap `Delta`; derived unless pinned explicitly.
    delta_gap: f64,
}

impl HardInstanceParams {
    pub fn new(
        dim: usize,
        delta_mdp: f64,
        horizon: usize,
        delta_conf: f64,
        scale: f64,
        sign_vector: Option<Vec<i8>>,
    ) -> Result<Self> {
        let gap = scale * (dim as f64 - 1.0)
            / (45.0 * ((2.0 * horizon as f64 * std::f64::consts::LN_2) / (5.0 * delta_conf)).sqrt());
        Self::build_params(dim, delta_mdp, horizon, delta_conf, scale, sign_vector, gap)
    }

    /// Builds params with `Delta` pinned directly instead of derived from `T`.
    pub fn with_gap(
        dim: usize,
        delta_mdp: f64,
        delta_gap: f64,
        sign_vector: Option<Vec<i8>>,
    ) -> Result<Self> {
        Self::build_params(dim, delta_mdp, 0, 1.0, 1.0, sign_vector, delta_gap)
    }

    fn build_params(
        dim: usize,
        delta_mdp: f64,
        horizon: usize,
        delta_conf: f64,
        scale: f64,
        sign_vector: Option<Vec<i8>>,
        delta_gap: f64,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(UclkcError::InvalidParameter("dim must be >= 2".into()));
        }
        if !(delta_mdp > 0.0 && delta_mdp <= 0.5) {
            return Err(UclkcError::InvalidParameter(format!(
                "delta must be in (0, 1/2], got {delta_mdp}"
            )));
        }
        if !(delta_gap > 0.0) || !delta_gap.is_finite() {
            return Err(UclkcError::InvalidParameter(format!(
                "derived Delta = {delta_gap} is not positive"
            )));
        }
        let sign_vector = sign_vector.unwrap_or_else(|| vec![1; dim - 1]);
        if sign_vector.len() != dim - 1 || sign_vector.iter().any(|&s| s != 1 && s != -1) {
            return Err(UclkcError::InvalidParameter(
                "sign vector must have d-1 entries in {-1, +1}".into(),
            ));
        }
        let params = Self {
            dim,
            delta_mdp,
            horizon,
            delta_conf,
            scale,
            sign_vector,
            delta_gap,
        };
        // every action must keep delta + <a, theta> inside [0, 1]
        if params.delta_gap > delta_mdp || params.delta_gap > 1.0 - delta_mdp {
            return Err(UclkcError::InvalidParameter(format!(
                "Delta = {} makes some transition probability leave [0, 1]",
                params.delta_gap
            )));
        }
        Ok(params)
    }

    pub fn delta_gap(&self) -> f64 {
        self.delta_gap
    }

    pub fn alpha(&self) -> f64 {
        (self.delta_gap / ((self.dim as f64 - 1.0) * (1.0 + self.delta_gap))).sqrt()
    }

    pub fn beta(&self) -> f64 {
        (1.0 / (1.0 + self.delta_gap)).sqrt()
    }

    pub fn num_actions(&self) -> usize {
        1 << (self.dim - 1)
    }

    /// Coordinate `j` of action `idx` under lexicographic enumeration of
    /// `{-1, +1}^(d-1)` with `-1 < +1` (leftmost coordinate most significant).
    pub fn action_coord(&self, idx: usize, j: usize) -> f64 {
        if (idx >> (self.dim - 2 - j)) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// `theta` with coordinates `sign_j * Delta / (d-1)`.
    pub fn theta(&self) -> Vec<f64> {
        let mag = self.delta_gap / (self.dim as f64 - 1.0);
        self.sign_vector.iter().map(|&s| s as f64 * mag).collect()
    }

    /// `<a, theta>` for action index `idx`; equals `Delta` for the best action.
    pub fn action_alignment(&self, idx: usize) -> f64 {
        let theta = self.theta();
        (0..self.dim - 1)
            .map(|j| self.action_coord(idx, j) * theta[j])
            .sum()
    }

    /// Index of the unique optimal action (coordinate signs matching `theta`).
    pub fn best_action(&self) -> usize {
        let mut idx = 0;
        for (j, &s) in self.sign_vector.iter().enumerate() {
            if s == 1 {
                idx |= 1 << (self.dim - 2 - j);
            }
        }
        idx
    }
}

/// Builds the benchmark as a `LinearMixtureMDP` with core `(theta/alpha, 1/beta)`.
pub fn build(params: &HardInstanceParams) -> Result<LinearMixtureMDP> {
    let d = params.dim;
    let na = params.num_actions();
    let alpha = params.alpha();
    let beta = params.beta();
    let delta = params.delta_mdp;
    let theta = params.theta();

    let mut theta_bar = vec![0.0; d];
    for j in 0..d - 1 {
        theta_bar[j] = theta[j] / alpha;
    }
    theta_bar[d - 1] = 1.0 / beta;

    let mut phi = Vec::with_capacity(2 * na * 2);
    for s in 0..2 {
        for a in 0..na {
            for s_next in 0..2 {
                let mut v = vec![0.0; d];
                match (s, s_next) {
                    (0, 0) => {
                        for j in 0..d - 1 {
                            v[j] = -alpha * params.action_coord(a, j);
                        }
                        v[d - 1] = beta * (1.0 - delta);
                    }
                    (0, 1) => {
                        for j in 0..d - 1 {
                            v[j] = alpha * params.action_coord(a, j);
                        }
                        v[d - 1] = beta * delta;
                    }
                    (1, 0) => v[d - 1] = beta * delta,
                    (1, 1) => v[d - 1] = beta * (1.0 - delta),
                    _ => unreachable!(),
                }
                phi.push(v);
            }
        }
    }

    let mut reward = Vec::with_capacity(2 * na);
    reward.extend(std::iter::repeat(0.0).take(na));
    reward.extend(std::iter::repeat(1.0).take(na));

    let b_theta = theta_bar.iter().map(|x| x * x).sum::<f64>().sqrt() * (1.0 + 1e-12);
    let features = FeatureMap::new(2, na, d, phi)?;
    LinearMixtureMDP::new(features, theta_bar, reward, b_theta)
}

/// Closed-form optimal quantities of the benchmark.
pub fn analytic_optimal(params: &HardInstanceParams) -> OracleSolution {
    let delta = params.delta_mdp;
    let gap = params.delta_gap;
    let denom = 2.0 * delta + gap;
    let na = params.num_actions();
    let bias = vec![0.0, 1.0 / denom];
    let mut q_bias = Vec::with_capacity(2 * na);
    for a in 0..na {
        q_bias.push((params.action_alignment(a) - gap) / denom);
    }
    for _ in 0..na {
        q_bias.push(1.0 / denom);
    }
    OracleSolution {
        j_star: (delta + gap) / denom,
        span: 1.0 / denom,
        bias,
        q_bias,
        residual: 0.0,
    }
}

/// Stationary distribution `(mu(x0), mu(x1))` under the optimal policy.
pub fn analytic_stationary(params: &HardInstanceParams) -> (f64, f64) {
    let delta = params.delta_mdp;
    let gap = params.delta_gap;
    let denom = 2.0 * delta + gap;
    (delta / denom, (delta + gap) / denom)
}
