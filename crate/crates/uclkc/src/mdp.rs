//! Finite tabular linear mixture MDP model with exact planning oracles.
//!
//! The transition kernel is `P(s'|s,a) = <phi(s,a,s'), theta*>` for a known
//! feature map `phi` and an unknown core vector `theta*`. States and actions
//! are dense indices; all integrals over next states are finite sums.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UclkcError};

const ROW_SUM_TOL: f64 = 1e-12;

/// Feature map `phi(s, a, s') in R^d` over state-action-state triples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMap {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    /// Flattened `[(s * A + a) * S + s'] -> d`-vector.
    phi: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        dim: usize,
        phi: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || dim == 0 {
            return Err(UclkcError::InvalidModel(
                "state, action, and feature dimensions must be positive".into(),
            ));
        }
        if phi.len() != num_states * num_actions * num_states {
            return Err(UclkcError::InvalidModel(format!(
                "expected {} feature vectors, got {}",
                num_states * num_actions * num_states,
                phi.len()
            )));
        }
        for v in &phi {
            if v.len() != dim {
                return Err(UclkcError::InvalidModel(format!(
                    "feature vector of length {}, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(UclkcError::InvalidModel("non-finite feature entry".into()));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            dim,
            phi,
        })
    }

    #[inline]
    pub fn phi(&self, s: usize, a: usize, s_next: usize) -> &[f64] {
        &self.phi[(s * self.num_actions + a) * self.num_states + s_next]
    }
}

/// Linear mixture MDP with known deterministic rewards in `[0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearMixtureMDP {
    pub features: FeatureMap,
    pub theta_star: Vec<f64>,
    /// `reward[s * A + a]`.
    pub reward: Vec<f64>,
    pub b_theta: f64,
}

impl LinearMixtureMDP {
    pub fn new(
        features: FeatureMap,
        theta_star: Vec<f64>,
        reward: Vec<f64>,
        b_theta: f64,
    ) -> Result<Self> {
        let mdp = Self {
            features,
            theta_star,
            reward,
            b_theta,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.features.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.features.num_actions
    }

    pub fn dim(&self) -> usize {
        self.features.dim
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions() + a]
    }

    /// Re-checks the model invariants; for instances built by deserialization.
    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.theta_star.len() != self.dim() {
            return Err(UclkcError::InvalidModel("theta* dimension mismatch".into()));
        }
        if self.reward.len() != self.num_states() * self.num_actions() {
            return Err(UclkcError::InvalidModel("reward table size mismatch".into()));
        }
        for &r in &self.reward {
            if !(0.0..=1.0).contains(&r) {
                return Err(UclkcError::InvalidModel(format!(
                    "reward {r} outside [0, 1]"
                )));
            }
        }
        let norm = self.theta_star.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > self.b_theta * (1.0 + 1e-9) {
            return Err(UclkcError::InvalidModel(format!(
                "||theta*||_2 = {norm} exceeds B_theta = {}",
                self.b_theta
            )));
        }
        for s in 0..self.num_states() {
            for a in 0..self.num_actions() {
                let mut sum = 0.0;
                for s_next in 0..self.num_states() {
                    let p = self.transition_prob(s, a, s_next)?;
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(UclkcError::InvalidModel(format!(
                        "transition row ({s}, {a}) sums to {sum}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `phi_F(s, a) = sum_{s'} phi(s, a, s') F(s')`.
    pub fn phi_f(&self, s: usize, a: usize, f: &[f64]) -> DVector<f64> {
        let d = self.dim();
        let mut out = DVector::zeros(d);
        for (s_next, &weight) in f.iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            let phi = self.features.phi(s, a, s_next);
            for i in 0..d {
                out[i] += phi[i] * weight;
            }
        }
        out
    }

    /// `P(s'|s,a) = <phi(s,a,s'), theta*>`, validated against `[0, 1]`.
    pub fn transition_prob(&self, s: usize, a: usize, s_next: usize) -> Result<f64> {
        let p = dot(self.features.phi(s, a, s_next), &self.theta_star);
        if !(-ROW_SUM_TOL..=1.0 + ROW_SUM_TOL).contains(&p) {
            return Err(UclkcError::InvalidModel(format!(
                "transition probability {p} for ({s}, {a}, {s_next}) outside [0, 1]"
            )));
        }
        Ok(p)
    }

    /// Transition row with negative round-off clamped to zero and renormalized.
    pub fn transition_row(&self, s: usize, a: usize) -> Vec<f64> {
        let mut row: Vec<f64> = (0..self.num_states())
            .map(|s_next| dot(self.features.phi(s, a, s_next), &self.theta_star).max(0.0))
            .collect();
        let sum: f64 = row.iter().sum();
        for p in &mut row {
            *p /= sum;
        }
        row
    }

    /// Samples the next state by inverse-CDF on the transition row.
    pub fn sample_next<R: Rng>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let row = self.transition_row(s, a);
        let u: f64 = rng.gen();
        let mut cdf = 0.0;
        for (s_next, &p) in row.iter().enumerate() {
            cdf += p;
            if u < cdf {
                return s_next;
            }
        }
        self.num_states() - 1
    }

    /// `[P F](s, a)` by direct summation over next states.
    pub fn expect_next(&self, s: usize, a: usize, f: &[f64]) -> f64 {
        let row = self.transition_row(s, a);
        row.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    /// `[V F](s, a) = [P F^2](s, a) - ([P F](s, a))^2` by direct enumeration.
    pub fn variance_next(&self, s: usize, a: usize, f: &[f64]) -> f64 {
        let row = self.transition_row(s, a);
        let mean: f64 = row.iter().zip(f).map(|(p, v)| p * v).sum();
        let second: f64 = row.iter().zip(f).map(|(p, v)| p * v * v).sum();
        second - mean * mean
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max(F) - min(F)`.
pub fn span(f: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in f {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// Solution of the average-reward Bellman optimality condition.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub j_star: f64,
    /// Bias function shifted so that `min(v) = 0`.
    pub bias: Vec<f64>,
    /// `q[s * A + a]`.
    pub q_bias: Vec<f64>,
    pub span: f64,
    /// Maximum Bellman residual achieved by the returned quantities.
    pub residual: f64,
}

impl OracleSolution {
    pub fn q(&self, s: usize, a: usize, num_actions: usize) -> f64 {
        self.q_bias[s * num_actions + a]
    }
}

const AVERAGE_ITERATION_CAP: usize = 1_000_000;

/// Relative value iteration anchored at state 0.
///
/// Iterates `h <- T h - (T h)(s0)` until `sp(h_next - h) <= tol`, then reads
/// off `J* = (T h)(s0)` and the bias shifted to `min = 0`.
pub fn solve_average_oracle(mdp: &LinearMixtureMDP, tol: f64) -> Result<OracleSolution> {
    if !(tol > 0.0) {
        return Err(UclkcError::InvalidParameter("tol must be positive".into()));
    }
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let rows: Vec<Vec<f64>> = (0..ns * na)
        .map(|idx| mdp.transition_row(idx / na, idx % na))
        .collect();

    let mut h = vec![0.0; ns];
    let mut j = 0.0;
    let mut converged = false;
    let mut last_gap = f64::INFINITY;
    for _ in 0..AVERAGE_ITERATION_CAP {
        let mut th = vec![f64::NEG_INFINITY; ns];
        for s in 0..ns {
            for a in 0..na {
                let exp: f64 = rows[s * na + a].iter().zip(&h).map(|(p, v)| p * v).sum();
                th[s] = th[s].max(mdp.reward(s, a) + exp);
            }
        }
        let anchor = th[0];
        let mut diff_lo = f64::INFINITY;
        let mut diff_hi = f64::NEG_INFINITY;
        for s in 0..ns {
            let next = th[s] - anchor;
            let delta = next - h[s];
            diff_lo = diff_lo.min(delta);
            diff_hi = diff_hi.max(delta);
            h[s] = next;
        }
        j = anchor;
        last_gap = diff_hi - diff_lo;
        if last_gap <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(UclkcError::NoConvergence {
            iterations: AVERAGE_ITERATION_CAP,
            residual: last_gap,
        });
    }

    let min_h = h.iter().cloned().fold(f64::INFINITY, f64::min);
    let bias: Vec<f64> = h.iter().map(|v| v - min_h).collect();
    let mut q_bias = vec![0.0; ns * na];
    let mut residual: f64 = 0.0;
    for s in 0..ns {
        for a in 0..na {
            let exp: f64 = rows[s * na + a].iter().zip(&bias).map(|(p, v)| p * v).sum();
            let q = mdp.reward(s, a) + exp - j;
            q_bias[s * na + a] = q;
        }
        let v_from_q = (0..na)
            .map(|a| q_bias[s * na + a])
            .fold(f64::NEG_INFINITY, f64::max);
        residual = residual.max((v_from_q - bias[s]).abs());
    }
    Ok(OracleSolution {
        j_star: j,
        span: span(&bias),
        bias,
        q_bias,
        residual,
    })
}

/// Standard discounted value iteration to sup-norm accuracy `tol`.
///
/// Returns `(V*, Q*)` with `Q*[s * A + a]`.
pub fn solve_discounted_oracle(
    mdp: &LinearMixtureMDP,
    gamma: f64,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(UclkcError::InvalidParameter(format!(
            "gamma must be in [0, 1), got {gamma}"
        )));
    }
    if !(tol > 0.0) {
        return Err(UclkcError::InvalidParameter("tol must be positive".into()));
    }
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let rows: Vec<Vec<f64>> = (0..ns * na)
        .map(|idx| mdp.transition_row(idx / na, idx % na))
        .collect();

    // sup-norm stopping rule guaranteeing ||V - V*||_inf <= tol
    let stop = if gamma == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - gamma) / (2.0 * gamma)
    };

    let mut v = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    loop {
        let mut max_delta: f64 = 0.0;
        let mut v_next = vec![f64::NEG_INFINITY; ns];
        for s in 0..ns {
            for a in 0..na {
                let exp: f64 = rows[s * na + a].iter().zip(&v).map(|(p, w)| p * w).sum();
                let qa = mdp.reward(s, a) + gamma * exp;
                q[s * na + a] = qa;
                v_next[s] = v_next[s].max(qa);
            }
            max_delta = max_delta.max((v_next[s] - v[s]).abs());
        }
        v = v_next;
        if max_delta <= stop || gamma == 0.0 {
            break;
        }
    }
    Ok((v, q))
}

/// Canonical tabular embedding: every tabular MDP is a linear mixture MDP with
/// one-hot features of dimension `S * A * S` and `theta*` equal to the
/// flattened transition tensor.
pub fn random_tabular_mixture<R: Rng>(
    num_states: usize,
    num_actions: usize,
    rng: &mut R,
) -> LinearMixtureMDP {
    use rand_distr::{Distribution, Gamma};
    let dim = num_states * num_actions * num_states;
    let gamma_dist = Gamma::<f64>::new(1.0, 1.0).unwrap();
    let mut theta = vec![0.0; dim];
    let mut phi = vec![vec![0.0; dim]; dim];
    for s in 0..num_states {
        for a in 0..num_actions {
            // Dirichlet(1) row
            let mut row: Vec<f64> = (0..num_states)
                .map(|_| gamma_dist.sample(rng).max(1e-12))
                .collect();
            let sum: f64 = row.iter().sum();
            for p in &mut row {
                *p /= sum;
            }
            for s_next in 0..num_states {
                let idx = (s * num_actions + a) * num_states + s_next;
                theta[idx] = row[s_next];
                phi[idx][idx] = 1.0;
            }
        }
    }
    let reward: Vec<f64> = (0..num_states * num_actions).map(|_| rng.gen()).collect();
    let b_theta = theta.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let features = FeatureMap::new(num_states, num_actions, dim, phi).unwrap();
    LinearMixtureMDP::new(features, theta, reward, b_theta * (1.0 + 1e-12)).unwrap()
}
