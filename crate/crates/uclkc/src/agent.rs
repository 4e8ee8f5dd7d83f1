//! The episodic learning loop: optimistic planning under a frozen confidence
//! set, greedy execution until the weighted Gram determinant doubles, and
//! variance-weighted ridge regression on the clipped value differences.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::confidence::{
    beta_hat, error_bound, sigma_bar, variance_estimate, ConfidenceSet, RadiusParams,
};
use crate::error::{Result, UclkcError};
use crate::linalg::GramAccumulator;
use crate::mdp::LinearMixtureMDP;
use crate::planner::{self, PlannerMode, ValueFunctions};

/// Hyperparameters of one agent run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AgentConfig {
    /// Clipping threshold; the effective value range is `[min V, min V + H]`.
    pub h: f64,
    pub gamma: f64,
    /// Value-iteration rounds per planning phase.
    pub n_rounds: usize,
    pub lambda: f64,
    pub delta: f64,
    /// Number of interaction steps.
    pub t: usize,
    pub planner_mode: PlannerMode,
    pub clip_enabled: bool,
    /// Multiplier on the confidence radii; 1 is the theoretical setting,
    /// smaller values are the tuned regime used for regret experiments.
    #[serde(default = "default_radius_scale")]
    pub radius_scale: f64,
}

fn default_radius_scale() -> f64 {
    1.0
}

impl AgentConfig {
    /// Theoretically motivated defaults for a clipping threshold `h` and
    /// horizon `t`: `gamma = 1 - sqrt(d/(hT))`, `lambda = 1/B_theta^2`, and
    /// the planning round count prescribed by the analysis.
    pub fn theoretical(h: f64, t: usize, d: usize, b_theta: f64, delta: f64) -> Result<Self> {
        if !(h > 0.0) || t == 0 || d == 0 || !(b_theta > 0.0) {
            return Err(UclkcError::InvalidParameter(
                "h, t, d, b_theta must be positive".into(),
            ));
        }
        if !(0.0 < delta && delta < 1.0) {
            return Err(UclkcError::InvalidParameter(format!(
                "delta must be in (0, 1), got {delta}"
            )));
        }
        let gamma = (1.0 - (d as f64 / (h * t as f64)).sqrt()).max(0.0);
        Ok(Self {
            h,
            gamma,
            n_rounds: planner::default_rounds(h, t, d),
            lambda: 1.0 / (b_theta * b_theta),
            delta,
            t,
            planner_mode: PlannerMode::Relaxed,
            clip_enabled: true,
            radius_scale: 1.0,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(0.0..1.0).contains(&self.gamma) {
            return Err(UclkcError::InvalidParameter(
                "need h > 0 and gamma in [0, 1)".into(),
            ));
        }
        if self.n_rounds == 0 || self.t == 0 {
            return Err(UclkcError::InvalidParameter(
                "n_rounds and t must be >= 1".into(),
            ));
        }
        if !(self.lambda > 0.0) || !(0.0 < self.delta && self.delta < 1.0) {
            return Err(UclkcError::InvalidParameter(
                "need lambda > 0 and delta in (0, 1)".into(),
            ));
        }
        if !(self.radius_scale > 0.0) {
            return Err(UclkcError::InvalidParameter(
                "radius_scale must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Value range the regression targets live in: `H` when clipping is on,
    /// the discounted cap `1/(1-gamma)` otherwise.
    pub fn value_range(&self) -> f64 {
        if self.clip_enabled {
            self.h
        } else {
            1.0 / (1.0 - self.gamma)
        }
    }
}

/// One executed interaction step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// 1-based step index.
    pub t: usize,
    /// 1-based episode index.
    pub episode: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub sigma_bar: f64,
    pub e_t: f64,
    /// `det(weighted gram now) / det(weighted gram at episode start)`.
    pub logdet_ratio: f64,
}

/// Full record of one run.
#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub steps: Vec<StepRecord>,
    /// 1-based step indices at which each episode began.
    pub episode_starts: Vec<usize>,
    pub num_episodes: usize,
}

impl RegretTrace {
    /// Cumulative regret against a gain `j_star`, one entry per step.
    pub fn cumulative_regret(&self, j_star: f64) -> Vec<f64> {
        let mut acc = 0.0;
        self.steps
            .iter()
            .map(|s| {
                acc += j_star - s.reward;
                acc
            })
            .collect()
    }
}

/// Per-step quantities exposed to observers before the regression update.
pub struct StepContext<'a> {
    pub t: usize,
    pub episode: usize,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub w: &'a [f64],
    pub phi_w: &'a DVector<f64>,
    pub phi_w2: &'a DVector<f64>,
    pub var_est: f64,
    pub e_t: f64,
    pub sigma_bar: f64,
    pub gram_hat: &'a GramAccumulator,
    pub gram_tilde: &'a GramAccumulator,
}

/// Read-only hooks into the run, for post-hoc analysis that may consult
/// ground truth without influencing the agent's decisions.
pub trait Observer {
    fn on_episode(&mut self, _episode: usize, _t_start: usize, _set: &ConfidenceSet, _vf: &ValueFunctions) {}
    fn on_step(&mut self, _ctx: &StepContext<'_>) {}
}

/// No-op observer.
pub struct NullObserver;

impl Observer for NullObserver {}

/// Runs the span-clipped optimistic algorithm.
pub fn run_uclkc(mdp: &LinearMixtureMDP, cfg: &AgentConfig, seed: u64) -> Result<RegretTrace> {
    run_with_observer(mdp, cfg, seed, &mut NullObserver)
}

/// Ablation baseline: identical loop with the clipping step disabled and the
/// exploration-weight floor widened to the discounted value range.
pub fn run_baseline_noclip(
    mdp: &LinearMixtureMDP,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<RegretTrace> {
    let mut ablated = cfg.clone();
    ablated.clip_enabled = false;
    run_with_observer(mdp, &ablated, seed, &mut NullObserver)
}

/// Full loop with observer hooks.
pub fn run_with_observer(
    mdp: &LinearMixtureMDP,
    cfg: &AgentConfig,
    seed: u64,
    observer: &mut dyn Observer,
) -> Result<RegretTrace> {
    cfg.validate()?;
    let d = mdp.dim();
    let h_eff = cfg.value_range();
    let params = RadiusParams::new(d, cfg.lambda, cfg.delta, mdp.b_theta, h_eff)?
        .with_radius_scale(cfg.radius_scale)?;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut gram_hat = GramAccumulator::new(d, cfg.lambda)?;
    let mut gram_tilde = GramAccumulator::new(d, cfg.lambda)?;

    let mut steps = Vec::with_capacity(cfg.t);
    let mut episode_starts = Vec::new();
    let mut state = 0usize;
    let mut t = 1usize;
    let mut episode = 0usize;

    while t <= cfg.t {
        episode += 1;
        episode_starts.push(t);
        let logdet_start = gram_hat.log_det();
        let set = ConfidenceSet::new(gram_hat.solve(), gram_hat.clone(), beta_hat(t, &params));
        let vf = planner::run_value_iteration(
            mdp,
            &set,
            cfg.gamma,
            cfg.n_rounds,
            cfg.h,
            cfg.planner_mode,
            cfg.clip_enabled,
        )
        .map_err(|e| UclkcError::AtStep {
            step: t,
            source: Box::new(e),
        })?;
        observer.on_episode(episode, t, &set, &vf);
        let w2: Vec<f64> = vf.w.iter().map(|x| x * x).collect();

        // execute greedily until the weighted determinant doubles
        loop {
            let action = vf.policy[state];
            let reward = mdp.reward(state, action);
            let next_state = mdp.sample_next(state, action, &mut rng);

            let phi_w = mdp.phi_f(state, action, &vf.w);
            let phi_w2 = mdp.phi_f(state, action, &w2);
            let theta_hat = gram_hat.solve();
            let theta_tilde = gram_tilde.solve();
            let var_est = variance_estimate(&phi_w2, &phi_w, &theta_tilde, &theta_hat, h_eff);
            let e_t = error_bound(&phi_w, &phi_w2, &gram_hat, &gram_tilde, t, &params);
            let sb = sigma_bar(var_est, e_t, h_eff, d);

            observer.on_step(&StepContext {
                t,
                episode,
                state,
                action,
                next_state,
                w: &vf.w,
                phi_w: &phi_w,
                phi_w2: &phi_w2,
                var_est,
                e_t,
                sigma_bar: sb,
                gram_hat: &gram_hat,
                gram_tilde: &gram_tilde,
            });

            gram_hat
                .rank_one_update(&phi_w, 1.0 / (sb * sb), vf.w[next_state])
                .map_err(|e| UclkcError::AtStep {
                    step: t,
                    source: Box::new(e),
                })?;
            gram_tilde
                .rank_one_update(&phi_w2, 1.0, w2[next_state])
                .map_err(|e| UclkcError::AtStep {
                    step: t,
                    source: Box::new(e),
                })?;

            steps.push(StepRecord {
                t,
                episode,
                state,
                action,
                reward,
                sigma_bar: sb,
                e_t,
                logdet_ratio: (gram_hat.log_det() - logdet_start).exp(),
            });
            state = next_state;
            t += 1;
            if t > cfg.t || gram_hat.log_det() - logdet_start > std::f64::consts::LN_2 {
                break;
            }
        }
    }

    Ok(RegretTrace {
        steps,
        episode_starts,
        num_episodes: episode,
    })
}

/// Determinant-doubling episode bound: `1 + d log2(1 + T H^2 B_theta^2 / d)`.
pub fn episode_bound(d: usize, t: usize, h: f64, b_theta: f64) -> f64 {
    let df = d as f64;
    1.0 + df * (1.0 + t as f64 * h * h * b_theta * b_theta / df).log2()
}
