//! Post-hoc diagnostics that compare a run against ground truth.
//!
//! These checks consult the true transition core, so they are wired in as a
//! read-only observer and never influence the agent's decisions: ellipsoid
//! coverage of the true core at each episode start, the per-step variance
//! bound, and the concentration of the two noise processes driving the
//! regression.

use nalgebra::DVector;

use crate::agent::{self, AgentConfig, Observer, RegretTrace, StepContext};
use crate::confidence::{beta_hat, ConfidenceSet, RadiusParams};
use crate::error::Result;
use crate::mdp::LinearMixtureMDP;
use crate::planner::ValueFunctions;

/// Outcome of the ground-truth checks over one run.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub episodes: usize,
    /// Episodes whose confidence ellipsoid contained the true core.
    pub episodes_covered: usize,
    pub steps: usize,
    /// Steps where the live ellipsoid around the weighted ridge estimate
    /// contained the true core.
    pub steps_covered: usize,
    /// Steps where the variance estimate missed the true conditional
    /// variance by more than the error bound.
    pub variance_bound_violations: usize,
    /// Running sum of `W(s_{t+1}) - E[W | s_t, a_t]`.
    pub eta_sum: f64,
    /// Running sum of `E[W^2 | s_t, a_t] - W^2(s_{t+1})`.
    pub xi_sum: f64,
    /// Azuma bound `H sqrt(2 T ln(1/delta))` for the first sum.
    pub eta_bound: f64,
    /// Azuma bound `H^2 sqrt(2 T ln(1/delta))` for the second sum.
    pub xi_bound: f64,
}

impl DiagnosticsReport {
    pub fn coverage_fraction(&self) -> f64 {
        if self.episodes == 0 {
            return 1.0;
        }
        self.episodes_covered as f64 / self.episodes as f64
    }

    pub fn all_steps_covered(&self) -> bool {
        self.steps_covered == self.steps
    }

    pub fn eta_within_bound(&self) -> bool {
        self.eta_sum.abs() <= self.eta_bound
    }

    pub fn xi_within_bound(&self) -> bool {
        self.xi_sum.abs() <= self.xi_bound
    }
}

/// Observer accumulating the report during a run.
pub struct DiagnosticsObserver<'a> {
    mdp: &'a LinearMixtureMDP,
    theta_star: DVector<f64>,
    radius_params: RadiusParams,
    report: DiagnosticsReport,
}

impl<'a> DiagnosticsObserver<'a> {
    pub fn new(mdp: &'a LinearMixtureMDP, cfg: &AgentConfig) -> Self {
        let h = cfg.value_range();
        let scale = (2.0 * cfg.t as f64 * (1.0 / cfg.delta).ln()).sqrt();
        let radius_params = RadiusParams::new(mdp.dim(), cfg.lambda, cfg.delta, mdp.b_theta, h)
            .and_then(|p| p.with_radius_scale(cfg.radius_scale))
            .expect("agent config was already validated");
        Self {
            mdp,
            theta_star: DVector::from_column_slice(&mdp.theta_star),
            radius_params,
            report: DiagnosticsReport {
                episodes: 0,
                episodes_covered: 0,
                steps: 0,
                steps_covered: 0,
                variance_bound_violations: 0,
                eta_sum: 0.0,
                xi_sum: 0.0,
                eta_bound: h * scale,
                xi_bound: h * h * scale,
            },
        }
    }

    pub fn into_report(self) -> DiagnosticsReport {
        self.report
    }
}

impl Observer for DiagnosticsObserver<'_> {
    fn on_episode(
        &mut self,
        _episode: usize,
        _t_start: usize,
        set: &ConfidenceSet,
        _vf: &ValueFunctions,
    ) {
        self.report.episodes += 1;
        if set.contains(&self.theta_star) {
            self.report.episodes_covered += 1;
        }
    }

    fn on_step(&mut self, ctx: &StepContext<'_>) {
        self.report.steps += 1;
        let center = ctx.gram_hat.solve();
        let dist = ctx.gram_hat.mahalanobis(&(&self.theta_star - center));
        if dist <= beta_hat(ctx.t, &self.radius_params) {
            self.report.steps_covered += 1;
        }
        let true_var = self.mdp.variance_next(ctx.state, ctx.action, ctx.w);
        if (true_var - ctx.var_est).abs() > ctx.e_t + 1e-9 {
            self.report.variance_bound_violations += 1;
        }
        let w2: Vec<f64> = ctx.w.iter().map(|x| x * x).collect();
        let mean_w = self.mdp.expect_next(ctx.state, ctx.action, ctx.w);
        let mean_w2 = self.mdp.expect_next(ctx.state, ctx.action, &w2);
        self.report.eta_sum += ctx.w[ctx.next_state] - mean_w;
        self.report.xi_sum += mean_w2 - w2[ctx.next_state];
    }
}

/// Runs the agent and the ground-truth checks together.
pub fn run_with_diagnostics(
    mdp: &LinearMixtureMDP,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<(RegretTrace, DiagnosticsReport)> {
    let mut obs = DiagnosticsObserver::new(mdp, cfg);
    let trace = agent::run_with_observer(mdp, cfg, seed, &mut obs)?;
    Ok((trace, obs.into_report()))
}
