//! End-to-end acceptance suite. Each test prints one `criterion NN ...:
//! PASS`/`FAIL` line (visible with `--nocapture`) and asserts the same
//! condition, so the suite doubles as a human-readable checklist.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha12Rng;

use uclkc::agent::{self, AgentConfig};
use uclkc::confidence::{beta_hat, ConfidenceSet, RadiusParams};
use uclkc::diagnostics;
use uclkc::hard_instance::{self, HardInstanceParams};
use uclkc::linalg::GramAccumulator;
use uclkc::mdp::{self, LinearMixtureMDP};
use uclkc::planner::{self, PlannerMode};

fn report(criterion: &str, passed: bool, detail: String) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// The 2-state instances shared by the convergence and optimism criteria.
fn two_state_instances(n: usize) -> Vec<LinearMixtureMDP> {
    let mut r = rng(2024);
    (0..n).map(|_| mdp::random_tabular_mixture(2, 2, &mut r)).collect()
}

#[test]
fn criterion_01_oracle_agreement() {
    let mut worst = 0.0_f64;
    for d in [2usize, 4, 8] {
        for delta in [0.5_f64, 0.1, 1.0 / 120.0] {
            let gap = (delta / 3.0).min(0.01);
            let params = HardInstanceParams::with_gap(d, delta, gap, None).unwrap();
            let m = hard_instance::build(&params).unwrap();
            let analytic = hard_instance::analytic_optimal(&params);
            let rvi = mdp::solve_average_oracle(&m, 1e-10).unwrap();
            let mut err = (analytic.j_star - rvi.j_star).abs();
            err = err.max((analytic.span - rvi.span).abs());
            for s in 0..m.num_states() {
                err = err.max((analytic.bias[s] - rvi.bias[s]).abs());
                for a in 0..m.num_actions() {
                    let na = m.num_actions();
                    err = err.max((analytic.q(s, a, na) - rvi.q(s, a, na)).abs());
                }
            }
            worst = worst.max(err);
        }
    }
    report(
        "01 (hard-instance oracle agreement)",
        worst <= 1e-8,
        format!("max |analytic - iterative| = {worst:.3e}, tolerance 1e-8"),
    );
}

#[test]
fn criterion_02_clipping_contraction() {
    let mut r = rng(2);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let s = r.gen_range(1..=20);
        let h = [0.5, 1.0, 5.0][r.gen_range(0..3)];
        let v1: Vec<f64> = (0..s).map(|_| r.gen_range(-50.0..50.0)).collect();
        let v2: Vec<f64> = (0..s).map(|_| r.gen_range(-50.0..50.0)).collect();
        let c1 = planner::clip(&v1, h);
        let c2 = planner::clip(&v2, h);
        let lhs = c1.iter().zip(&c2).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        let rhs = v1.iter().zip(&v2).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(lhs - rhs);
    }
    report(
        "02 (clipping contraction)",
        worst <= 1e-12,
        format!("max clipped-gap excess over 1000 pairs = {worst:.3e}, slack 1e-12"),
    );
}

#[test]
fn criterion_03_value_iteration_convergence() {
    let n = 30;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_residual = f64::NEG_INFINITY;
    for m in two_state_instances(20) {
        let p = RadiusParams::new(m.dim(), 1.0, 0.1, m.b_theta, 2.0).unwrap();
        let set = ConfidenceSet::new(
            DVector::from_column_slice(&m.theta_star),
            GramAccumulator::new(m.dim(), 1.0).unwrap(),
            beta_hat(1, &p) * 0.1,
        );
        for gamma in [0.5_f64, 0.9, 0.99] {
            let vf = planner::run_value_iteration(&m, &set, gamma, n, 2.0, PlannerMode::Exact, true)
                .unwrap();
            let last = *vf.round_gaps.last().unwrap();
            worst_gap = worst_gap.max(last - gamma.powi(n as i32 - 1));
            for s in 0..2 {
                for a in 0..2 {
                    let phi_v = m.phi_f(s, a, &vf.v);
                    let opt =
                        planner::optimistic_expectation(&phi_v, &set, PlannerMode::Exact, &m)
                            .unwrap();
                    let rhs = m.reward(s, a) + gamma * opt + gamma.powi(n as i32);
                    worst_residual = worst_residual.max(vf.q[s * 2 + a] - rhs);
                }
            }
        }
    }
    let passed = worst_gap <= 1e-9 && worst_residual <= 1e-9;
    report(
        "03 (value-iteration convergence)",
        passed,
        format!(
            "worst round-gap excess over gamma^29 = {worst_gap:.3e}, \
             worst fixed-point residual = {worst_residual:.3e}, tolerance 1e-9"
        ),
    );
}

#[test]
fn criterion_04_optimism() {
    let mut worst_v = f64::NEG_INFINITY;
    let mut worst_q = f64::NEG_INFINITY;
    let mut worst_cap = f64::NEG_INFINITY;
    for m in two_state_instances(20) {
        let avg = mdp::solve_average_oracle(&m, 1e-10).unwrap();
        let h = (2.0 * avg.span).max(0.1) + 1e-9;
        let gamma = 0.9;
        let cap = 1.0 / (1.0 - gamma);
        let p = RadiusParams::new(m.dim(), 1.0, 0.1, m.b_theta, h).unwrap();
        let set = ConfidenceSet::new(
            DVector::from_column_slice(&m.theta_star),
            GramAccumulator::new(m.dim(), 1.0).unwrap(),
            beta_hat(1, &p),
        );
        let vf =
            planner::run_value_iteration(&m, &set, gamma, 40, h, PlannerMode::Exact, true).unwrap();
        let (v_star, q_star) = mdp::solve_discounted_oracle(&m, gamma, 1e-10).unwrap();
        for s in 0..2 {
            worst_v = worst_v.max(v_star[s] - vf.v[s]);
            worst_cap = worst_cap.max(vf.v_tilde[s] - cap).max(vf.v[s] - cap);
            for a in 0..2 {
                worst_q = worst_q.max(q_star[s * 2 + a] - vf.q[s * 2 + a]);
                worst_cap = worst_cap.max(vf.q[s * 2 + a] - cap);
            }
        }
    }
    let passed = worst_v <= 1e-9 && worst_q <= 1e-9 && worst_cap <= 1e-9;
    report(
        "04 (optimism under a truthful confidence set)",
        passed,
        format!(
            "worst V* excess = {worst_v:.3e}, worst Q* excess = {worst_q:.3e}, \
             worst cap excess = {worst_cap:.3e}, tolerance 1e-9"
        ),
    );
}

#[test]
fn criterion_05_episode_count_bound() {
    let t = 100_000;
    let params = HardInstanceParams::new(8, 0.1, t, 0.1, 1.0, None).unwrap();
    let m = hard_instance::build(&params).unwrap();
    let sol = hard_instance::analytic_optimal(&params);
    let cfg = AgentConfig::theoretical(2.0 * sol.span, t, m.dim(), m.b_theta, 0.1).unwrap();
    assert!((cfg.lambda - 1.0 / (m.b_theta * m.b_theta)).abs() < 1e-15);
    let bound = agent::episode_bound(m.dim(), t, cfg.h, m.b_theta);
    let mut max_episodes = 0usize;
    for seed in 0..20u64 {
        let trace = agent::run_uclkc(&m, &cfg, seed).unwrap();
        max_episodes = max_episodes.max(trace.num_episodes);
    }
    report(
        "05 (determinant-doubling episode bound)",
        (max_episodes as f64) <= bound,
        format!("max episodes over 20 runs = {max_episodes}, bound = {bound:.1}"),
    );
}

#[test]
fn criterion_06_span_bridge() {
    let mut r = rng(6);
    let mut worst_gain = f64::NEG_INFINITY;
    let mut worst_span = f64::NEG_INFINITY;
    for _ in 0..50 {
        let s = r.gen_range(2..=6);
        let a = r.gen_range(1..=4);
        let m = mdp::random_tabular_mixture(s, a, &mut r);
        let avg = mdp::solve_average_oracle(&m, 1e-10).unwrap();
        for gamma in [0.9_f64, 0.99] {
            let (v_star, _) = mdp::solve_discounted_oracle(&m, gamma, 1e-10).unwrap();
            for v in &v_star {
                let err = (avg.j_star - (1.0 - gamma) * v).abs();
                worst_gain = worst_gain.max(err - (1.0 - gamma) * avg.span);
            }
            worst_span = worst_span.max(mdp::span(&v_star) - 2.0 * avg.span);
        }
    }
    let passed = worst_gain <= 1e-6 && worst_span <= 1e-6;
    report(
        "06 (discounted span bridge)",
        passed,
        format!(
            "worst |J* - (1-g)V*| excess = {worst_gain:.3e}, \
             worst sp(V*) excess over 2 sp(v*) = {worst_span:.3e}, tolerance 1e-6"
        ),
    );
}

#[test]
fn criterion_07_confidence_coverage() {
    let t = 20_000;
    let params = HardInstanceParams::new(4, 0.1, t, 0.1, 1.0, None).unwrap();
    let m = hard_instance::build(&params).unwrap();
    let sol = hard_instance::analytic_optimal(&params);
    let cfg = AgentConfig::theoretical(2.0 * sol.span, t, m.dim(), m.b_theta, 0.1).unwrap();
    let runs = 50usize;
    let mut covered = 0usize;
    let mut variance_violations_under_coverage = 0usize;
    for seed in 0..runs as u64 {
        let (_, rep) = diagnostics::run_with_diagnostics(&m, &cfg, seed).unwrap();
        if rep.all_steps_covered() {
            covered += 1;
            variance_violations_under_coverage += rep.variance_bound_violations;
        }
    }
    let fraction = covered as f64 / runs as f64;
    let passed = fraction >= 0.70 && variance_violations_under_coverage == 0;
    report(
        "07 (confidence coverage and variance error bound)",
        passed,
        format!(
            "all-step coverage fraction = {fraction:.2} (need >= 0.70), \
             variance-bound violations under coverage = {variance_violations_under_coverage}"
        ),
    );
}

/// Regret-curve replication on the hard benchmark: d = 8, transition rate
/// 1/120, gap scale 3, 10 seeds, T = 1e5. The clipping threshold is set to
/// sp(v*) and the confidence radii are scaled by 1e-3; the theoretical
/// constants are far too conservative at this horizon for either agent to
/// leave its initial policy, so both agents run with the same tuned values.
/// Each seed drives a shared random-number stream for the two agents, so the
/// gap's standard error is the one pooled over the per-seed differences.
#[test]
fn criterion_08_regret_curve_replication() {
    let t = 100_000;
    let delta = 1.0 / 120.0;
    let params = HardInstanceParams::new(8, delta, t, delta, 3.0, None).unwrap();
    let m = hard_instance::build(&params).unwrap();
    let sol = hard_instance::analytic_optimal(&params);
    let mut cfg = AgentConfig::theoretical(59.0, t, m.dim(), m.b_theta, delta).unwrap();
    cfg.radius_scale = 1e-3;
    let seeds: Vec<u64> = (1..=10).collect();
    let mut clip_half = Vec::new();
    let mut clip_final = Vec::new();
    let mut noclip_half = Vec::new();
    let mut noclip_final = Vec::new();
    for &seed in &seeds {
        let reg = agent::run_uclkc(&m, &cfg, seed).unwrap().cumulative_regret(sol.j_star);
        clip_half.push(reg[t / 2 - 1]);
        clip_final.push(reg[t - 1]);
        let reg = agent::run_baseline_noclip(&m, &cfg, seed)
            .unwrap()
            .cumulative_regret(sol.j_star);
        noclip_half.push(reg[t / 2 - 1]);
        noclip_final.push(reg[t - 1]);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let stderr = |v: &[f64]| {
        let mu = mean(v);
        (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64)
            .sqrt()
    };
    let diffs: Vec<f64> =
        noclip_final.iter().zip(&clip_final).map(|(n, c)| n - c).collect();
    let gap = mean(&diffs);
    let gap_stderr = stderr(&diffs);
    let clip_mean = mean(&clip_final);
    let clip_half_mean = mean(&clip_half);
    let noclip_mean = mean(&noclip_final);
    let noclip_half_mean = mean(&noclip_half);
    let clip_sublinear = clip_mean - clip_half_mean < clip_half_mean;
    let noclip_sublinear = noclip_mean - noclip_half_mean < noclip_half_mean;
    let passed = gap > 0.0 && gap > gap_stderr && clip_sublinear && noclip_sublinear;
    report(
        "08 (regret-curve replication on the hard benchmark)",
        passed,
        format!(
            "clipped mean final regret = {clip_mean:.0}, unclipped = {noclip_mean:.0}, \
             gap = {gap:.0} > pooled stderr {gap_stderr:.0}, \
             sublinear: clipped {clip_sublinear}, unclipped {noclip_sublinear}"
        ),
    );
}

#[test]
fn criterion_09_martingale_scale() {
    let t = 10_000;
    let params = HardInstanceParams::new(4, 0.1, t, 0.1, 1.0, None).unwrap();
    let m = hard_instance::build(&params).unwrap();
    let sol = hard_instance::analytic_optimal(&params);
    let cfg = AgentConfig::theoretical(2.0 * sol.span, t, m.dim(), m.b_theta, 0.1).unwrap();
    let runs = 100usize;
    let mut eta_ok = 0usize;
    let mut xi_ok = 0usize;
    for seed in 0..runs as u64 {
        let (_, rep) = diagnostics::run_with_diagnostics(&m, &cfg, seed).unwrap();
        if rep.eta_within_bound() {
            eta_ok += 1;
        }
        if rep.xi_within_bound() {
            xi_ok += 1;
        }
    }
    let passed = eta_ok >= 90 && xi_ok >= 90;
    report(
        "09 (martingale concentration scale)",
        passed,
        format!("Azuma bound held in {eta_ok}/100 (value noise) and {xi_ok}/100 (square noise), need >= 90"),
    );
}

#[test]
fn criterion_10_gram_kernel_fuzz() {
    let d = 8;
    let lambda = 0.7;
    let mut acc = GramAccumulator::new(d, lambda).unwrap();
    let mut dense = DMatrix::<f64>::identity(d, d) * lambda;
    let mut r = rng(10);
    let updates = 100_000;
    let mut worst_inv = 0.0_f64;
    let mut worst_logdet = 0.0_f64;
    for i in 0..updates {
        let x = DVector::from_fn(d, |_, _| r.gen_range(-1.0..1.0));
        let w = r.gen_range(1e-3..10.0);
        dense += (&x * x.transpose()) * w;
        acc.rank_one_update(&x, w, r.gen_range(-1.0..1.0)).unwrap();
        if i % 997 == 0 || i == updates - 1 {
            let direct_inv = dense.clone().try_inverse().unwrap();
            let inv_err = (acc.gram_inv() - &direct_inv).abs().max();
            let chol = dense.clone().cholesky().unwrap();
            let direct_logdet: f64 =
                2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let logdet_err = (acc.log_det() - direct_logdet).abs() / direct_logdet.abs();
            worst_inv = worst_inv.max(inv_err);
            worst_logdet = worst_logdet.max(logdet_err);
        }
    }
    let passed = worst_inv <= 1e-8 && worst_logdet <= 1e-6;
    report(
        "10 (incremental Gram kernel vs dense refactorization)",
        passed,
        format!(
            "max inverse error = {worst_inv:.3e} (<= 1e-8), \
             max relative log-det error = {worst_logdet:.3e} (<= 1e-6)"
        ),
    );
}
