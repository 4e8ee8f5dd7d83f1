//! Experiment orchestration: JSON-configured runs over (agent, seed) grids,
//! CSV/SVG emission, and the named invariant suites behind `verify`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{self, AgentConfig, RegretTrace};
use crate::confidence::{beta_hat, ConfidenceSet, RadiusParams};
use crate::diagnostics;
use crate::error::{Result, UclkcError};
use crate::hard_instance::{self, HardInstanceParams};
use crate::linalg::GramAccumulator;
use crate::mdp::{self, LinearMixtureMDP};
use crate::planner::{self, PlannerMode};

/// Environment variable overriding the configured output directory.
pub const OUTDIR_ENV: &str = "UCLKC_OUTDIR";

/// Where the environment for a run comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    /// Benchmark instance; the horizon in the gap formula is the config `t`.
    HardInstance {
        dim: usize,
        delta_mdp: f64,
        delta_conf: f64,
        scale: f64,
        #[serde(default)]
        sign_vector: Option<Vec<i8>>,
    },
    /// Path to a serialized MDP document.
    MdpPath { path: String },
}

/// One reported curve. Unset hyperparameters fall back to the theoretical
/// defaults resolved from the environment oracle; the optional multipliers
/// provide a tuning grid over the clipping threshold and the discount gap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    #[serde(default)]
    pub baseline: bool,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub n_rounds: Option<usize>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub planner_mode: Option<PlannerMode>,
    /// Grid of multipliers applied to the resolved `h`; each grid point
    /// becomes its own named curve.
    #[serde(default)]
    pub h_grid: Option<Vec<f64>>,
    /// Grid of multipliers applied to the resolved discount gap `1 - gamma`.
    #[serde(default)]
    pub gamma_gap_grid: Option<Vec<f64>>,
    /// Multiplier on the confidence radii (tuned exploration scale).
    #[serde(default)]
    pub radius_scale: Option<f64>,
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub agents: Vec<AgentSpec>,
    pub t: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_svg: bool,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| UclkcError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(UclkcError::Config("at least one seed is required".into()));
        }
        if self.t == 0 {
            return Err(UclkcError::Config("t must be >= 1".into()));
        }
        if self.agents.is_empty() {
            return Err(UclkcError::Config("at least one agent is required".into()));
        }
        Ok(())
    }
}

/// Fully resolved curve: spec with defaults and grid multipliers applied.
#[derive(Debug, Clone)]
pub struct ResolvedAgent {
    pub name: String,
    pub baseline: bool,
    pub cfg: AgentConfig,
    pub h_multiplier: f64,
    pub gamma_gap_multiplier: f64,
}

/// Summary returned to the caller after all runs complete.
#[derive(Debug)]
pub struct ExperimentReport {
    pub j_star: f64,
    pub trace_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
    pub svg_file: Option<PathBuf>,
    /// `(agent name, mean final regret, standard error of the final regret)`.
    pub final_regret: Vec<(String, f64, f64)>,
    /// `(agent name, seed, error message)` for runs that failed.
    pub failures: Vec<(String, u64, String)>,
}

pub fn load_environment(spec: &EnvironmentSpec, t: usize) -> Result<LinearMixtureMDP> {
    match spec {
        EnvironmentSpec::HardInstance {
            dim,
            delta_mdp,
            delta_conf,
            scale,
            sign_vector,
        } => {
            let params = HardInstanceParams::new(
                *dim,
                *delta_mdp,
                t,
                *delta_conf,
                *scale,
                sign_vector.clone(),
            )?;
            hard_instance::build(&params)
        }
        EnvironmentSpec::MdpPath { path } => {
            let text = fs::read_to_string(path).map_err(|e| UclkcError::Io {
                path: path.clone(),
                source: e,
            })?;
            let m: LinearMixtureMDP = serde_json::from_str(&text)?;
            m.validated()
        }
    }
}

/// Expands grids and fills in theoretical defaults given the environment.
pub fn resolve_agents(
    cfg: &ExperimentConfig,
    mdp: &LinearMixtureMDP,
    span_v_star: f64,
) -> Result<Vec<ResolvedAgent>> {
    let mut out = Vec::new();
    for spec in &cfg.agents {
        let h_grid = spec.h_grid.clone().unwrap_or_else(|| vec![1.0]);
        let gamma_grid = spec.gamma_gap_grid.clone().unwrap_or_else(|| vec![1.0]);
        let gridded = h_grid.len() > 1 || gamma_grid.len() > 1;
        for &hm in &h_grid {
            for &gm in &gamma_grid {
                let h = spec.h.unwrap_or(2.0 * span_v_star).max(1e-6) * hm;
                let mut agent_cfg =
                    AgentConfig::theoretical(h, cfg.t, mdp.dim(), mdp.b_theta, spec.delta)?;
                if let Some(g) = spec.gamma {
                    agent_cfg.gamma = g;
                }
                agent_cfg.gamma = (1.0 - gm * (1.0 - agent_cfg.gamma)).clamp(0.0, 1.0 - 1e-12);
                if let Some(n) = spec.n_rounds {
                    agent_cfg.n_rounds = n;
                }
                if let Some(l) = spec.lambda {
                    agent_cfg.lambda = l;
                }
                if let Some(m) = spec.planner_mode {
                    agent_cfg.planner_mode = m;
                }
                if let Some(r) = spec.radius_scale {
                    agent_cfg.radius_scale = r;
                }
                agent_cfg.clip_enabled = !spec.baseline;
                let name = if gridded {
                    format!("{}_h{hm}_g{gm}", spec.name)
                } else {
                    spec.name.clone()
                };
                out.push(ResolvedAgent {
                    name,
                    baseline: spec.baseline,
                    cfg: agent_cfg,
                    h_multiplier: hm,
                    gamma_gap_multiplier: gm,
                });
            }
        }
    }
    Ok(out)
}

/// Runs every (agent, seed) pair concurrently and writes all result files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let outdir = match std::env::var(OUTDIR_ENV) {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output_dir.clone(),
    };
    fs::create_dir_all(&outdir).map_err(|e| UclkcError::Io {
        path: outdir.display().to_string(),
        source: e,
    })?;

    let mdp = load_environment(&cfg.environment, cfg.t)?;
    let oracle = mdp::solve_average_oracle(&mdp, 1e-10)?;
    let agents = resolve_agents(cfg, &mdp, oracle.span)?;

    let pairs: Vec<(usize, u64)> = (0..agents.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let runs: Vec<(usize, u64, std::result::Result<RegretTrace, String>)> = pairs
        .par_iter()
        .map(|&(i, seed)| {
            let a = &agents[i];
            let result = if a.baseline {
                agent::run_baseline_noclip(&mdp, &a.cfg, seed)
            } else {
                agent::run_uclkc(&mdp, &a.cfg, seed)
            };
            (i, seed, result.map_err(|e| e.to_string()))
        })
        .collect();

    let mut trace_files = Vec::new();
    let mut failures = Vec::new();
    let mut by_agent: Vec<Vec<Vec<f64>>> = vec![Vec::new(); agents.len()];
    for (i, seed, outcome) in &runs {
        match outcome {
            Ok(trace) => {
                let path = outdir.join(format!("trace_{}_{seed}.csv", agents[*i].name));
                emit_csv(trace, oracle.j_star, &path)?;
                by_agent[*i].push(trace.cumulative_regret(oracle.j_star));
                trace_files.push(path);
            }
            Err(msg) => failures.push((agents[*i].name.clone(), *seed, msg.clone())),
        }
    }

    let aggregates: Vec<(String, Vec<f64>, Vec<f64>)> = agents
        .iter()
        .zip(&by_agent)
        .filter(|(_, curves)| !curves.is_empty())
        .map(|(a, curves)| {
            let (mean, stderr) = mean_and_stderr(curves);
            (a.name.clone(), mean, stderr)
        })
        .collect();
    let aggregate_file = outdir.join("aggregate.csv");
    emit_aggregate_csv(&aggregates, &aggregate_file)?;
    emit_grid_csv(&agents, &outdir.join("grid.csv"))?;

    let svg_file = if cfg.emit_svg {
        let path = outdir.join("regret.svg");
        emit_svg(&aggregates, &path)?;
        Some(path)
    } else {
        None
    };

    let final_regret = aggregates
        .iter()
        .map(|(name, mean, stderr)| {
            (
                name.clone(),
                *mean.last().unwrap_or(&0.0),
                *stderr.last().unwrap_or(&0.0),
            )
        })
        .collect();

    Ok(ExperimentReport {
        j_star: oracle.j_star,
        trace_files,
        aggregate_file,
        svg_file,
        final_regret,
        failures,
    })
}

/// Pointwise mean and standard error of the mean across curves.
pub fn mean_and_stderr(curves: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = curves.len();
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for t in 0..len {
        let m = curves.iter().map(|c| c[t]).sum::<f64>() / n as f64;
        mean[t] = m;
        if n > 1 {
            let var =
                curves.iter().map(|c| (c[t] - m) * (c[t] - m)).sum::<f64>() / (n as f64 - 1.0);
            stderr[t] = (var / n as f64).sqrt();
        }
    }
    (mean, stderr)
}

/// Decimal with 12 significant digits, scientific only for extreme exponents.
pub fn fmt_sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&mag) {
        format!("{x:.11e}")
    } else {
        let prec = (11 - mag).max(0) as usize;
        format!("{x:.prec$}")
    }
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| UclkcError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_all(file: &mut fs::File, text: &str, path: &Path) -> Result<()> {
    file.write_all(text.as_bytes()).map_err(|e| UclkcError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Per-step trace CSV with the mandatory header row.
pub fn emit_csv(trace: &RegretTrace, j_star: f64, path: &Path) -> Result<()> {
    let mut text =
        String::from("t,episode,state,action,reward,sigma_bar,e_t,logdet_ratio,cum_regret\n");
    let mut cum = 0.0;
    for s in &trace.steps {
        cum += j_star - s.reward;
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.t,
            s.episode,
            s.state,
            s.action,
            fmt_sig12(s.reward),
            fmt_sig12(s.sigma_bar),
            fmt_sig12(s.e_t),
            fmt_sig12(s.logdet_ratio),
            fmt_sig12(cum),
        ));
    }
    let mut file = create(path)?;
    write_all(&mut file, &text, path)
}

fn emit_aggregate_csv(aggregates: &[(String, Vec<f64>, Vec<f64>)], path: &Path) -> Result<()> {
    let mut header = String::from("t");
    for (name, _, _) in aggregates {
        header.push_str(&format!(",{name}_mean,{name}_stderr"));
    }
    header.push('\n');
    let len = aggregates.iter().map(|(_, m, _)| m.len()).min().unwrap_or(0);
    let mut text = header;
    for t in 0..len {
        text.push_str(&(t + 1).to_string());
        for (_, mean, stderr) in aggregates {
            text.push_str(&format!(",{},{}", fmt_sig12(mean[t]), fmt_sig12(stderr[t])));
        }
        text.push('\n');
    }
    let mut file = create(path)?;
    write_all(&mut file, &text, path)
}

/// Records which grid point each reported curve used.
fn emit_grid_csv(agents: &[ResolvedAgent], path: &Path) -> Result<()> {
    let mut text = String::from("name,baseline,h_multiplier,gamma_gap_multiplier,h,gamma,n_rounds,lambda,delta\n");
    for a in agents {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            a.name,
            a.baseline,
            fmt_sig12(a.h_multiplier),
            fmt_sig12(a.gamma_gap_multiplier),
            fmt_sig12(a.cfg.h),
            fmt_sig12(a.cfg.gamma),
            a.cfg.n_rounds,
            fmt_sig12(a.cfg.lambda),
            fmt_sig12(a.cfg.delta),
        ));
    }
    let mut file = create(path)?;
    write_all(&mut file, &text, path)
}

const SVG_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Minimal static line chart: one polyline per agent, axes labeled.
pub fn emit_svg(aggregates: &[(String, Vec<f64>, Vec<f64>)], path: &Path) -> Result<()> {
    let (w, h) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 50.0);
    let t_max = aggregates
        .iter()
        .map(|(_, m, _)| m.len())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let y_max = aggregates
        .iter()
        .flat_map(|(_, m, _)| m.iter().cloned())
        .fold(1e-12_f64, f64::max);

    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<rect width="{w}" height="{h}" fill="white"/>
<line x1="{ml}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>
<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{y0}" stroke="black"/>
<text x="{xc}" y="{yl}" text-anchor="middle" font-size="16">t</text>
<text x="18" y="{ymid}" text-anchor="middle" font-size="16" transform="rotate(-90 18 {ymid})">regret</text>
<text x="{ml}" y="{ytick}" text-anchor="start" font-size="12">0</text>
<text x="{x1}" y="{ytick}" text-anchor="end" font-size="12">{tmax}</text>
<text x="{ml2}" y="{mt2}" text-anchor="start" font-size="12">{ymaxlab}</text>
"#,
        y0 = h - mb,
        x1 = w - mr,
        xc = (ml + w - mr) / 2.0,
        yl = h - 12.0,
        ymid = (mt + h - mb) / 2.0,
        ytick = h - mb + 16.0,
        tmax = t_max as usize,
        ml2 = ml + 4.0,
        mt2 = mt + 12.0,
        ymaxlab = format!("{y_max:.1}"),
    );

    for (idx, (name, mean, _)) in aggregates.iter().enumerate() {
        let color = SVG_COLORS[idx % SVG_COLORS.len()];
        let stride = (mean.len() / 1000).max(1);
        let mut pts = String::new();
        for (t, &v) in mean.iter().enumerate().step_by(stride) {
            let x = ml + (t as f64 + 1.0) / t_max * (w - ml - mr);
            let y = (h - mb) - (v.max(0.0) / y_max) * (h - mt - mb);
            pts.push_str(&format!("{x:.2},{y:.2} "));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.trim_end()
        ));
        let ly = mt + 20.0 + idx as f64 * 18.0;
        svg.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{lx2}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{lt}\" y=\"{lyt}\" font-size=\"13\">{name}</text>\n",
            lx = w - mr - 180.0,
            lx2 = w - mr - 150.0,
            lt = w - mr - 144.0,
            lyt = ly + 4.0,
        ));
    }
    svg.push_str("</svg>\n");
    let mut file = create(path)?;
    write_all(&mut file, &svg, path)
}

/// One named check inside a `verify` suite.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    /// Worst-case slack left before the bound would fail (negative = failed).
    pub margin: f64,
    pub passed: bool,
}

pub const VERIFY_SCOPES: [&str; 8] = [
    "contraction",
    "convergence",
    "optimism",
    "episodes",
    "span",
    "coverage",
    "oracle",
    "all",
];

/// Runs the named property suite(s).
pub fn verify_invariants(scope: &str) -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();
    let all = scope == "all";
    let mut matched = all;
    if all || scope == "contraction" {
        matched = true;
        results.push(check_contraction());
    }
    if all || scope == "convergence" {
        matched = true;
        results.push(check_convergence()?);
    }
    if all || scope == "optimism" {
        matched = true;
        results.push(check_optimism()?);
    }
    if all || scope == "episodes" {
        matched = true;
        results.push(check_episodes()?);
    }
    if all || scope == "span" {
        matched = true;
        results.push(check_span()?);
    }
    if all || scope == "coverage" {
        matched = true;
        results.push(check_coverage()?);
    }
    if all || scope == "oracle" {
        matched = true;
        results.push(check_oracle()?);
    }
    if !matched {
        return Err(UclkcError::Config(format!(
            "unknown verify scope '{scope}'; expected one of {VERIFY_SCOPES:?}"
        )));
    }
    Ok(results)
}

fn seeded_rng(seed: u64) -> rand_chacha::ChaCha12Rng {
    <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(seed)
}

fn check_contraction() -> CheckResult {
    use rand::Rng as _;
    let mut rng = seeded_rng(101);
    let mut margin = f64::INFINITY;
    let samples = 1000;
    for _ in 0..samples {
        let s = rng.gen_range(1..=20);
        let h = [0.5, 1.0, 5.0][rng.gen_range(0..3)];
        let v1: Vec<f64> = (0..s).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let v2: Vec<f64> = (0..s).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let c1 = planner::clip(&v1, h);
        let c2 = planner::clip(&v2, h);
        let lhs = c1
            .iter()
            .zip(&c2)
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max);
        let rhs = v1
            .iter()
            .zip(&v2)
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max);
        margin = margin.min(rhs + 1e-12 - lhs);
    }
    CheckResult {
        name: "clipping contraction".into(),
        samples,
        margin,
        passed: margin >= 0.0,
    }
}

fn check_convergence() -> Result<CheckResult> {
    let mut rng = seeded_rng(102);
    let mut margin = f64::INFINITY;
    let samples = 5;
    let n = 30;
    for _ in 0..samples {
        let m = mdp::random_tabular_mixture(2, 2, &mut rng);
        let p = RadiusParams::new(m.dim(), 1.0, 0.1, m.b_theta, 2.0)?;
        let set = ConfidenceSet::new(
            nalgebra::DVector::from_column_slice(&m.theta_star),
            GramAccumulator::new(m.dim(), 1.0)?,
            beta_hat(1, &p) * 0.1,
        );
        for gamma in [0.5, 0.9, 0.99] {
            let vf =
                planner::run_value_iteration(&m, &set, gamma, n, 2.0, PlannerMode::Exact, true)?;
            let last_gap = *vf.round_gaps.last().unwrap();
            margin = margin.min(gamma.powi(n as i32 - 1) + 1e-9 - last_gap);
        }
    }
    Ok(CheckResult {
        name: "value-iteration convergence".into(),
        samples: samples * 3,
        margin,
        passed: margin >= 0.0,
    })
}

fn check_optimism() -> Result<CheckResult> {
    let mut rng = seeded_rng(103);
    let mut margin = f64::INFINITY;
    let samples = 5;
    for _ in 0..samples {
        let m = mdp::random_tabular_mixture(2, 2, &mut rng);
        let avg = mdp::solve_average_oracle(&m, 1e-10)?;
        let h = (2.0 * avg.span).max(0.1) + 1e-9;
        let p = RadiusParams::new(m.dim(), 1.0, 0.1, m.b_theta, h)?;
        let set = ConfidenceSet::new(
            nalgebra::DVector::from_column_slice(&m.theta_star),
            GramAccumulator::new(m.dim(), 1.0)?,
            beta_hat(1, &p),
        );
        let gamma = 0.9;
        let vf = planner::run_value_iteration(&m, &set, gamma, 40, h, PlannerMode::Exact, true)?;
        let (v_star, q_star) = mdp::solve_discounted_oracle(&m, gamma, 1e-10)?;
        for s in 0..2 {
            margin = margin.min(vf.v[s] - v_star[s] + 1e-9);
            for a in 0..2 {
                margin = margin.min(vf.q[s * 2 + a] - q_star[s * 2 + a] + 1e-9);
            }
        }
    }
    Ok(CheckResult {
        name: "optimism".into(),
        samples,
        margin,
        passed: margin >= 0.0,
    })
}

fn check_episodes() -> Result<CheckResult> {
    let mut margin = f64::INFINITY;
    let samples = 5;
    let t = 5000;
    let params = HardInstanceParams::new(4, 0.2, t, 0.1, 1.0, None)?;
    let m = hard_instance::build(&params)?;
    let sol = hard_instance::analytic_optimal(&params);
    let cfg = AgentConfig::theoretical(2.0 * sol.span, t, m.dim(), m.b_theta, 0.1)?;
    for seed in 0..samples as u64 {
        let trace = agent::run_uclkc(&m, &cfg, seed)?;
        let bound = agent::episode_bound(m.dim(), t, cfg.h, m.b_theta);
        margin = margin.min(bound - trace.num_episodes as f64);
    }
    Ok(CheckResult {
        name: "determinant-doubling episode bound".into(),
        samples,
        margin,
        passed: margin >= 0.0,
    })
}

fn check_span() -> Result<CheckResult> {
    use rand::Rng as _;
    let mut rng = seeded_rng(104);
    let mut margin = f64::INFINITY;
    let samples = 50;
    for _ in 0..samples {
        let s = rng.gen_range(2..=6);
        let a = rng.gen_range(1..=4);
        let m = mdp::random_tabular_mixture(s, a, &mut rng);
        let avg = mdp::solve_average_oracle(&m, 1e-10)?;
        for gamma in [0.9, 0.99] {
            let (v_star, _) = mdp::solve_discounted_oracle(&m, gamma, 1e-10)?;
            for v in &v_star {
                margin = margin.min(
                    (1.0 - gamma) * avg.span + 1e-6 - (avg.j_star - (1.0 - gamma) * v).abs(),
                );
            }
            margin = margin.min(2.0 * avg.span + 1e-6 - mdp::span(&v_star));
        }
    }
    Ok(CheckResult {
        name: "discounted span bridge".into(),
        samples,
        margin,
        passed: margin >= 0.0,
    })
}

fn check_coverage() -> Result<CheckResult> {
    let samples = 10;
    let t = 5000;
    let params = HardInstanceParams::new(3, 0.2, t, 0.1, 1.0, None)?;
    let m = hard_instance::build(&params)?;
    let sol = hard_instance::analytic_optimal(&params);
    let cfg = AgentConfig::theoretical(2.0 * sol.span, t, m.dim(), m.b_theta, 0.1)?;
    let mut covered = 0usize;
    let mut variance_ok = true;
    for seed in 0..samples as u64 {
        let (_, report) = diagnostics::run_with_diagnostics(&m, &cfg, seed)?;
        if report.episodes_covered == report.episodes {
            covered += 1;
        }
        variance_ok &= report.variance_bound_violations == 0;
    }
    let fraction = covered as f64 / samples as f64;
    let margin = fraction - 0.7;
    Ok(CheckResult {
        name: "confidence coverage".into(),
        samples,
        margin,
        passed: margin >= 0.0 && variance_ok,
    })
}

fn check_oracle() -> Result<CheckResult> {
    let mut margin = f64::INFINITY;
    let mut samples = 0;
    for d in [2usize, 4, 8] {
        for delta in [0.5_f64, 0.1, 1.0 / 120.0] {
            samples += 1;
            let gap = (delta / 3.0).min(0.01);
            let params = HardInstanceParams::with_gap(d, delta, gap, None)?;
            let m = hard_instance::build(&params)?;
            let analytic = hard_instance::analytic_optimal(&params);
            let rvi = mdp::solve_average_oracle(&m, 1e-10)?;
            let mut err: f64 = (analytic.j_star - rvi.j_star).abs();
            err = err.max((analytic.span - rvi.span).abs());
            for s in 0..m.num_states() {
                err = err.max((analytic.bias[s] - rvi.bias[s]).abs());
                for a in 0..m.num_actions() {
                    err = err.max((analytic.q(s, a, m.num_actions()) - rvi.q(s, a, m.num_actions())).abs());
                }
            }
            margin = margin.min(1e-8 - err);
        }
    }
    Ok(CheckResult {
        name: "hard-instance oracle agreement".into(),
        samples,
        margin,
        passed: margin >= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            environment: EnvironmentSpec::HardInstance {
                dim: 2,
                delta_mdp: 0.3,
                delta_conf: 0.1,
                scale: 1.0,
                sign_vector: None,
            },
            agents: vec![
                AgentSpec {
                    name: "uclkc".into(),
                    baseline: false,
                    h: None,
                    gamma: None,
                    n_rounds: Some(10),
                    lambda: None,
                    delta: 0.1,
                    planner_mode: None,
                    h_grid: None,
                    gamma_gap_grid: None,
                    radius_scale: None,
                },
                AgentSpec {
                    name: "noclip".into(),
                    baseline: true,
                    h: None,
                    gamma: None,
                    n_rounds: Some(10),
                    lambda: None,
                    delta: 0.1,
                    planner_mode: None,
                    h_grid: None,
                    gamma_gap_grid: None,
                    radius_scale: None,
                },
            ],
            t: 300,
            seeds: vec![1, 2],
            output_dir: dir.to_path_buf(),
            emit_svg: true,
        }
    }

    #[test]
    fn experiment_produces_expected_files() {
        let dir = tempdir().unwrap();
        let cfg = small_config(dir.path());
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.trace_files.len(), 4);
        assert!(report.failures.is_empty());
        assert!(report.aggregate_file.exists());
        let svg = std::fs::read_to_string(report.svg_file.as_ref().unwrap()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">t</text>"));
        assert!(svg.contains(">regret</text>"));
        let agg = std::fs::read_to_string(&report.aggregate_file).unwrap();
        assert!(agg.starts_with("t,uclkc_mean,uclkc_stderr,noclip_mean,noclip_stderr"));
        assert_eq!(agg.lines().count(), 301);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir = tempdir().unwrap();
        let cfg = small_config(dir.path());
        run_experiment(&cfg).unwrap();
        let first = std::fs::read(dir.path().join("trace_uclkc_1.csv")).unwrap();
        run_experiment(&cfg).unwrap();
        let second = std::fs::read(dir.path().join("trace_uclkc_1.csv")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let dir = tempdir().unwrap();
        let cfg = small_config(dir.path());
        let report = run_experiment(&cfg).unwrap();
        let text = std::fs::read_to_string(&report.trace_files[0]).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,episode,state,action,reward,sigma_bar,e_t,logdet_ratio,cum_regret"
        );
        assert_eq!(lines.count(), 300);
    }

    #[test]
    fn aggregate_mean_matches_trace_files() {
        let dir = tempdir().unwrap();
        let cfg = small_config(dir.path());
        let report = run_experiment(&cfg).unwrap();
        let agg = std::fs::read_to_string(&report.aggregate_file).unwrap();
        let last = agg.lines().last().unwrap();
        let mean: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        let mut manual = 0.0;
        for seed in [1, 2] {
            let text =
                std::fs::read_to_string(dir.path().join(format!("trace_uclkc_{seed}.csv")))
                    .unwrap();
            let final_row = text.lines().last().unwrap();
            manual += final_row.split(',').last().unwrap().parse::<f64>().unwrap();
        }
        manual /= 2.0;
        assert!((mean - manual).abs() <= 1e-9 * manual.abs().max(1.0));
    }

    #[test]
    fn config_validation_rejects_empty_seeds() {
        let dir = tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.seeds.clear();
        assert!(matches!(cfg.validate(), Err(UclkcError::Config(_))));
    }

    #[test]
    fn sweep_grid_expands_and_records_names() {
        let dir = tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.agents.truncate(1);
        cfg.agents[0].h_grid = Some(vec![1.0, 2.0]);
        cfg.agents[0].gamma_gap_grid = Some(vec![1.0, 0.5]);
        let m = load_environment(&cfg.environment, cfg.t).unwrap();
        let sol = mdp::solve_average_oracle(&m, 1e-10).unwrap();
        let agents = resolve_agents(&cfg, &m, sol.span).unwrap();
        assert_eq!(agents.len(), 4);
        assert!(agents.iter().any(|a| a.name == "uclkc_h2_g0.5"));
        let wide = agents.iter().find(|a| a.name == "uclkc_h2_g1").unwrap();
        let base = agents.iter().find(|a| a.name == "uclkc_h1_g1").unwrap();
        assert!((wide.cfg.h - 2.0 * base.cfg.h).abs() < 1e-12);
    }

    #[test]
    fn fmt_sig12_is_stable_decimal() {
        assert_eq!(fmt_sig12(0.0), "0");
        assert_eq!(fmt_sig12(1.0), "1.00000000000");
        assert_eq!(fmt_sig12(0.5454545454545454), "0.545454545455");
        assert!(!fmt_sig12(1.0e-4).contains('e'));
        assert!(fmt_sig12(1.0e-9).contains('e'));
        assert!(fmt_sig12(1.0e-20).contains('e'));
    }

    #[test]
    fn verify_scopes_run_and_pass() {
        for scope in ["contraction", "span", "oracle"] {
            let results = verify_invariants(scope).unwrap();
            assert!(results.iter().all(|r| r.passed), "scope {scope} failed");
        }
        assert!(verify_invariants("bogus").is_err());
    }
}
