use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use uclkc::error::UclkcError;
use uclkc::harness::{self, ExperimentConfig};
use uclkc::hard_instance::{self, HardInstanceParams};
use uclkc::mdp;

#[derive(Parser)]
#[command(
    name = "uclkc",
    about = "Average-reward linear mixture MDP simulator with span clipping",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Comma-separated seed list overriding the config's seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run a named invariant suite (use "all" for every suite).
    Verify { scope: String },
    /// Solve a serialized MDP exactly and print J*, sp(v*), and v*.
    Oracle { mdp: PathBuf },
    /// Build the hard benchmark instance from a JSON parameter file.
    HardInstance {
        params: PathBuf,
        /// Write the constructed MDP as JSON to this path.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
}

/// Parameter file accepted by `hard-instance`.
#[derive(Deserialize)]
struct HardInstanceFile {
    dim: usize,
    delta_mdp: f64,
    horizon: usize,
    delta_conf: f64,
    #[serde(default = "one")]
    scale: f64,
    #[serde(default)]
    sign_vector: Option<Vec<i8>>,
}

fn one() -> f64 {
    1.0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> uclkc::Result<ExitCode> {
    match cli.command {
        Command::Run { config, seeds } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(seeds) = seeds {
                if seeds.is_empty() {
                    return Err(UclkcError::Config("--seeds list is empty".into()));
                }
                cfg.seeds = seeds;
            }
            let report = harness::run_experiment(&cfg)?;
            println!("environment gain J* = {}", harness::fmt_sig12(report.j_star));
            for (name, mean, stderr) in &report.final_regret {
                println!(
                    "{name}: mean final regret {} (stderr {})",
                    harness::fmt_sig12(*mean),
                    harness::fmt_sig12(*stderr)
                );
            }
            println!(
                "wrote {} trace files and {}",
                report.trace_files.len(),
                report.aggregate_file.display()
            );
            if let Some(svg) = &report.svg_file {
                println!("wrote {}", svg.display());
            }
            if report.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for (name, seed, msg) in &report.failures {
                    eprintln!("run failed: agent {name}, seed {seed}: {msg}");
                }
                Ok(ExitCode::from(2))
            }
        }
        Command::Verify { scope } => {
            let results = harness::verify_invariants(&scope)?;
            let mut ok = true;
            for r in &results {
                ok &= r.passed;
                println!(
                    "[{}] {} (samples: {}, margin: {:.3e})",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.samples,
                    r.margin
                );
            }
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Oracle { mdp: path } => {
            let text = std::fs::read_to_string(&path).map_err(|e| UclkcError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let model: mdp::LinearMixtureMDP = serde_json::from_str(&text)?;
            let model = model.validated()?;
            let sol = mdp::solve_average_oracle(&model, 1e-10)?;
            println!("J* = {}", harness::fmt_sig12(sol.j_star));
            println!("sp(v*) = {}", harness::fmt_sig12(sol.span));
            let bias: Vec<String> = sol.bias.iter().map(|b| harness::fmt_sig12(*b)).collect();
            println!("v* = [{}]", bias.join(", "));
            Ok(ExitCode::SUCCESS)
        }
        Command::HardInstance { params, emit } => {
            let text = std::fs::read_to_string(&params).map_err(|e| UclkcError::Io {
                path: params.display().to_string(),
                source: e,
            })?;
            let file: HardInstanceFile = serde_json::from_str(&text)?;
            let p = HardInstanceParams::new(
                file.dim,
                file.delta_mdp,
                file.horizon,
                file.delta_conf,
                file.scale,
                file.sign_vector,
            )?;
            let model = hard_instance::build(&p)?;
            let sol = hard_instance::analytic_optimal(&p);
            println!("d = {}, actions = {}", file.dim, p.num_actions());
            println!("Delta = {}", harness::fmt_sig12(p.delta_gap()));
            println!("alpha = {}", harness::fmt_sig12(p.alpha()));
            println!("beta = {}", harness::fmt_sig12(p.beta()));
            println!("J* = {}", harness::fmt_sig12(sol.j_star));
            println!("sp(v*) = {}", harness::fmt_sig12(sol.span));
            if let Some(out) = emit {
                let doc = serde_json::to_string_pretty(&model)?;
                std::fs::write(&out, doc).map_err(|e| UclkcError::Io {
                    path: out.display().to_string(),
                    source: e,
                })?;
                println!("wrote {}", out.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
