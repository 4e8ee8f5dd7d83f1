//! Simulation library for average-reward reinforcement learning in linear
//! mixture MDPs with bounded span, built around optimistic value iteration
//! with span clipping and variance-weighted ridge regression.

pub mod agent;
pub mod confidence;
pub mod diagnostics;
pub mod error;
pub mod hard_instance;
pub mod harness;
pub mod linalg;
pub mod mdp;
pub mod planner;

pub use agent::{run_baseline_noclip, run_uclkc, AgentConfig, RegretTrace};
pub use confidence::{beta_check, beta_hat, beta_tilde, ConfidenceSet, RadiusParams};
pub use error::{Result, UclkcError};
pub use hard_instance::HardInstanceParams;
pub use linalg::GramAccumulator;
pub use mdp::{FeatureMap, LinearMixtureMDP, OracleSolution};
pub use planner::{run_value_iteration, PlannerMode, ValueFunctions};
