//! Scenario configuration, ground-truth synthesis, observer runs, sweeps and the CLI.

pub mod audit;
pub mod cli;
pub mod config;
pub mod output;
pub mod scenario;
pub mod sweep;

pub use audit::{energy_audit, EnergyAudit, EnergyTrace};
pub use config::{Config, GainReference, InitialStateKind, ScenarioKind, SCHEMA_VERSION};
pub use scenario::{run_scenario, synthesize_ground_truth, AverageErrors, GroundTruth, RunOutcome, RunReport, Scenario};
pub use sweep::{mu_table, run_sweep, sweep_shapes, SweepRow, SweepShape};
