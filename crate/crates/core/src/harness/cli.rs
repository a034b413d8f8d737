//! Command-line front end. `run` returns the process exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Matrix6;
use serde::Serialize;

use super::audit::energy_audit;
use super::config::Config;
use super::output::{write_energy_csv, write_json, write_mu_csv, write_states_csv, write_sweep_csv};
use super::scenario::{synthesize_ground_truth, run_scenario, Scenario};
use super::sweep::{mu_table, run_sweep, sweep_shapes, SweepRow, SweepShape};
use crate::error::{Error, Result};
use crate::gains::{optimal_gains, MuSample};
use crate::observers::ObserverVariant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cosserat-observer", version, about = "Cosserat rod boundary observers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize the ground truth and its measurement stream.
    Simulate(Common),
    /// Run one observer against the ground truth.
    Observe(Common),
    /// Sweep gain scales and observer variants.
    Sweep(Common),
    /// Optimal gains and the mu_max table.
    Gains(Common),
    /// Energy conservation and dissipation audit.
    Energy(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = Config::from_file(&self.config)?;
        if let Some(v) = &self.variant {
            cfg.observer.variant = v.clone();
            if let Some(s) = cfg.sweep.as_mut() {
                s.variants = vec![v.clone()];
            }
        }
        if let Some(g) = self.gamma {
            cfg.observer.gamma = g;
            if let Some(s) = cfg.sweep.as_mut() {
                s.gammas = vec![g];
            }
        }
        if let Some(seed) = self.seed {
            cfg.scenario.seed = seed;
        }
        cfg.validate()?;
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Error::Configuration(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_solver_failure() {
        return EXIT_NONCONVERGENCE;
    }
    match e.root() {
        Error::Configuration(_) | Error::Toml(_) | Error::InvalidArgument(_) | Error::SingularReflection(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

#[derive(Serialize)]
struct SimulationReport {
    scenario: super::config::ScenarioKind,
    steps: usize,
    node_count: usize,
    simulated_time_s: f64,
    energy_trace_j: Vec<(f64, f64)>,
    states_path: String,
    measurements_path: String,
}

#[derive(Serialize)]
struct SweepReport {
    rows: Vec<SweepRow>,
    shapes: Vec<SweepShape>,
    sweep_path: String,
}

#[derive(Serialize)]
struct GainsReport {
    base_optimal: Vec<Vec<f64>>,
    tip_optimal: Vec<Vec<f64>>,
    mu: Vec<MuSample>,
    mu_path: String,
}

fn rows(m: &Matrix6<f64>) -> Vec<Vec<f64>> {
    (0..6).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate(c) => {
            let scenario = Scenario::new(c.load()?)?;
            let truth = synthesize_ground_truth(&scenario)?;
            let states = c.out.join("states.csv");
            let meas = c.out.join("measurements.csv");
            write_states_csv(&states, &truth.states)?;
            truth.stream.to_csv_file(&meas)?;
            let p = &scenario.truth_params;
            let report = SimulationReport {
                scenario: scenario.config.scenario.kind,
                steps: scenario.steps,
                node_count: p.node_count,
                simulated_time_s: scenario.duration(),
                energy_trace_j: truth.states.iter().map(|s| (s.time, p.total_energy(s))).collect(),
                states_path: path_string(&states),
                measurements_path: path_string(&meas),
            };
            write_json(c.out.join("report.json"), &report)?;
            println!("simulated {} steps -> {}", scenario.steps, states.display());
        }
        Command::Observe(c) => {
            let scenario = Scenario::new(c.load()?)?;
            let variant = ObserverVariant::parse(&scenario.config.observer.variant)?;
            let truth = synthesize_ground_truth(&scenario)?;
            let mut out = run_scenario(&scenario, &truth, variant, scenario.config.observer.gamma, scenario.config.scenario.seed)?;
            let states = c.out.join("states.csv");
            write_states_csv(&states, &out.result.states)?;
            out.report.states_path = Some(path_string(&states));
            write_json(c.out.join("report.json"), &out.report)?;
            println!(
                "{variant} gamma={} settle={:?} s rtf={:.2}",
                out.report.gamma, out.report.settle_time_s, out.report.real_time_factor
            );
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            let sweep = cfg
                .sweep
                .clone()
                .ok_or_else(|| Error::Configuration("the sweep subcommand needs a [sweep] section".into()))?;
            let scenario = Scenario::new(cfg)?;
            let variants = sweep.variants.iter().map(|v| ObserverVariant::parse(v)).collect::<Result<Vec<_>>>()?;
            let truth = synthesize_ground_truth(&scenario)?;
            let rows = run_sweep(&scenario, &truth, &variants, &sweep.gammas, scenario.config.scenario.seed)?;
            let path = c.out.join("sweep.csv");
            write_sweep_csv(&path, &rows)?;
            let shapes = sweep_shapes(&rows);
            for s in &shapes {
                println!("{}: argmin gamma {:?}, decrease-then-increase {}", s.variant, s.argmin_gamma, s.decrease_then_increase);
            }
            write_json(c.out.join("report.json"), &SweepReport { rows, shapes, sweep_path: path_string(&path) })?;
        }
        Command::Gains(c) => {
            let scenario = Scenario::new(c.load()?)?;
            let p = &scenario.truth_params;
            let (g0, g1) = optimal_gains(&p.inertia[0], &p.stiffness[0])?;
            let mu = mu_table(&scenario)?;
            let path = c.out.join("mu.csv");
            write_mu_csv(&path, &mu)?;
            write_json(
                c.out.join("report.json"),
                &GainsReport {
                    base_optimal: rows(&g0),
                    tip_optimal: rows(&g1),
                    mu,
                    mu_path: path_string(&path),
                },
            )?;
            println!("wrote {}", path.display());
        }
        Command::Energy(c) => {
            let scenario = Scenario::new(c.load()?)?;
            let audit = energy_audit(&scenario)?;
            write_energy_csv(c.out.join("energy.csv"), &audit)?;
            write_json(c.out.join("report.json"), &audit)?;
            println!(
                "conservative drift {:.3e}, max step increase {:.3e}; dissipative drift {:.3e}, max step increase {:.3e}",
                audit.conservative.relative_drift,
                audit.conservative.max_step_increase,
                audit.dissipative.relative_drift,
                audit.dissipative.max_step_increase
            );
        }
    }
    Ok(())
}
