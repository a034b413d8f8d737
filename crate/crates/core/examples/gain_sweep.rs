//! Settle time across gain scales and observer variants from a config file.
//!
//! `cargo run --release --example gain_sweep -- configs/balanced_release.toml`

use cosserat_observer::harness::*;
use cosserat_observer::observers::ObserverVariant;

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/balanced_release.toml".into());
    let cfg = Config::from_file(&path).unwrap();
    let sweep = cfg.sweep.clone().expect("config has a [sweep] section");
    let variants: Vec<ObserverVariant> = sweep.variants.iter().map(|v| ObserverVariant::parse(v).unwrap()).collect();
    let scenario = Scenario::new(cfg).unwrap();
    let truth = synthesize_ground_truth(&scenario).unwrap();
    let rows = run_sweep(&scenario, &truth, &variants, &sweep.gammas, scenario.config.scenario.seed).unwrap();
    for r in &rows {
        println!("{:>8} gamma={:<4} settle={:?}", r.variant, r.gamma, r.settle_time_s);
    }
    for s in sweep_shapes(&rows) {
        println!("{}: fastest at gamma {:?}, valley shape {}", s.variant, s.argmin_gamma, s.decrease_then_increase);
    }
}
