//! Conservative and tip-damped energy traces from a config file.

use cosserat_observer::harness::*;

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/steel_energy.toml".into());
    let scenario = Scenario::new(Config::from_file(&path).unwrap()).unwrap();
    let audit = energy_audit(&scenario).unwrap();
    let c = &audit.conservative;
    let d = &audit.dissipative;
    for i in (0..c.times_s.len()).step_by(c.times_s.len() / 10) {
        println!("t={:.3} free {:.5e} J damped {:.5e} J", c.times_s[i], c.energies_j[i], d.energies_j[i]);
    }
    println!("drift {:.2e}, damped largest step increase {:.2e}", c.relative_drift, d.max_step_increase);
}
