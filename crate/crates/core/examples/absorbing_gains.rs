//! Perfectly absorbing gains and the convergence-rate curve of a scalar rod.

use cosserat_observer::gains::*;
use nalgebra::Matrix6;

fn main() {
    let (m, k) = (Matrix6::identity(), Matrix6::identity() * 3.0);
    let (g0, g1) = optimal_gains(&m, &k).unwrap();
    println!("Gamma0* diag {}", g0.diagonal().transpose());
    println!("Gamma1* diag {}", g1.diagonal().transpose());
    let a = riemann_setup(&m, &k).unwrap();
    println!("wave speeds {}", a.sigma.transpose());
    println!("extinction time, both ends absorbing: {:.4} s", finite_time_bound(&a.sigma, 1.0, Absorbing::Both));

    let gammas = [0.25, 0.5, 1.0, 1.5, 1.7, 1.75, 2.0, 3.0];
    for s in mu_sweep(&m, &k, 1.0, &Matrix6::identity(), &gammas, SweptGain::Tip).unwrap() {
        let flag = if s.singularity_bracket { "  <- absorbing point in [this, next]" } else { "" };
        println!("Gamma1 = {:<5} mu_max = {:.4}{flag}", s.gamma_scale, s.mu_max);
    }
}
