//! Rebuilds the linear velocity of a stiff steel rod from its angular motion.

use cosserat_observer::harness::scenario::first_mode_velocity;
use cosserat_observer::liegroup::*;
use cosserat_observer::rodmodel::*;
use cosserat_observer::shootsolve::*;

fn main() {
    let (m, k) = build_section_matrices(0.8e-3, 4.48e4, 200e9, 76.92e9).unwrap();
    let p = RodParameters::uniform(0.25, 30, m, k).unwrap();
    let solver = Solver::new(p.clone(), SolverSettings::with_dt(1e-3)).unwrap();
    let mut start = RodState::straight(&p, Pose::identity(), &[], 0.0).unwrap();
    start.velocities = first_mode_velocity(&p, 0.1);
    let traj = solver.simulate(&start, &BoundaryInputs::clamped(Pose::identity()), &|_| vec![], 100).unwrap();
    for s in traj.iter().step_by(25) {
        let rs: Vec<_> = s.poses.iter().map(|g| g.rotation).collect();
        let ws: Vec<_> = s.velocities.iter().map(|v| v.angular()).collect();
        let v = kirchhoff_linear_velocity(&p, &rs, &ws, s.velocities[0].linear()).unwrap();
        let tip = s.velocities.last().unwrap().linear();
        println!("t={:.3} tip v simulated {:+.5} rebuilt {:+.5}", s.time, tip.x, v.last().unwrap().x);
    }
}
