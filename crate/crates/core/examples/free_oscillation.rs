//! Releases a balanced rod from a held tip and prints the tip trace and energy.

use cosserat_observer::liegroup::*;
use cosserat_observer::rodmodel::*;
use cosserat_observer::shootsolve::*;
use nalgebra::{Matrix6, Vector3};

fn main() {
    let p = RodParameters::uniform(0.6, 30, Matrix6::identity() * 10.0, Matrix6::identity() * 1e4)
        .unwrap()
        .with_gravity(Vector3::new(0.0, 0.0, 9.81));
    let solver = Solver::new(p.clone(), SolverSettings::with_dt(5e-3)).unwrap();
    let hold = BoundaryInputs::clamped_with_tip_load(Pose::identity(), Wrench::from_array([0.0, 0.0, 0.0, 1000.0, 0.0, 0.0]));
    let start = solver.solve_static(0.0, &hold, &[], &Wrench::zero()).unwrap().state;
    let traj = solver.simulate(&start, &BoundaryInputs::clamped(Pose::identity()), &|_| vec![], 200).unwrap();
    for s in traj.iter().step_by(20) {
        let tip = s.tip_pose().position;
        println!("t={:.3}  tip=({:+.4}, {:+.4}, {:+.4})  E={:.4} J", s.time, tip.x, tip.y, tip.z, p.total_energy(s));
    }
}
