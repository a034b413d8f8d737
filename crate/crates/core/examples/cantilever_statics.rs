//! Static shapes: a steel cantilever under its weight and a tendon-bent arc.

use cosserat_observer::liegroup::*;
use cosserat_observer::rodmodel::*;
use cosserat_observer::shootsolve::*;
use nalgebra::Vector3;

fn main() {
    let (m, k) = build_section_matrices(0.8e-3, 4.48e4, 200e9, 76.92e9).unwrap();
    let p = RodParameters::uniform(0.15, 30, m, k).unwrap().with_gravity(Vector3::new(9.81, 0.0, 0.0));
    let solver = Solver::new(p.clone(), SolverSettings::default()).unwrap();
    let clamp = BoundaryInputs::clamped(Pose::identity());
    let sol = solver.solve_static(0.0, &clamp, &[], &Wrench::zero()).unwrap();
    let w = p.inertia[0][(3, 3)] * 9.81;
    let beam = w * p.length.powi(4) / (8.0 * p.stiffness[0][(0, 0)]);
    println!("self-weight tip deflection {:.4e} m, beam theory {beam:.4e} m", sol.state.tip_pose().position.x);
    println!("base wrench {}", sol.state.base_wrench().0.transpose());

    let p = RodParameters::uniform(0.3, 30, m, k)
        .unwrap()
        .with_tendon(TendonRouting::constant_offset(Vector3::new(0.01, 0.0, 0.0), 30, 29))
        .unwrap();
    let solver = Solver::new(p.clone(), SolverSettings::default()).unwrap();
    let sol = solver.solve_static(0.0, &clamp, &[0.5], &Wrench::zero()).unwrap();
    let kappa = 0.5 * 0.01 / p.stiffness[0][(1, 1)];
    println!(
        "tendon at 0.5 N: tip {} ({} Newton iterations), expected curvature {kappa:.4} 1/m",
        sol.state.tip_pose().position.transpose(),
        sol.report.newton_iterations
    );
}
