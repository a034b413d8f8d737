//! Base, tip and combined observers started straight against a released rod.

use cosserat_observer::gains::optimal_gains;
use cosserat_observer::harness::scenario::stream_from_states;
use cosserat_observer::liegroup::*;
use cosserat_observer::observers::*;
use cosserat_observer::rodmodel::*;
use cosserat_observer::shootsolve::*;
use nalgebra::{Matrix6, Vector3};

fn main() {
    let p = RodParameters::uniform(0.6, 30, Matrix6::identity() * 10.0, Matrix6::identity() * 1e4)
        .unwrap()
        .with_gravity(Vector3::new(0.0, 0.0, 9.81));
    let settings = SolverSettings::with_dt(5e-3);
    let solver = Solver::new(p.clone(), settings.clone()).unwrap();
    let clamp = BoundaryInputs::clamped(Pose::identity());
    let hold = BoundaryInputs::clamped_with_tip_load(Pose::identity(), Wrench::from_array([0.0, 0.0, 0.0, 1000.0, 0.0, 0.0]));
    let start = solver.solve_static(0.0, &hold, &[], &Wrench::zero()).unwrap().state;
    let truth = solver.simulate(&start, &clamp, &|_| vec![], 200).unwrap();
    let stream = stream_from_states(&truth).unwrap();

    let initial = RodState::straight(&p, Pose::identity(), &[], 0.0).unwrap();
    let (g0, g1) = optimal_gains(&p.inertia[0], &p.stiffness[0]).unwrap();
    for variant in [ObserverVariant::Base, ObserverVariant::TipD, ObserverVariant::Combined] {
        let gains = variant.gains(1.0, &g0, &g1, 0.0).unwrap();
        let setup = ObserverSetup {
            gains: &gains,
            inputs: &clamp,
            tensions: &|_| vec![],
            stream: &stream,
            initial: &initial,
            steps: 200,
            truth: Some(&truth),
            settle_rule: SettleRule::FractionOfInitial(0.02),
        };
        let run = run_observer(&p, &settings, &setup).unwrap();
        let trace: Vec<String> = run.errors.iter().step_by(10).take(8).map(|e| format!("{:.1e}", e.tip_position)).collect();
        println!("{variant:>8}: settle {:?} s, tip error {}", run.settle_time, trace.join(" "));
    }
}
