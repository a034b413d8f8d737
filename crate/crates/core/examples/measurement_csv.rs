//! Writes a boundary measurement stream to CSV and reads it back.

use cosserat_observer::harness::scenario::stream_from_states;
use cosserat_observer::liegroup::*;
use cosserat_observer::observers::MeasurementStream;
use cosserat_observer::rodmodel::*;
use cosserat_observer::shootsolve::*;
use nalgebra::{Matrix6, Vector3};

fn main() {
    let p = RodParameters::uniform(0.6, 12, Matrix6::identity() * 10.0, Matrix6::identity() * 1e4)
        .unwrap()
        .with_gravity(Vector3::new(0.0, 0.0, 9.81));
    let solver = Solver::new(p.clone(), SolverSettings::with_dt(5e-3)).unwrap();
    let start = RodState::straight(&p, Pose::identity(), &[], 0.0).unwrap();
    let traj = solver.simulate(&start, &BoundaryInputs::clamped(Pose::identity()), &|_| vec![], 20).unwrap();
    let stream = stream_from_states(&traj).unwrap();
    let mut buf = Vec::new();
    stream.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    println!("{}", text.lines().take(3).collect::<Vec<_>>().join("\n"));
    let back = MeasurementStream::read_csv(text.as_bytes()).unwrap();
    let mid = back.interpolate(0.0525).unwrap();
    println!("{} samples; tip z at t=0.0525: {:.6}", back.len(), mid.tip_pose.unwrap().position.z);
}
