//! Ground-truth synthesis and observer runs for one configured scenario.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Matrix6, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use super::config::{Config, InitialStateKind, ScenarioKind, SignalSection};
use crate::error::{Error, Result};
use crate::gains::optimal_gains;
use crate::liegroup::{exp_se3, Pose, Twist, Wrench};
use crate::observers::{run_observer_with, MeasurementStream, ObserverGains, ObserverRunResult, ObserverSetup, ObserverVariant};
use crate::rodmodel::{integrate_poses, RodParameters, RodState};
use crate::shootsolve::{BoundaryInputs, Solver, SolverSettings};

/// Validated scenario with its truth and observer models.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: Config,
    pub truth_params: RodParameters,
    pub observer_params: RodParameters,
    pub settings: SolverSettings,
    pub steps: usize,
}

/// Forward simulation and the measurements extracted from it.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// One state per time level, starting at t = 0.
    pub states: Vec<RodState>,
    /// Noise-free boundary values of `states`.
    pub clean_stream: MeasurementStream,
    /// The stream handed to the observers (noise applied).
    pub stream: MeasurementStream,
}

/// Table-3-style averages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AverageErrors {
    pub position_percent_of_length: f64,
    pub rotation_rad: f64,
    pub linear_velocity_m_per_s: f64,
    pub angular_velocity_rad_per_s: f64,
    pub tip_position_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub time_s: f64,
    /// Energy of the estimate.
    pub total_j: f64,
    /// Energy of the estimate minus truth.
    pub error_j: f64,
}

/// Summary of one observer run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: ScenarioKind,
    pub variant: ObserverVariant,
    pub gamma: f64,
    pub seed: u64,
    pub steps: usize,
    pub node_count: usize,
    pub simulated_time_s: f64,
    pub settle_time_s: Option<f64>,
    /// Averages over `[settle_time, T]`, or the whole run if it never settles.
    pub post_settle_errors: AverageErrors,
    /// Averages over the last fifth of the run.
    pub steady_state_errors: AverageErrors,
    pub energy_trace: Vec<EnergySample>,
    pub newton_iterations: usize,
    pub sweeps: usize,
    pub wall_time_s: f64,
    pub real_time_factor: f64,
    pub states_path: Option<String>,
}

impl RunReport {
    /// Copy with the wall-clock dependent fields zeroed, for comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_s: 0.0,
            real_time_factor: 0.0,
            ..self.clone()
        }
    }
}

/// A report together with the full estimate history.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub result: ObserverRunResult,
}

/// Deterministic per-run seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17)
}

fn signal_fn(signal: Option<&SignalSection>, width: usize) -> Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync> {
    match signal {
        Some(s) => {
            let s = s.clone();
            Arc::new(move |t| s.evaluate(t))
        }
        None => Arc::new(move |_| vec![0.0; width]),
    }
}

fn to_wrench(v: &[f64]) -> Wrench {
    Wrench(Vector6::from_column_slice(v))
}

impl Scenario {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            truth_params: config.rod_parameters()?,
            observer_params: config.observer_parameters()?,
            settings: config.solver_settings(),
            steps: config.step_count(),
            config,
        })
    }

    pub fn dt(&self) -> f64 {
        self.settings.dt
    }

    pub fn duration(&self) -> f64 {
        self.dt() * self.steps as f64
    }

    /// Tendon tensions applied to the truth.
    pub fn truth_tensions(&self) -> Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync> {
        signal_fn(self.config.tensions.as_ref(), self.truth_params.tendons.len())
    }

    /// Tensions the observer is told about.
    pub fn observer_tensions(&self) -> Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync> {
        let hidden = self.config.scenario.withhold_tensions || self.config.scenario.kind == ScenarioKind::UnknownInputReplay;
        if hidden {
            signal_fn(None, self.truth_params.tendons.len())
        } else {
            self.truth_tensions()
        }
    }

    /// External tip wrench acting on the truth for t > 0 (never seen by the observer).
    pub fn disturbance(&self) -> Arc<dyn Fn(f64) -> Wrench + Send + Sync> {
        let d = signal_fn(self.config.disturbance.as_ref(), 6);
        Arc::new(move |t| to_wrench(&d(t)))
    }

    /// Boundary values the observer uses: clamped base at the origin, free tip.
    pub fn observer_inputs(&self) -> BoundaryInputs {
        BoundaryInputs::clamped(Pose::identity())
    }

    /// Reference gains `(Gamma_0, Gamma_1)` resolved against the observer model.
    pub fn reference_gains(&self) -> Result<(Matrix6<f64>, Matrix6<f64>)> {
        let p = &self.observer_params;
        let (g0, g1) = optimal_gains(&p.inertia[0], &p.stiffness[0])?;
        let o = &self.config.observer;
        Ok((o.base_gain_reference.resolve(&g0), o.tip_gain_reference.resolve(&g1)))
    }

    pub fn gains(&self, variant: ObserverVariant, gamma: f64) -> Result<ObserverGains> {
        let (g0, g1) = self.reference_gains()?;
        variant.gains(gamma, &g0, &g1, self.config.observer.proportional_ratio)
    }

    /// Observer initial state under the configured rule.
    pub fn initial_estimate(&self, truth: &GroundTruth, seed: u64) -> Result<RodState> {
        let p = &self.observer_params;
        let tensions = (self.observer_tensions())(0.0);
        match self.config.scenario.initial_state {
            InitialStateKind::Truth => Ok(truth.states[0].clone()),
            InitialStateKind::Straight => RodState::straight(p, Pose::identity(), &tensions, 0.0),
            InitialStateKind::Perturbed => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dir: [f64; 3] = UnitSphere.sample(&mut rng);
                let du = Vector3::from(dir) * self.config.scenario.perturbation_magnitude_rad_per_m;
                let strains: Vec<Twist> = p
                    .reference_strain
                    .iter()
                    .map(|x| Twist::new(x.angular() + du, x.linear()))
                    .collect();
                let wrenches = (0..p.node_count)
                    .map(|k| {
                        let act = p.actuation_wrench(&tensions, k)?;
                        Ok(Wrench(p.elastic_wrench(&strains[k], k).0 + act.0))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(RodState {
                    time: 0.0,
                    poses: integrate_poses(Pose::identity(), &strains, p.spacing()),
                    strains,
                    velocities: vec![Twist::zero(); p.node_count],
                    wrenches,
                })
            }
        }
    }
}

/// Velocity field of the first clamped-free Euler-Bernoulli mode, bending
/// about the base y axis, with tip velocity `tip_speed` along x.
pub fn first_mode_velocity(params: &RodParameters, tip_speed: f64) -> Vec<Twist> {
    let l = params.length;
    let b = 1.875_104_068_711_961 / l;
    let sigma = ((b * l).cosh() + (b * l).cos()) / ((b * l).sinh() + (b * l).sin());
    let phi = |x: f64| (b * x).cosh() - (b * x).cos() - sigma * ((b * x).sinh() - (b * x).sin());
    let dphi = |x: f64| b * ((b * x).sinh() + (b * x).sin() - sigma * ((b * x).cosh() - (b * x).cos()));
    let scale = tip_speed / phi(l);
    (0..params.node_count)
        .map(|k| {
            let x = params.arclength(k);
            Twist::new(Vector3::new(0.0, scale * dphi(x), 0.0), Vector3::new(scale * phi(x), 0.0, 0.0))
        })
        .collect()
}

/// The truth's state at t = 0: static equilibrium under the t = 0 loads
/// (the holding wrench for a release), plus the configured modal velocity.
pub fn truth_initial_state(scenario: &Scenario, solver: &Solver) -> Result<RodState> {
    let t0_tip = match scenario.config.scenario.kind {
        ScenarioKind::FreeOscillationRelease => scenario.config.holding_wrench(),
        _ => (scenario.disturbance())(0.0),
    };
    let hold = BoundaryInputs::clamped_with_tip_load(Pose::identity(), t0_tip);
    let mut initial = solver
        .solve_static(0.0, &hold, &(scenario.truth_tensions())(0.0), &Wrench::zero())
        .map_err(|e| e.at_time(0.0))?
        .state;
    let v = scenario.config.release_tip_velocity();
    if v != 0.0 {
        for (a, b) in initial.velocities.iter_mut().zip(first_mode_velocity(solver.params(), v)) {
            *a += b;
        }
    }
    Ok(initial)
}

/// Boundary values of a trajectory as a measurement stream.
pub fn stream_from_states(states: &[RodState]) -> Result<MeasurementStream> {
    MeasurementStream::new(
        states.iter().map(|s| s.time).collect(),
        Some(states.iter().map(|s| *s.base_wrench()).collect()),
        Some(states.iter().map(|s| *s.tip_pose()).collect()),
        Some(states.iter().map(|s| *s.tip_velocity()).collect()),
    )
}

fn add_noise(stream: &MeasurementStream, cfg: &Config) -> Result<MeasurementStream> {
    let noise = &cfg.noise;
    if noise.is_zero() {
        return Ok(stream.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.scenario.seed);
    let normal = |std: f64| Normal::new(0.0, std).map_err(|e| Error::Configuration(format!("noise std: {e}")));
    let (nm, nf) = (normal(noise.base_moment_std_n_m)?, normal(noise.base_force_std_n)?);
    let (nr, np) = (normal(noise.tip_rotation_std_rad)?, normal(noise.tip_position_std_m)?);
    let (nw, nv) = (
        normal(noise.tip_angular_velocity_std_rad_per_s)?,
        normal(noise.tip_linear_velocity_std_m_per_s)?,
    );
    let mut draw = |a: Normal<f64>, b: Normal<f64>| {
        let mut v = Vector6::zeros();
        for i in 0..3 {
            v[i] = a.sample(&mut rng);
        }
        for i in 3..6 {
            v[i] = b.sample(&mut rng);
        }
        v
    };
    let n = stream.len();
    let mut wrenches = Vec::with_capacity(n);
    let mut poses = Vec::with_capacity(n);
    let mut twists = Vec::with_capacity(n);
    for i in 0..n {
        let s = stream.sample(i);
        wrenches.push(Wrench(s.base_wrench.expect("full stream").0 + draw(nm, nf)));
        poses.push(s.tip_pose.expect("full stream").compose(&exp_se3(&Twist(draw(nr, np)), 1.0)));
        twists.push(Twist(s.tip_twist.expect("full stream").0 + draw(nw, nv)));
    }
    MeasurementStream::new(stream.timestamps().to_vec(), Some(wrenches), Some(poses), Some(twists))
}

/// Forward simulation of the truth model and its measurement stream.
pub fn synthesize_ground_truth(scenario: &Scenario) -> Result<GroundTruth> {
    let solver = Solver::new(scenario.truth_params.clone(), scenario.settings.clone())?;
    let tensions = scenario.truth_tensions();
    let disturbance = scenario.disturbance();
    let base = Pose::identity();
    let initial = truth_initial_state(scenario, &solver)?;
    let states = if scenario.config.scenario.kind == ScenarioKind::StaticEquilibrium {
        (0..=scenario.steps)
            .map(|k| RodState {
                time: scenario.dt() * k as f64,
                ..initial.clone()
            })
            .collect()
    } else {
        let d = disturbance.clone();
        let inputs = BoundaryInputs::clamped(base).with_tip_wrench(move |t| d(t));
        let tf = tensions.clone();
        solver.simulate(&initial, &inputs, &move |t| tf(t), scenario.steps)?
    };
    let clean_stream = stream_from_states(&states)?;
    let stream = add_noise(&clean_stream, &scenario.config)?;
    Ok(GroundTruth {
        states,
        clean_stream,
        stream,
    })
}

fn average(errors: &[crate::observers::ErrorSample], from: f64, length: f64) -> AverageErrors {
    let window: Vec<_> = errors.iter().filter(|e| e.time >= from - 1e-12).collect();
    let n = window.len().max(1) as f64;
    let sum = |f: &dyn Fn(&crate::observers::ErrorSample) -> f64| window.iter().map(|e| f(e)).sum::<f64>() / n;
    AverageErrors {
        position_percent_of_length: sum(&|e| e.position) / length * 100.0,
        rotation_rad: sum(&|e| e.rotation),
        linear_velocity_m_per_s: sum(&|e| e.linear_velocity),
        angular_velocity_rad_per_s: sum(&|e| e.angular_velocity),
        tip_position_m: sum(&|e| e.tip_position),
    }
}

/// Runs one observer against the ground truth.
pub fn run_scenario(
    scenario: &Scenario,
    truth: &GroundTruth,
    variant: ObserverVariant,
    gamma: f64,
    seed: u64,
) -> Result<RunOutcome> {
    let gains = scenario.gains(variant, gamma)?;
    let o = &scenario.config.observer;
    let stream = truth.stream.clone().without_channels(!o.use_base_wrench, !o.use_tip_pose, !o.use_tip_twist);
    gains.check_channels(&stream)?;
    let initial = scenario.initial_estimate(truth, seed)?;
    let inputs = scenario.observer_inputs();
    let tensions = scenario.observer_tensions();
    let tensions_ref = &*tensions;
    let setup = ObserverSetup {
        gains: &gains,
        inputs: &inputs,
        tensions: &|t| tensions_ref(t),
        stream: &stream,
        initial: &initial,
        steps: scenario.steps,
        truth: Some(&truth.states),
        settle_rule: o.settle_rule,
    };
    let clock = Instant::now();
    let solver = Solver::new(scenario.observer_params.clone(), scenario.settings.clone())?;
    let result = run_observer_with(&solver, &setup, |_| {})?;
    let wall = clock.elapsed().as_secs_f64().max(1e-9);

    let p = &scenario.observer_params;
    let energy_trace = result
        .states
        .iter()
        .zip(&result.errors)
        .map(|(s, e)| EnergySample {
            time_s: s.time,
            total_j: p.total_energy(s),
            error_j: e.error_energy,
        })
        .collect();
    let t_end = scenario.duration();
    let report = RunReport {
        scenario: scenario.config.scenario.kind,
        variant,
        gamma,
        seed,
        steps: scenario.steps,
        node_count: p.node_count,
        simulated_time_s: t_end,
        settle_time_s: result.settle_time,
        post_settle_errors: average(&result.errors, result.settle_time.unwrap_or(0.0), p.length),
        steady_state_errors: average(&result.errors, 0.8 * t_end, p.length),
        energy_trace,
        newton_iterations: result.newton_iterations,
        sweeps: result.sweeps,
        wall_time_s: wall,
        real_time_factor: t_end / wall,
        states_path: None,
    };
    Ok(RunOutcome { report, result })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BALANCED: &str = r#"
schema_version = 1
[scenario]
kind = "free_oscillation_release"
duration_s = 0.1
[rod]
length_m = 0.6
node_count = 12
inertia_diagonal = [10, 10, 10, 10, 10, 10]
stiffness_diagonal = [1e4, 1e4, 1e4, 1e4, 1e4, 1e4]
gravity_m_per_s2 = [0, 0, 9.81]
[solver]
dt_s = 5e-3
residual_tolerance = 1e-6
max_newton_iterations = 50
finite_difference_step = 1e-6
spatial_substeps_per_interval = 1
[release]
holding_tip_wrench = [0, 0, 0, 500, 0, 0]
"#;

    fn scenario(text: &str) -> Scenario {
        Scenario::new(Config::from_toml_str(text).unwrap()).unwrap()
    }

    #[test]
    fn zero_noise_stream_matches_trajectory() {
        let s = scenario(BALANCED);
        let gt = synthesize_ground_truth(&s).unwrap();
        assert_eq!(gt.states.len(), s.steps + 1);
        assert_eq!(gt.stream, gt.clean_stream);
        for (i, st) in gt.states.iter().enumerate() {
            let m = gt.stream.sample(i);
            assert_eq!(m.base_wrench.unwrap(), *st.base_wrench());
            assert_eq!(m.tip_pose.unwrap(), *st.tip_pose());
            assert_eq!(m.tip_twist.unwrap(), *st.tip_velocity());
        }
    }

    #[test]
    fn release_starts_from_held_equilibrium() {
        let s = scenario(BALANCED);
        let gt = synthesize_ground_truth(&s).unwrap();
        let tip0 = gt.states[0].tip_wrench();
        assert!((tip0.0 - Vector6::new(0.0, 0.0, 0.0, 500.0, 0.0, 0.0)).norm() < 1e-4);
        assert!(gt.states[0].tip_pose().position.x > 0.01);
        assert!(gt.states[1].tip_wrench().norm() < 1e-4);
    }

    #[test]
    fn static_scenario_is_constant_and_carries_the_weight() {
        let text = BALANCED
            .replace("free_oscillation_release", "static_equilibrium")
            .replace("holding_tip_wrench = [0, 0, 0, 500, 0, 0]", "holding_tip_wrench = [0, 0, 0, 0, 0, 0]");
        let s = scenario(&text);
        let gt = synthesize_ground_truth(&s).unwrap();
        let w0 = *gt.states[0].base_wrench();
        assert!(gt.states.iter().all(|x| *x.base_wrench() == w0));
        // Base force balances the weight M_l g L.
        let weight = 10.0 * 9.81 * 0.6;
        assert!((w0.force().z - weight).abs() < 1e-6 * weight, "{:?}", w0.force());
        assert!(w0.force().xy().norm() < 1e-9 && w0.moment().norm() < 1e-9);
    }

    #[test]
    fn noise_is_seeded() {
        let noisy = BALANCED.replace("[release]", "[noise]\ntip_position_std_m = 1e-3\nbase_force_std_n = 0.5\n[release]");
        let a = synthesize_ground_truth(&scenario(&noisy)).unwrap();
        let b = synthesize_ground_truth(&scenario(&noisy)).unwrap();
        assert_eq!(a.stream, b.stream);
        assert_ne!(a.stream, a.clean_stream);
        let reseeded = noisy.replace("duration_s = 0.1", "duration_s = 0.1\nseed = 3");
        let c = synthesize_ground_truth(&scenario(&reseeded)).unwrap();
        assert_ne!(a.stream, c.stream);
    }

    #[test]
    fn prediction_from_truth_has_zero_error() {
        let text = BALANCED.replace("duration_s = 0.1", "duration_s = 0.1\ninitial_state = \"truth\"");
        let s = scenario(&text);
        let gt = synthesize_ground_truth(&s).unwrap();
        let out = run_scenario(&s, &gt, ObserverVariant::Prediction, 1.0, 0).unwrap();
        let e = out.report.post_settle_errors;
        assert!(e.position_percent_of_length <= 1e-8 && e.rotation_rad <= 1e-8, "{e:?}");
        assert!(out.report.real_time_factor > 0.0);
        assert_eq!(out.report.energy_trace.len(), s.steps + 1);
    }

    #[test]
    fn runs_are_deterministic() {
        let text = BALANCED.replace("duration_s = 0.1", "duration_s = 0.1\ninitial_state = \"perturbed\"\nperturbation_magnitude_rad_per_m = 0.2");
        let s = scenario(&text);
        let gt = synthesize_ground_truth(&s).unwrap();
        let a = run_scenario(&s, &gt, ObserverVariant::Base, 1.0, 5).unwrap().report;
        let b = run_scenario(&s, &gt, ObserverVariant::Base, 1.0, 5).unwrap().report;
        assert_eq!(a.without_timing(), b.without_timing());
        let c = run_scenario(&s, &gt, ObserverVariant::Base, 1.0, 6).unwrap().report;
        assert_ne!(a.without_timing(), c.without_timing());
    }

    #[test]
    fn missing_channel_is_a_configuration_error() {
        let text = BALANCED.replace("[release]", "[observer]\nuse_base_wrench = false\n[release]");
        let s = scenario(&text);
        let gt = synthesize_ground_truth(&s).unwrap();
        let r = run_scenario(&s, &gt, ObserverVariant::Base, 1.0, 0);
        assert!(matches!(r, Err(Error::Configuration(_))));
        assert!(run_scenario(&s, &gt, ObserverVariant::TipD, 1.0, 0).is_ok());
    }

    #[test]
    fn scaled_reference_is_blockwise() {
        let g = Matrix6::from_diagonal(&Vector6::new(1.0, 1.0, 1.0, 2.0, 2.0, 2.0));
        let r = super::super::config::GainReference::Scaled {
            angular_scale: 4.0,
            linear_scale: 0.5,
        }
        .resolve(&g);
        approx::assert_relative_eq!(r, Matrix6::from_diagonal(&Vector6::new(4.0, 4.0, 4.0, 1.0, 1.0, 1.0)), epsilon = 1e-15);
    }
}
