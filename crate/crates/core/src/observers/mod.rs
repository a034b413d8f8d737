//! Boundary observers: a copy of the rod model driven by corrective terms at
//! the base (wrench error) and the tip (pose and twist error).

mod measurement;
mod metrics;

pub use measurement::{interpolate_pose, MeasurementSample, MeasurementStream, CSV_HEADER, QUATERNION_NORM_TOLERANCE};
pub use metrics::{settle_time, ErrorSample, SettleRule};

use nalgebra::{Matrix6, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{log_se3, Pose, Twist, Wrench};
use crate::rodmodel::{RodParameters, RodState};
use crate::shootsolve::{BoundaryInputs, BoundaryStrategy, SolvedState, Solver, SolverSettings, TimeHistory};

/// Tolerance on negative eigenvalues when checking gains for PSD-ness.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// `Gamma_P = DEFAULT_PROPORTIONAL_RATIO * Gamma_D` unless configured otherwise.
pub const DEFAULT_PROPORTIONAL_RATIO: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverGains {
    /// `Gamma_0`: base wrench error to twist correction.
    pub base: Matrix6<f64>,
    /// `Gamma_P`: tip pose error to wrench correction.
    pub proportional: Matrix6<f64>,
    /// `Gamma_D`: tip twist error to wrench correction.
    pub derivative: Matrix6<f64>,
}

impl Default for ObserverGains {
    fn default() -> Self {
        Self::zero()
    }
}

impl ObserverGains {
    pub fn new(base: Matrix6<f64>, proportional: Matrix6<f64>, derivative: Matrix6<f64>) -> Result<Self> {
        let g = Self {
            base,
            proportional,
            derivative,
        };
        g.validate()?;
        Ok(g)
    }

    /// Pure prediction.
    pub fn zero() -> Self {
        Self {
            base: Matrix6::zeros(),
            proportional: Matrix6::zeros(),
            derivative: Matrix6::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("base", &self.base), ("proportional", &self.proportional), ("derivative", &self.derivative)] {
            if !m.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} gain has non-finite entries")));
            }
            if (m - m.transpose()).norm() > 1e-12 * m.norm().max(1.0) {
                return Err(Error::InvalidArgument(format!("{name} gain is not symmetric")));
            }
            let min = SymmetricEigen::new(*m).eigenvalues.min();
            if min < -PSD_TOLERANCE * m.norm().max(1.0) {
                return Err(Error::InvalidArgument(format!("{name} gain is not PSD (eigenvalue {min:e})")));
            }
        }
        Ok(())
    }

    pub fn uses_base(&self) -> bool {
        self.base.iter().any(|x| *x != 0.0)
    }

    pub fn uses_tip_pose(&self) -> bool {
        self.proportional.iter().any(|x| *x != 0.0)
    }

    pub fn uses_tip_twist(&self) -> bool {
        self.derivative.iter().any(|x| *x != 0.0)
    }

    /// Configuration error if a nonzero gain has no measurement to act on.
    pub fn check_channels(&self, stream: &MeasurementStream) -> Result<()> {
        let missing = [
            (self.uses_base() && !stream.has_base_wrench(), "base gain needs the base wrench channel"),
            (self.uses_tip_pose() && !stream.has_tip_pose(), "proportional gain needs the tip pose channel"),
            (self.uses_tip_twist() && !stream.has_tip_twist(), "derivative gain needs the tip twist channel"),
        ];
        match missing.iter().find(|(m, _)| *m) {
            Some((_, msg)) => Err(Error::Configuration((*msg).into())),
            None => Ok(()),
        }
    }
}

/// The observer families compared in the sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObserverVariant {
    #[serde(rename = "none")]
    Prediction,
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "tipD")]
    TipD,
    #[serde(rename = "tipPD")]
    TipPD,
    #[serde(rename = "combined")]
    Combined,
}

impl ObserverVariant {
    pub const ALL: [ObserverVariant; 5] = [
        ObserverVariant::Prediction,
        ObserverVariant::Base,
        ObserverVariant::TipD,
        ObserverVariant::TipPD,
        ObserverVariant::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObserverVariant::Prediction => "none",
            ObserverVariant::Base => "base",
            ObserverVariant::TipD => "tipD",
            ObserverVariant::TipPD => "tipPD",
            ObserverVariant::Combined => "combined",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Configuration(format!("unknown observer variant {name:?}")))
    }

    /// Gains `gamma * reference`; `Gamma_P = ratio * Gamma_D` where a P term applies.
    ///
    /// The combined variant carries the P term only for a positive ratio.
    pub fn gains(
        self,
        gamma: f64,
        base_reference: &Matrix6<f64>,
        tip_reference: &Matrix6<f64>,
        proportional_ratio: f64,
    ) -> Result<ObserverGains> {
        let g0 = base_reference * gamma;
        let gd = tip_reference * gamma;
        let z = Matrix6::zeros();
        let (b, p, d) = match self {
            ObserverVariant::Prediction => (z, z, z),
            ObserverVariant::Base => (g0, z, z),
            ObserverVariant::TipD => (z, z, gd),
            ObserverVariant::TipPD => (z, gd * proportional_ratio, gd),
            ObserverVariant::Combined => (g0, gd * proportional_ratio.max(0.0), gd),
        };
        ObserverGains::new(b, p, d)
    }
}

impl std::fmt::Display for ObserverVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `Gamma_0 (Lambda_hat(0) - Lambda_bar_0)`.
pub fn base_correction(estimated: &Wrench, measured: &Wrench, gamma0: &Matrix6<f64>) -> Twist {
    Twist(gamma0 * (estimated.0 - measured.0))
}

/// `-Gamma_P log(g_bar^-1 g_hat)^v - Gamma_D (eta_hat - eta_bar)`.
pub fn tip_correction(
    estimated_pose: &Pose,
    estimated_twist: &Twist,
    measured_pose: &Pose,
    measured_twist: &Twist,
    proportional: &Matrix6<f64>,
    derivative: &Matrix6<f64>,
) -> Result<Wrench> {
    let mut w = -(derivative * (estimated_twist.0 - measured_twist.0));
    if proportional.iter().any(|x| *x != 0.0) {
        let err = log_se3(&(measured_pose.inverse() * *estimated_pose))?;
        w -= proportional * err.0;
    }
    Ok(Wrench(w))
}

/// Boundary strategy of one observer step: physical inputs plus corrections
/// evaluated against the measurement sample at the new time level.
pub struct ObserverBoundary<'a> {
    pub inputs: &'a BoundaryInputs,
    pub gains: &'a ObserverGains,
    pub sample: MeasurementSample,
}

impl BoundaryStrategy for ObserverBoundary<'_> {
    fn base_pose(&self, t: f64) -> Pose {
        (self.inputs.base_pose)(t)
    }

    fn base_twist(&self, t: f64, base_wrench: &Wrench) -> Result<Twist> {
        let eta0 = (self.inputs.base_twist)(t);
        if !self.gains.uses_base() {
            return Ok(eta0);
        }
        let measured = self
            .sample
            .base_wrench
            .ok_or_else(|| Error::Configuration("base wrench channel missing".into()))?;
        Ok(eta0 + base_correction(base_wrench, &measured, &self.gains.base))
    }

    fn tip_wrench(&self, t: f64, tip_pose: &Pose, tip_twist: &Twist) -> Result<Wrench> {
        let f1 = (self.inputs.tip_wrench)(t);
        let (p, d) = (self.gains.uses_tip_pose(), self.gains.uses_tip_twist());
        if !p && !d {
            return Ok(f1);
        }
        let measured_pose = match (p, self.sample.tip_pose) {
            (true, Some(g)) => g,
            (true, None) => return Err(Error::Configuration("tip pose channel missing".into())),
            (false, _) => *tip_pose,
        };
        let measured_twist = match (d, self.sample.tip_twist) {
            (true, Some(v)) => v,
            (true, None) => return Err(Error::Configuration("tip twist channel missing".into())),
            (false, _) => *tip_twist,
        };
        let c = tip_correction(
            tip_pose,
            tip_twist,
            &measured_pose,
            &measured_twist,
            &self.gains.proportional,
            &self.gains.derivative,
        )?;
        Ok(f1 + c)
    }
}

/// Body-frame backward difference `log(g_prev^-1 g)^v / dt` at every node.
pub fn reconstruct_velocity(previous: &[Pose], current: &[Pose], dt: f64) -> Result<Vec<Twist>> {
    if previous.len() != current.len() {
        return Err(Error::InvalidArgument("pose fields differ in length".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    previous
        .iter()
        .zip(current)
        .map(|(a, b)| log_se3(&(a.inverse() * *b)).map(|x| x * (1.0 / dt)))
        .collect()
}

/// Output of [`run_observer`].
#[derive(Clone, Debug)]
pub struct ObserverRunResult {
    /// Estimates at every output time, starting with the initial guess.
    /// Poses are anchored at the physical base; velocities are the solver's.
    pub states: Vec<RodState>,
    /// Velocity fields recomputed from consecutive pose fields.
    pub reconstructed_velocities: Vec<Vec<Twist>>,
    /// Per-step errors against the ground truth, when supplied.
    pub errors: Vec<ErrorSample>,
    pub settle_time: Option<f64>,
    pub newton_iterations: usize,
    pub sweeps: usize,
}

/// Everything [`run_observer`] needs besides the rod and solver settings.
pub struct ObserverSetup<'a> {
    pub gains: &'a ObserverGains,
    pub inputs: &'a BoundaryInputs,
    /// Tendon tensions known to the observer.
    pub tensions: &'a (dyn Fn(f64) -> Vec<f64> + Sync),
    pub stream: &'a MeasurementStream,
    pub initial: &'a RodState,
    pub steps: usize,
    /// Ground-truth states at the same time levels (index 0 at the initial time).
    pub truth: Option<&'a [RodState]>,
    pub settle_rule: SettleRule,
}

/// Time-marches the observer for `setup.steps` steps.
pub fn run_observer(params: &RodParameters, settings: &SolverSettings, setup: &ObserverSetup<'_>) -> Result<ObserverRunResult> {
    let solver = Solver::new(params.clone(), settings.clone())?;
    run_observer_with(&solver, setup, |_| {})
}

/// As [`run_observer`] with a prebuilt solver and a per-step callback.
pub fn run_observer_with(
    solver: &Solver,
    setup: &ObserverSetup<'_>,
    mut on_step: impl FnMut(&SolvedState),
) -> Result<ObserverRunResult> {
    setup.gains.validate()?;
    setup.gains.check_channels(setup.stream)?;
    let dt = solver.settings().dt;
    let t0 = setup.initial.time;
    let t_end = t0 + dt * setup.steps as f64;
    if setup.stream.first_time() > t0 + 1e-9 || setup.stream.last_time() < t_end - 1e-9 {
        return Err(Error::Configuration(format!(
            "measurements cover [{}, {}] but the run needs [{t0}, {t_end}]",
            setup.stream.first_time(),
            setup.stream.last_time()
        )));
    }
    if let Some(truth) = setup.truth {
        if truth.len() < setup.steps + 1 {
            return Err(Error::Configuration("ground truth shorter than the run".into()));
        }
    }
    let mut history = TimeHistory::new(setup.initial, &(setup.tensions)(t0), dt)?;
    let mut states = Vec::with_capacity(setup.steps + 1);
    let mut recon = Vec::with_capacity(setup.steps + 1);
    let mut errors = Vec::new();
    let mut iterations = 0;
    let mut sweeps = 0;
    states.push(setup.initial.clone());
    recon.push(setup.initial.velocities.clone());
    if let Some(truth) = setup.truth {
        errors.push(ErrorSample::between(solver.params(), setup.initial, &setup.initial.velocities, &truth[0]));
    }
    for k in 1..=setup.steps {
        let t = t0 + dt * k as f64;
        let boundary = ObserverBoundary {
            inputs: setup.inputs,
            gains: setup.gains,
            sample: setup.stream.interpolate(t).map_err(|e| e.at_time(t))?,
        };
        let solved = solver.step(&mut history, &boundary, &(setup.tensions)(t))?;
        iterations += solved.report.newton_iterations;
        sweeps += solved.report.sweeps;
        on_step(&solved);
        let eta = reconstruct_velocity(&states[k - 1].poses, &solved.state.poses, dt).map_err(|e| e.at_time(t))?;
        if let Some(truth) = setup.truth {
            errors.push(ErrorSample::between(solver.params(), &solved.state, &eta, &truth[k]));
        }
        states.push(solved.state);
        recon.push(eta);
    }
    let settle = if errors.is_empty() {
        None
    } else {
        let times: Vec<f64> = errors.iter().map(|e| e.time).collect();
        let tip: Vec<f64> = errors.iter().map(|e| e.tip_position).collect();
        settle_time(&times, &tip, setup.settle_rule)
    };
    Ok(ObserverRunResult {
        states,
        reconstructed_velocities: recon,
        errors,
        settle_time: settle,
        newton_iterations: iterations,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::exp_se3;
    use approx::assert_relative_eq;
    use nalgebra::{Vector3, Vector6};

    fn diag_gain() -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0))
    }

    #[test]
    fn base_correction_examples() {
        let w = Wrench::from_array([0.3, -0.2, 0.1, 1.0, 2.0, 3.0]);
        assert_eq!(base_correction(&w, &w, &diag_gain()), Twist::zero());
        let other = Wrench::from_array([5.0; 6]);
        assert_eq!(base_correction(&w, &other, &Matrix6::zeros()), Twist::zero());
        let mut g = diag_gain();
        g[(1, 3)] = 0.5;
        g[(3, 1)] = 0.5;
        let c = base_correction(&Wrench::from_array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0]), &Wrench::zero(), &g);
        assert_eq!(c.0, g.column(3).into_owned());
    }

    #[test]
    fn tip_correction_examples() {
        let g = exp_se3(&Twist::from_array([0.1, 0.2, -0.3, 0.0, 0.1, 0.5]), 1.0);
        let v = Twist::from_array([0.5, 0.0, 0.1, 0.0, 0.2, 0.0]);
        let zero = tip_correction(&g, &v, &g, &v, &diag_gain(), &diag_gain()).unwrap();
        assert_relative_eq!(zero.0, Vector6::zeros(), epsilon = 1e-14);

        let e3 = Twist::from_array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let w = tip_correction(&g, &(v + e3), &g, &v, &Matrix6::zeros(), &diag_gain()).unwrap();
        assert_relative_eq!(w.0, -diag_gain().column(2).into_owned(), epsilon = 1e-14);
        let neg = tip_correction(&g, &(v - e3), &g, &v, &Matrix6::zeros(), &diag_gain()).unwrap();
        assert_eq!(neg.0, -w.0);

        let delta = 0.07;
        let est = Pose::from_translation(Vector3::new(0.0, 0.0, delta));
        let w = tip_correction(&est, &v, &Pose::identity(), &v, &diag_gain(), &Matrix6::zeros()).unwrap();
        assert_relative_eq!(w.0, -(diag_gain() * Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, delta)), epsilon = 1e-15);
    }

    #[test]
    fn tip_correction_propagates_log_domain() {
        let half_turn = exp_se3(&Twist::from_array([std::f64::consts::PI, 0.0, 0.0, 0.0, 0.0, 0.0]), 1.0);
        let r = tip_correction(&half_turn, &Twist::zero(), &Pose::identity(), &Twist::zero(), &diag_gain(), &Matrix6::zeros());
        assert!(matches!(r, Err(Error::LogDomain { .. })));
    }

    #[test]
    fn reconstruct_velocity_examples() {
        let field: Vec<Pose> = (0..5).map(|k| Pose::from_translation(Vector3::new(0.0, 0.0, k as f64))).collect();
        let eta = reconstruct_velocity(&field, &field, 0.01).unwrap();
        assert!(eta.iter().all(|e| e.norm() == 0.0));
        let v = Vector3::new(0.3, -0.1, 0.2);
        let dt = 0.01;
        let moved: Vec<Pose> = field.iter().map(|p| Pose::from_translation(p.position + v * dt)).collect();
        for e in reconstruct_velocity(&field, &moved, dt).unwrap() {
            assert_relative_eq!(e.linear(), v, epsilon = 1e-12);
            assert_eq!(e.angular(), Vector3::zeros());
        }
    }

    #[test]
    fn reconstruct_constant_spin() {
        let omega = 2.0;
        for dt in [1e-2, 5e-3] {
            let a = exp_se3(&Twist::from_array([0.0, 0.0, omega, 0.0, 0.0, 0.0]), 0.3);
            let b = exp_se3(&Twist::from_array([0.0, 0.0, omega, 0.0, 0.0, 0.0]), 0.3 + dt);
            let e = reconstruct_velocity(&[a], &[b], dt).unwrap();
            assert_relative_eq!(e[0].angular(), Vector3::new(0.0, 0.0, omega), epsilon = 1e-9);
        }
    }

    #[test]
    fn variant_gains_follow_reference_and_ratio() {
        let g0 = Matrix6::identity() * 2.0;
        let g1 = Matrix6::identity() * 3.0;
        let pd = ObserverVariant::TipPD.gains(0.5, &g0, &g1, DEFAULT_PROPORTIONAL_RATIO).unwrap();
        assert_eq!(pd.derivative, g1 * 0.5);
        assert_eq!(pd.proportional, g1 * 10.0);
        assert!(!pd.uses_base());
        let c = ObserverVariant::Combined.gains(1.0, &g0, &g1, 0.0).unwrap();
        assert!(c.uses_base() && c.uses_tip_twist() && !c.uses_tip_pose());
        assert_eq!(ObserverVariant::parse("tippd").unwrap(), ObserverVariant::TipPD);
        assert!(ObserverVariant::parse("kalman").is_err());
    }

    #[test]
    fn gains_must_be_psd() {
        let mut bad = Matrix6::identity();
        bad[(0, 0)] = -1.0;
        assert!(ObserverGains::new(bad, Matrix6::zeros(), Matrix6::zeros()).is_err());
        let mut asym = Matrix6::identity();
        asym[(0, 1)] = 0.3;
        assert!(ObserverGains::new(Matrix6::zeros(), asym, Matrix6::zeros()).is_err());
    }

    #[test]
    fn missing_channel_is_configuration_error() {
        let stream = MeasurementStream::new(vec![0.0, 1.0], None, None, Some(vec![Twist::zero(); 2])).unwrap();
        let gains = ObserverGains::new(Matrix6::identity(), Matrix6::zeros(), Matrix6::zeros()).unwrap();
        assert!(matches!(gains.check_channels(&stream), Err(Error::Configuration(_))));
        let tip = ObserverGains::new(Matrix6::zeros(), Matrix6::zeros(), Matrix6::identity()).unwrap();
        assert!(tip.check_channels(&stream).is_ok());
    }
}
