//! Energy audit: free evolution, then the same start with a damping tip.

use serde::{Deserialize, Serialize};

use super::scenario::{truth_initial_state, Scenario};
use crate::error::Result;
use crate::liegroup::{Pose, Twist};
use crate::observers::{run_observer_with, MeasurementStream, ObserverSetup, ObserverVariant, SettleRule};
use crate::rodmodel::{RodParameters, RodState};
use crate::shootsolve::{BoundaryInputs, Solver};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub times_s: Vec<f64>,
    pub energies_j: Vec<f64>,
    /// `E(T) / E(0) - 1`.
    pub relative_drift: f64,
    /// Largest `(E_{k+1} - E_k) / E_k` over the run.
    pub max_step_increase: f64,
}

impl EnergyTrace {
    pub fn from_states(params: &RodParameters, states: &[RodState]) -> Self {
        let times_s: Vec<f64> = states.iter().map(|s| s.time).collect();
        let energies_j: Vec<f64> = states.iter().map(|s| params.total_energy(s)).collect();
        Self::from_series(times_s, energies_j)
    }

    pub fn from_series(times_s: Vec<f64>, energies_j: Vec<f64>) -> Self {
        let e0 = energies_j.first().copied().unwrap_or(0.0);
        let last = energies_j.last().copied().unwrap_or(0.0);
        let relative_drift = if e0 > 0.0 { last / e0 - 1.0 } else { 0.0 };
        let max_step_increase = energies_j
            .windows(2)
            .map(|w| if w[0] > 0.0 { (w[1] - w[0]) / w[0] } else { w[1] - w[0] })
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            times_s,
            energies_j,
            relative_drift,
            max_step_increase: if max_step_increase.is_finite() { max_step_increase } else { 0.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    /// Clamped base, free tip, scenario forcing.
    pub conservative: EnergyTrace,
    /// Same start with the tip-D law `F_1 = -Gamma_D eta(L)` against a rod at rest.
    pub dissipative: EnergyTrace,
}

pub fn energy_audit(scenario: &Scenario) -> Result<EnergyAudit> {
    let p = &scenario.truth_params;
    let solver = Solver::new(p.clone(), scenario.settings.clone())?;
    let tensions = scenario.truth_tensions();
    let initial = truth_initial_state(scenario, &solver)?;
    let free = BoundaryInputs::clamped(Pose::identity());
    let tf = tensions.clone();
    let states = solver.simulate(&initial, &free, &move |t| tf(t), scenario.steps)?;
    let conservative = EnergyTrace::from_states(p, &states);

    let rest = RodState::straight(p, Pose::identity(), &tensions(0.0), 0.0)?;
    let times: Vec<f64> = states.iter().map(|s| s.time).collect();
    let n = times.len();
    let stream = MeasurementStream::new(times, None, Some(vec![*rest.tip_pose(); n]), Some(vec![Twist::zero(); n]))?;
    let gains = scenario.gains(ObserverVariant::TipD, scenario.config.observer.gamma)?;
    let tensions_ref = &*tensions;
    let setup = ObserverSetup {
        gains: &gains,
        inputs: &free,
        tensions: &|t| tensions_ref(t),
        stream: &stream,
        initial: &initial,
        steps: scenario.steps,
        truth: None,
        settle_rule: SettleRule::FractionOfInitial(0.02),
    };
    let damped = run_observer_with(&solver, &setup, |_| {})?;
    let dissipative = EnergyTrace::from_states(p, &damped.states);
    Ok(EnergyAudit {
        conservative,
        dissipative,
    })
}
