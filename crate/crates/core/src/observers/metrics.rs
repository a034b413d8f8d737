//! Estimation error metrics and the settle-time rule.

use serde::{Deserialize, Serialize};

use crate::liegroup::{log_so3, Twist};
use crate::rodmodel::{RodParameters, RodState};

/// Threshold used by [`settle_time`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SettleRule {
    /// Fraction of the first error in the series.
    FractionOfInitial(f64),
    /// Fixed threshold in the series' units.
    Absolute(f64),
}

impl SettleRule {
    pub fn threshold(&self, initial: f64) -> f64 {
        match *self {
            SettleRule::FractionOfInitial(f) => f * initial,
            SettleRule::Absolute(a) => a,
        }
    }
}

/// First time after which the series stays strictly below the threshold.
///
/// Scans from the end, so a dip that is followed by a re-excursion does not
/// count. `None` if the last sample is not below the threshold.
pub fn settle_time(times: &[f64], errors: &[f64], rule: SettleRule) -> Option<f64> {
    let first = *errors.first()?;
    let threshold = rule.threshold(first);
    if matches!(rule, SettleRule::FractionOfInitial(_)) && first == 0.0 {
        return times.first().copied();
    }
    match errors.iter().rposition(|e| !(*e < threshold)) {
        None => times.first().copied(),
        Some(i) if i + 1 < errors.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

/// Errors of one estimate against the ground truth at the same time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub time: f64,
    /// `|p_hat(L) - p(L)|` (m).
    pub tip_position: f64,
    /// Node-averaged position error (m).
    pub position: f64,
    /// Node-averaged rotation angle of `R_hat^T R` (rad).
    pub rotation: f64,
    /// Node-averaged error of the reconstructed linear velocity (m/s).
    pub linear_velocity: f64,
    /// Node-averaged error of the reconstructed angular velocity (rad/s).
    pub angular_velocity: f64,
    /// Energy of the error state `(xi_hat - xi, eta_hat - eta)`, solver velocities.
    pub error_energy: f64,
}

impl ErrorSample {
    pub fn between(params: &RodParameters, estimate: &RodState, velocities: &[Twist], truth: &RodState) -> Self {
        let n = estimate.node_count() as f64;
        let mut position = 0.0;
        let mut rotation = 0.0;
        let mut lin = 0.0;
        let mut ang = 0.0;
        for k in 0..estimate.node_count() {
            let (a, b) = (&estimate.poses[k], &truth.poses[k]);
            position += (a.position - b.position).norm();
            let rel = a.rotation.transpose() * b.rotation;
            // Rotation errors near pi are reported as pi.
            rotation += log_so3(&rel).map(|w| w.norm()).unwrap_or(std::f64::consts::PI);
            let dv = velocities[k].0 - truth.velocities[k].0;
            ang += dv.fixed_rows::<3>(0).norm();
            lin += dv.fixed_rows::<3>(3).norm();
        }
        let strain_err: Vec<Twist> = estimate.strains.iter().zip(&truth.strains).map(|(a, b)| *a - *b).collect();
        let vel_err: Vec<Twist> = estimate.velocities.iter().zip(&truth.velocities).map(|(a, b)| *a - *b).collect();
        Self {
            time: estimate.time,
            tip_position: (estimate.tip_pose().position - truth.tip_pose().position).norm(),
            position: position / n,
            rotation: rotation / n,
            linear_velocity: lin / n,
            angular_velocity: ang / n,
            error_energy: params.error_energy(&strain_err, &vel_err),
        }
    }
}
