//! TOML scenario configuration. Key names carry their SI units.

use std::path::Path;

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::Wrench;
use crate::observers::{ObserverVariant, SettleRule, DEFAULT_PROPORTIONAL_RATIO};
use crate::rodmodel::{build_section_matrices, RodParameters, TendonRouting};
use crate::shootsolve::SolverSettings;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub scenario: ScenarioSection,
    pub rod: RodSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub release: Option<ReleaseSection>,
    #[serde(default)]
    pub tensions: Option<SignalSection>,
    #[serde(default)]
    pub disturbance: Option<SignalSection>,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub observer: ObserverSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub gains: Option<GainsSection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FreeOscillationRelease,
    TendonDriven,
    UnknownInputReplay,
    StaticEquilibrium,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStateKind {
    Truth,
    Straight,
    Perturbed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    pub duration_s: f64,
    #[serde(default = "default_initial")]
    pub initial_state: InitialStateKind,
    /// Curvature perturbation scale for `perturbed` (rad/m).
    #[serde(default)]
    pub perturbation_magnitude_rad_per_m: f64,
    /// Stiffness of the observer model relative to the truth.
    #[serde(default = "one")]
    pub model_stiffness_factor: f64,
    /// Hide the tendon tensions from the observer.
    #[serde(default)]
    pub withhold_tensions: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_initial() -> InitialStateKind {
    InitialStateKind::Straight
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub radius_m: f64,
    pub density_kg_per_m3: f64,
    pub youngs_modulus_pa: f64,
    pub shear_modulus_pa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TendonSection {
    pub offset_m: [f64; 3],
    /// Defaults to the tip node.
    #[serde(default)]
    pub termination_node: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RodSection {
    pub length_m: f64,
    pub node_count: usize,
    #[serde(default)]
    pub geometry: Option<GeometrySection>,
    /// `diag(M)`: kg m for the angular block, kg/m for the linear block.
    #[serde(default)]
    pub inertia_diagonal: Option<[f64; 6]>,
    /// `diag(K)`: N m^2 for the angular block, N for the linear block.
    #[serde(default)]
    pub stiffness_diagonal: Option<[f64; 6]>,
    #[serde(default)]
    pub gravity_m_per_s2: [f64; 3],
    #[serde(default)]
    pub tendons: Vec<TendonSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt_s: f64,
    pub residual_tolerance: f64,
    pub max_newton_iterations: usize,
    pub finite_difference_step: f64,
    pub spatial_substeps_per_interval: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            dt_s: s.dt,
            residual_tolerance: s.residual_tolerance,
            max_newton_iterations: s.max_newton_iterations,
            finite_difference_step: s.finite_difference_step,
            spatial_substeps_per_interval: s.spatial_substeps_per_interval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReleaseSection {
    /// Tip wrench `[m (N m); n (N)]` held before release at t = 0.
    #[serde(default)]
    pub holding_tip_wrench: [f64; 6],
    /// Adds the first clamped-free bending mode as an initial velocity,
    /// scaled to this tip speed along the base x axis.
    #[serde(default)]
    pub first_mode_tip_velocity_m_per_s: f64,
}

/// Piecewise-linear table; held constant outside its time range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub times_s: Vec<f64>,
    /// One row per time; `values[i][c]` is channel `c` at `times_s[i]`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub base_moment_std_n_m: f64,
    #[serde(default)]
    pub base_force_std_n: f64,
    #[serde(default)]
    pub tip_rotation_std_rad: f64,
    #[serde(default)]
    pub tip_position_std_m: f64,
    #[serde(default)]
    pub tip_angular_velocity_std_rad_per_s: f64,
    #[serde(default)]
    pub tip_linear_velocity_std_m_per_s: f64,
}

impl NoiseSection {
    pub fn is_zero(&self) -> bool {
        [
            self.base_moment_std_n_m,
            self.base_force_std_n,
            self.tip_rotation_std_rad,
            self.tip_position_std_m,
            self.tip_angular_velocity_std_rad_per_s,
            self.tip_linear_velocity_std_m_per_s,
        ]
        .iter()
        .all(|s| *s == 0.0)
    }
}

/// Reference gain: `"optimal"`, `"identity"`, an explicit diagonal, or the
/// optimum with its angular and linear blocks rescaled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainReference {
    Named(String),
    Diagonal([f64; 6]),
    Scaled { angular_scale: f64, linear_scale: f64 },
}

impl Default for GainReference {
    fn default() -> Self {
        GainReference::Named("optimal".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "default_ratio")]
    pub proportional_ratio: f64,
    #[serde(default)]
    pub base_gain_reference: GainReference,
    #[serde(default)]
    pub tip_gain_reference: GainReference,
    #[serde(default = "default_settle")]
    pub settle_rule: SettleRule,
    /// Which sensor channels the observer receives.
    #[serde(default = "yes")]
    pub use_base_wrench: bool,
    #[serde(default = "yes")]
    pub use_tip_pose: bool,
    #[serde(default = "yes")]
    pub use_tip_twist: bool,
}

fn default_variant() -> String {
    "base".into()
}

fn default_ratio() -> f64 {
    DEFAULT_PROPORTIONAL_RATIO
}

fn default_settle() -> SettleRule {
    SettleRule::FractionOfInitial(0.02)
}

fn yes() -> bool {
    true
}

impl Default for ObserverSection {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            gamma: 1.0,
            proportional_ratio: default_ratio(),
            base_gain_reference: GainReference::default(),
            tip_gain_reference: GainReference::default(),
            settle_rule: default_settle(),
            use_base_wrench: true,
            use_tip_pose: true,
            use_tip_twist: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub gammas: Vec<f64>,
    pub variants: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub gammas: Vec<f64>,
    /// `base` or `tip`.
    pub which: String,
    /// Reference the scale multiplies: "optimal", "identity" or a diagonal.
    #[serde(default)]
    pub reference: GainReference,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Configuration(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if !(self.scenario.duration_s > 0.0) {
            return bad("scenario.duration_s must be positive".into());
        }
        if !(self.scenario.model_stiffness_factor > 0.0) {
            return bad("scenario.model_stiffness_factor must be positive".into());
        }
        let r = &self.rod;
        let explicit = r.inertia_diagonal.is_some() || r.stiffness_diagonal.is_some();
        match (&r.geometry, explicit) {
            (Some(_), true) => return bad("give either rod.geometry or explicit diagonals, not both".into()),
            (None, false) => return bad("rod needs geometry or inertia/stiffness diagonals".into()),
            (None, true) if r.inertia_diagonal.is_none() || r.stiffness_diagonal.is_none() => {
                return bad("both rod.inertia_diagonal and rod.stiffness_diagonal are required".into())
            }
            _ => {}
        }
        for (name, s) in [("tensions", &self.tensions), ("disturbance", &self.disturbance)] {
            if let Some(s) = s {
                s.validate(name)?;
            }
        }
        if let Some(t) = &self.tensions {
            if t.values.iter().flatten().any(|v| *v < 0.0) {
                return bad("tension tables must be non-negative".into());
            }
            if t.channel_count() != r.tendons.len() {
                return bad(format!(
                    "tension table has {} channels but the rod has {} tendons",
                    t.channel_count(),
                    r.tendons.len()
                ));
            }
        }
        if let Some(d) = &self.disturbance {
            if d.channel_count() != 6 {
                return bad("disturbance rows must be 6-component tip wrenches".into());
            }
        }
        if self.scenario.kind == ScenarioKind::FreeOscillationRelease && self.release.is_none() {
            return bad("free_oscillation_release needs a [release] section".into());
        }
        ObserverVariant::parse(&self.observer.variant)?;
        for r in [&self.observer.base_gain_reference, &self.observer.tip_gain_reference] {
            r.check()?;
        }
        if let Some(g) = &self.gains {
            g.reference.check()?;
        }
        if !(self.observer.gamma >= 0.0) || !(self.observer.proportional_ratio >= 0.0) {
            return bad("observer.gamma and observer.proportional_ratio must be non-negative".into());
        }
        if let Some(s) = &self.sweep {
            if s.gammas.is_empty() || s.gammas.iter().any(|g| !(*g > 0.0)) {
                return bad("sweep.gammas must be positive".into());
            }
            if s.gammas.windows(2).any(|w| w[1] <= w[0]) {
                return bad("sweep.gammas must be sorted ascending".into());
            }
            for v in &s.variants {
                ObserverVariant::parse(v)?;
            }
        }
        if let Some(g) = &self.gains {
            if g.which != "base" && g.which != "tip" {
                return bad(format!("gains.which must be base or tip, got {:?}", g.which));
            }
            if g.gammas.iter().any(|x| !(*x > 0.0)) {
                return bad("gains.gammas must be positive".into());
            }
        }
        self.solver_settings().validate().map_err(|e| Error::Configuration(e.to_string()))?;
        self.rod_parameters().map(|_| ())
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            dt: self.solver.dt_s,
            residual_tolerance: self.solver.residual_tolerance,
            max_newton_iterations: self.solver.max_newton_iterations,
            finite_difference_step: self.solver.finite_difference_step,
            spatial_substeps_per_interval: self.solver.spatial_substeps_per_interval,
            ..SolverSettings::default()
        }
    }

    pub fn section_matrices(&self) -> Result<(Matrix6<f64>, Matrix6<f64>)> {
        let r = &self.rod;
        match (&r.geometry, r.inertia_diagonal, r.stiffness_diagonal) {
            (Some(g), _, _) => build_section_matrices(g.radius_m, g.density_kg_per_m3, g.youngs_modulus_pa, g.shear_modulus_pa)
                .map_err(|e| Error::Configuration(e.to_string())),
            (None, Some(m), Some(k)) => Ok((
                Matrix6::from_diagonal(&Vector6::from_column_slice(&m)),
                Matrix6::from_diagonal(&Vector6::from_column_slice(&k)),
            )),
            _ => Err(Error::Configuration("rod section is incomplete".into())),
        }
    }

    /// Rod used for the ground truth.
    pub fn rod_parameters(&self) -> Result<RodParameters> {
        let (m, k) = self.section_matrices()?;
        let r = &self.rod;
        let mut p = RodParameters::uniform(r.length_m, r.node_count, m, k)
            .map_err(|e| Error::Configuration(e.to_string()))?
            .with_gravity(Vector3::from_column_slice(&r.gravity_m_per_s2));
        for t in &r.tendons {
            let end = t.termination_node.unwrap_or(r.node_count - 1);
            p = p
                .with_tendon(TendonRouting::constant_offset(Vector3::from_column_slice(&t.offset_m), r.node_count, end))
                .map_err(|e| Error::Configuration(e.to_string()))?;
        }
        Ok(p)
    }

    /// Rod used inside the observer (stiffness mismatch applied).
    pub fn observer_parameters(&self) -> Result<RodParameters> {
        self.rod_parameters()?
            .with_stiffness_scale(self.scenario.model_stiffness_factor)
            .map_err(|e| Error::Configuration(e.to_string()))
    }

    pub fn holding_wrench(&self) -> Wrench {
        self.release
            .as_ref()
            .map(|r| Wrench::from_array(r.holding_tip_wrench))
            .unwrap_or_default()
    }

    pub fn release_tip_velocity(&self) -> f64 {
        self.release.as_ref().map_or(0.0, |r| r.first_mode_tip_velocity_m_per_s)
    }

    pub fn step_count(&self) -> usize {
        (self.scenario.duration_s / self.solver.dt_s).round().max(1.0) as usize
    }
}

impl GainReference {
    fn check(&self) -> Result<()> {
        match self {
            GainReference::Named(n) if n == "optimal" || n == "identity" => Ok(()),
            GainReference::Named(n) => Err(Error::Configuration(format!("unknown gain reference {n:?}"))),
            GainReference::Diagonal(d) if d.iter().all(|x| *x >= 0.0) => Ok(()),
            GainReference::Scaled { angular_scale, linear_scale } if *angular_scale >= 0.0 && *linear_scale >= 0.0 => Ok(()),
            _ => Err(Error::Configuration("gain references must be non-negative".into())),
        }
    }

    /// Resolves against the optimum (`optimal` is the base or tip optimum).
    pub fn resolve(&self, optimal: &Matrix6<f64>) -> Matrix6<f64> {
        match self {
            GainReference::Named(n) if n == "identity" => Matrix6::identity(),
            GainReference::Named(_) => *optimal,
            GainReference::Diagonal(d) => Matrix6::from_diagonal(&Vector6::from_column_slice(d)),
            GainReference::Scaled { angular_scale, linear_scale } => {
                // Congruence S G S keeps the gain PSD; blockwise scaling when G is block diagonal.
                let (a, l) = (angular_scale.sqrt(), linear_scale.sqrt());
                let s = Matrix6::from_diagonal(&Vector6::new(a, a, a, l, l, l));
                s * optimal * s
            }
        }
    }
}

impl SignalSection {
    fn validate(&self, name: &str) -> Result<()> {
        if self.times_s.is_empty() || self.times_s.len() != self.values.len() {
            return Err(Error::Configuration(format!("{name}: need one value row per time")));
        }
        if self.times_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Configuration(format!("{name}: times must increase")));
        }
        let width = self.values[0].len();
        if self.values.iter().any(|r| r.len() != width) {
            return Err(Error::Configuration(format!("{name}: rows differ in length")));
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        let ts = &self.times_s;
        if t <= ts[0] {
            return self.values[0].clone();
        }
        if t >= ts[ts.len() - 1] {
            return self.values[ts.len() - 1].clone();
        }
        let j = ts.partition_point(|&x| x <= t);
        let i = j - 1;
        let a = (t - ts[i]) / (ts[j] - ts[i]);
        self.values[i]
            .iter()
            .zip(&self.values[j])
            .map(|(x, y)| x * (1.0 - a) + y * a)
            .collect()
    }
}
