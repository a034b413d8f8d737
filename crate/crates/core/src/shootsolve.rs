//! Per-timestep shooting solver for the semi-discretized Cosserat equations.
//!
//! Time derivatives are replaced by an implicit backward-difference rule,
//! `xi_t = c0 xi + xi_h` and `eta_t = c0 eta + eta_h`, where `xi_h`, `eta_h`
//! collect the history terms. Each step is then a spatial two-point boundary
//! value problem in `s`, solved by Newton iteration on the base wrench.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix4, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{apply_adjoint_inverse, bracket, coadjoint, dexp_inv_apply, exp_se3, hat6, Pose, Twist, Wrench};
use crate::rodmodel::{lerp6, RodParameters, RodState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub dt: f64,
    /// Tolerance on the weighted tip residual `|[m / L; n]|`.
    pub residual_tolerance: f64,
    pub max_newton_iterations: usize,
    /// Relative forward-difference step for the shooting Jacobian.
    pub finite_difference_step: f64,
    pub spatial_substeps_per_interval: usize,
    /// Step halvings tried when a Newton update increases the residual.
    pub max_step_halvings: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            residual_tolerance: 1e-6,
            max_newton_iterations: 50,
            finite_difference_step: 1e-6,
            spatial_substeps_per_interval: 1,
            max_step_halvings: 5,
        }
    }
}

impl SolverSettings {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.residual_tolerance > 0.0) {
            return Err(Error::InvalidArgument("residual tolerance must be positive".into()));
        }
        if self.max_newton_iterations < 1 {
            return Err(Error::InvalidArgument("max_newton_iterations must be at least 1".into()));
        }
        if !(self.finite_difference_step > 0.0) {
            return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
        }
        if self.spatial_substeps_per_interval < 1 {
            return Err(Error::InvalidArgument("need at least one spatial substep per interval".into()));
        }
        Ok(())
    }
}

/// Time signals prescribing the physical boundary conditions.
#[derive(Clone)]
pub struct BoundaryInputs {
    pub base_pose: Arc<dyn Fn(f64) -> Pose + Send + Sync>,
    pub base_twist: Arc<dyn Fn(f64) -> Twist + Send + Sync>,
    pub tip_wrench: Arc<dyn Fn(f64) -> Wrench + Send + Sync>,
}

impl fmt::Debug for BoundaryInputs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryInputs").finish_non_exhaustive()
    }
}

impl BoundaryInputs {
    /// Clamped base at `base`, free tip.
    pub fn clamped(base: Pose) -> Self {
        Self::clamped_with_tip_load(base, Wrench::zero())
    }

    pub fn clamped_with_tip_load(base: Pose, tip: Wrench) -> Self {
        Self {
            base_pose: Arc::new(move |_| base),
            base_twist: Arc::new(|_| Twist::zero()),
            tip_wrench: Arc::new(move |_| tip),
        }
    }

    pub fn with_tip_wrench(mut self, signal: impl Fn(f64) -> Wrench + Send + Sync + 'static) -> Self {
        self.tip_wrench = Arc::new(signal);
        self
    }
}

/// Supplies the effective boundary values seen by the shooting solve.
pub trait BoundaryStrategy {
    fn base_pose(&self, t: f64) -> Pose;

    /// Effective base twist given the current guess of the base wrench.
    fn base_twist(&self, t: f64, base_wrench: &Wrench) -> Result<Twist>;

    /// Effective tip wrench given the tip state reached by the sweep.
    fn tip_wrench(&self, t: f64, tip_pose: &Pose, tip_twist: &Twist) -> Result<Wrench>;
}

/// Pure forward dynamics: the physical boundary values, uncorrected.
impl BoundaryStrategy for BoundaryInputs {
    fn base_pose(&self, t: f64) -> Pose {
        (self.base_pose)(t)
    }

    fn base_twist(&self, t: f64, _: &Wrench) -> Result<Twist> {
        Ok((self.base_twist)(t))
    }

    fn tip_wrench(&self, t: f64, _: &Pose, _: &Twist) -> Result<Wrench> {
        Ok((self.tip_wrench)(t))
    }
}

/// Node-wise quantities needed to rebuild past strains and velocities.
#[derive(Clone, Debug, PartialEq)]
struct Snapshot {
    time: f64,
    wrenches: Vec<Vector6<f64>>,
    velocities: Vec<Vector6<f64>>,
    tensions: Vec<f64>,
}

/// The one or two most recent solved time levels.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeHistory {
    dt: f64,
    snapshots: Vec<Snapshot>,
    last_state: RodState,
}

impl TimeHistory {
    /// Starts marching from `initial` (BDF1 on the first step).
    pub fn new(initial: &RodState, tensions: &[f64], dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        Ok(Self {
            dt,
            snapshots: vec![snapshot(initial, tensions)],
            last_state: initial.clone(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.last_state.time
    }

    pub fn latest(&self) -> &RodState {
        &self.last_state
    }

    /// Base-wrench guesses for the next step: the latest value, then its
    /// linear extrapolation when two levels are stored.
    pub fn warm_starts(&self) -> Vec<Wrench> {
        let latest = self.snapshots.last().expect("history non-empty").wrenches[0];
        let mut out = vec![Wrench(latest)];
        if self.snapshots.len() == 2 {
            out.push(Wrench(latest * 2.0 - self.snapshots[0].wrenches[0]));
        }
        out
    }

    /// Number of stored levels (1 before the first step, 2 after).
    pub fn depth(&self) -> usize {
        self.snapshots.len()
    }

    pub fn push(&mut self, state: RodState, tensions: &[f64]) -> Result<()> {
        let expected = self.time() + self.dt;
        if (state.time - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "history expects t = {expected}, got {}",
                state.time
            )));
        }
        self.snapshots.push(snapshot(&state, tensions));
        if self.snapshots.len() > 2 {
            self.snapshots.remove(0);
        }
        self.last_state = state;
        Ok(())
    }
}

fn snapshot(state: &RodState, tensions: &[f64]) -> Snapshot {
    Snapshot {
        time: state.time,
        wrenches: state.wrenches.iter().map(|w| w.0).collect(),
        velocities: state.velocities.iter().map(|v| v.0).collect(),
        tensions: tensions.to_vec(),
    }
}

/// Implicit rule coefficients: `x_t = c0 x + x_h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeScheme {
    Static,
    Bdf1,
    Bdf2,
}

impl TimeScheme {
    pub fn leading_coefficient(self, dt: f64) -> f64 {
        match self {
            TimeScheme::Static => 0.0,
            TimeScheme::Bdf1 => 1.0 / dt,
            TimeScheme::Bdf2 => 1.5 / dt,
        }
    }
}

/// Pointwise state entering [`spatial_rhs`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeState {
    pub pose: Pose,
    pub strain: Twist,
    pub velocity: Twist,
    pub wrench: Wrench,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeDerivatives {
    pub strain: Twist,
    pub velocity: Twist,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialDerivatives {
    /// `g_s = g xi^` as a 4x4 matrix.
    pub pose: Matrix4<f64>,
    pub velocity: Twist,
    pub wrench: Wrench,
}

/// Right-hand side of the spatial ODEs at one node.
///
/// `eta_s = xi_t - ad_xi eta` and
/// `Lambda_s = M eta_t - ad_eta^T M eta + ad_xi^T Lambda - Ad_g^{-1} F_G`.
pub fn spatial_rhs(params: &RodParameters, state: &NodeState, derivatives: &TimeDerivatives, node: usize) -> SpatialDerivatives {
    let m = &params.inertia[node];
    let external = params.external_wrench(&state.pose, node);
    let (eta_s, lambda_s) = rhs_core(
        &state.strain.0,
        &state.velocity.0,
        &state.wrench.0,
        &derivatives.strain.0,
        &derivatives.velocity.0,
        m,
        &external.0,
    );
    SpatialDerivatives {
        pose: state.pose.to_homogeneous() * hat6(&state.strain),
        velocity: Twist(eta_s),
        wrench: Wrench(lambda_s),
    }
}

#[inline]
fn rhs_core(
    xi: &Vector6<f64>,
    eta: &Vector6<f64>,
    lambda: &Vector6<f64>,
    xi_t: &Vector6<f64>,
    eta_t: &Vector6<f64>,
    m: &Matrix6<f64>,
    external: &Vector6<f64>,
) -> (Vector6<f64>, Vector6<f64>) {
    let eta_s = xi_t - bracket(xi, eta);
    let lambda_s = m * eta_t - coadjoint(eta, &(m * eta)) + coadjoint(xi, lambda) - external;
    (eta_s, lambda_s)
}

/// Cubic Lagrange weights over up to four nodes that do not straddle a
/// tendon termination, for past fields at a stage location.
#[derive(Clone, Copy, Debug)]
struct Stencil {
    start: usize,
    len: usize,
    weights: [f64; 4],
}

impl Stencil {
    fn new(interval: usize, frac: f64, lo: usize, hi: usize) -> Self {
        let len = (hi - lo + 1).min(4);
        let start = (interval.saturating_sub(1)).clamp(lo, hi + 1 - len);
        let x = interval as f64 + frac;
        let mut weights = [0.0; 4];
        for (j, w) in weights.iter_mut().enumerate().take(len) {
            let xj = (start + j) as f64;
            *w = (0..len)
                .filter(|&m| m != j)
                .map(|m| {
                    let xm = (start + m) as f64;
                    (x - xm) / (xj - xm)
                })
                .product();
        }
        Self { start, len, weights }
    }

    fn apply(&self, values: &[Vector6<f64>]) -> Vector6<f64> {
        let mut out = Vector6::zeros();
        for j in 0..self.len {
            out += values[self.start + j] * self.weights[j];
        }
        out
    }
}

/// Parameter values at one RK stage location.
#[derive(Clone, Debug)]
struct StagePoint {
    inertia: Matrix6<f64>,
    compliance: Matrix6<f64>,
    reference_strain: Vector6<f64>,
    gravity: Vector6<f64>,
    gravity_free: bool,
    stencil: Stencil,
}

/// Per-step data at every stage location.
#[derive(Clone, Debug)]
pub struct StepContext {
    pub time: f64,
    pub scheme: TimeScheme,
    c0: f64,
    actuation: Vec<Vector6<f64>>,
    xi_history: Vec<Vector6<f64>>,
    eta_history: Vec<Vector6<f64>>,
    tensions: Vec<f64>,
    base_pose: Pose,
}

impl StepContext {
    pub fn tensions(&self) -> &[f64] {
        &self.tensions
    }

    pub fn base_pose(&self) -> &Pose {
        &self.base_pose
    }
}

/// Result of one spatial sweep.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub poses: Vec<Pose>,
    pub velocities: Vec<Vector6<f64>>,
    pub wrenches: Vec<Vector6<f64>>,
}

impl Sweep {
    pub fn tip_pose(&self) -> &Pose {
        self.poses.last().expect("sweep has nodes")
    }

    pub fn tip_velocity(&self) -> Twist {
        Twist(*self.velocities.last().expect("sweep has nodes"))
    }

    pub fn tip_wrench(&self) -> Wrench {
        Wrench(*self.wrenches.last().expect("sweep has nodes"))
    }
}

/// Statistics of one shooting solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShootReport {
    pub newton_iterations: usize,
    pub sweeps: usize,
    pub residual: f64,
}

/// A solved time level together with its solver statistics.
#[derive(Clone, Debug)]
pub struct SolvedState {
    pub state: RodState,
    pub report: ShootReport,
}

/// Shooting solver bound to a rod and solver settings.
#[derive(Clone, Debug)]
pub struct Solver {
    params: RodParameters,
    settings: SolverSettings,
    stages: Vec<StagePoint>,
    stages_per_interval: usize,
}

impl Solver {
    pub fn new(params: RodParameters, settings: SolverSettings) -> Result<Self> {
        params.validate()?;
        settings.validate()?;
        let m = settings.spatial_substeps_per_interval;
        let per = 2 * m + 1;
        let mut stages = Vec::with_capacity((params.node_count - 1) * per);
        let last = params.node_count - 1;
        let breaks: Vec<usize> = params
            .tendons
            .iter()
            .map(|t| t.termination_node)
            .filter(|&b| b > 0 && b < last)
            .collect();
        for k in 0..params.node_count - 1 {
            let lo = breaks.iter().copied().filter(|&b| b <= k).max().unwrap_or(0);
            let hi = breaks.iter().copied().filter(|&b| b > k).min().unwrap_or(last);
            for i in 0..per {
                let f = i as f64 / (2 * m) as f64;
                let inertia = params.inertia[k] * (1.0 - f) + params.inertia[k + 1] * f;
                let stiffness = params.stiffness[k] * (1.0 - f) + params.stiffness[k + 1] * f;
                let compliance = stiffness
                    .cholesky()
                    .map(|c| c.inverse())
                    .ok_or_else(|| Error::InvalidArgument(format!("stiffness not SPD on interval {k}")))?;
                let gravity = lerp6(&params.gravity_wrench[k].0, &params.gravity_wrench[k + 1].0, f);
                stages.push(StagePoint {
                    inertia,
                    compliance,
                    reference_strain: lerp6(&params.reference_strain[k].0, &params.reference_strain[k + 1].0, f),
                    gravity_free: gravity.iter().all(|x| *x == 0.0),
                    gravity,
                    stencil: Stencil::new(k, f, lo, hi),
                });
            }
        }
        Ok(Self {
            params,
            settings,
            stages,
            stages_per_interval: per,
        })
    }

    pub fn params(&self) -> &RodParameters {
        &self.params
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Context for a static solve at time `t`.
    pub fn static_context(&self, t: f64, base_pose: Pose, tensions: &[f64]) -> Result<StepContext> {
        let n = self.stages.len();
        Ok(StepContext {
            time: t,
            scheme: TimeScheme::Static,
            c0: 0.0,
            actuation: self.actuation_table(tensions)?,
            xi_history: vec![Vector6::zeros(); n],
            eta_history: vec![Vector6::zeros(); n],
            tensions: tensions.to_vec(),
            base_pose,
        })
    }

    /// Context for the step that follows `history`.
    pub fn dynamic_context(&self, history: &TimeHistory, base_pose: Pose, tensions: &[f64]) -> Result<StepContext> {
        let dt = self.settings.dt;
        if (history.dt() - dt).abs() > 1e-12 * dt {
            return Err(Error::InvalidArgument("history dt differs from solver dt".into()));
        }
        let t = history.time() + dt;
        let scheme = if history.depth() >= 2 { TimeScheme::Bdf2 } else { TimeScheme::Bdf1 };
        let latest = history.snapshots.last().expect("history non-empty");
        let xi_n = self.history_strains(latest)?;
        let eta_n = self.history_field(&latest.velocities);
        let (xi_h, eta_h) = match scheme {
            TimeScheme::Bdf1 => (
                xi_n.iter().map(|x| -x / dt).collect(),
                eta_n.iter().map(|x| -x / dt).collect(),
            ),
            _ => {
                let prev = &history.snapshots[history.snapshots.len() - 2];
                let xi_p = self.history_strains(prev)?;
                let eta_p = self.history_field(&prev.velocities);
                let c = 1.0 / (2.0 * dt);
                (
                    xi_n.iter().zip(&xi_p).map(|(a, b)| (b - a * 4.0) * c).collect(),
                    eta_n.iter().zip(&eta_p).map(|(a, b)| (b - a * 4.0) * c).collect(),
                )
            }
        };
        Ok(StepContext {
            time: t,
            scheme,
            c0: scheme.leading_coefficient(dt),
            actuation: self.actuation_table(tensions)?,
            xi_history: xi_h,
            eta_history: eta_h,
            tensions: tensions.to_vec(),
            base_pose,
        })
    }

    fn stage_location(&self, index: usize) -> (usize, f64) {
        let per = self.stages_per_interval;
        let k = index / per;
        let i = index % per;
        (k, i as f64 / (per - 1) as f64)
    }

    fn actuation_table(&self, tensions: &[f64]) -> Result<Vec<Vector6<f64>>> {
        if tensions.len() != self.params.tendons.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} tensions, got {}",
                self.params.tendons.len(),
                tensions.len()
            )));
        }
        if let Some(t) = tensions.iter().find(|t| !(**t >= 0.0)) {
            return Err(Error::InvalidArgument(format!("tendon tension must be non-negative, got {t}")));
        }
        Ok((0..self.stages.len())
            .map(|idx| {
                let (k, f) = self.stage_location(idx);
                self.params.actuation_wrench_on_interval(tensions, k, f)
            })
            .collect())
    }

    /// Strain at every stage location from stored node wrenches.
    fn history_strains(&self, snap: &Snapshot) -> Result<Vec<Vector6<f64>>> {
        let act = self.actuation_table(&snap.tensions)?;
        Ok((0..self.stages.len())
            .map(|idx| {
                let p = &self.stages[idx];
                let lambda = p.stencil.apply(&snap.wrenches);
                p.compliance * (lambda - act[idx]) + p.reference_strain
            })
            .collect())
    }

    fn history_field(&self, values: &[Vector6<f64>]) -> Vec<Vector6<f64>> {
        (0..self.stages.len())
            .map(|idx| self.stages[idx].stencil.apply(values))
            .collect()
    }

    #[inline]
    fn stage_rhs(
        &self,
        ctx: &StepContext,
        idx: usize,
        g: &Pose,
        eta: &Vector6<f64>,
        lambda: &Vector6<f64>,
    ) -> (Vector6<f64>, Vector6<f64>, Vector6<f64>) {
        let p = &self.stages[idx];
        let xi = p.compliance * (lambda - ctx.actuation[idx]) + p.reference_strain;
        let xi_t = xi * ctx.c0 + ctx.xi_history[idx];
        let eta_t = eta * ctx.c0 + ctx.eta_history[idx];
        let external = if p.gravity_free {
            Vector6::zeros()
        } else {
            apply_adjoint_inverse(g, &p.gravity)
        };
        let (eta_s, lambda_s) = rhs_core(&xi, eta, lambda, &xi_t, &eta_t, &p.inertia, &external);
        (xi, eta_s, lambda_s)
    }

    /// RK4 sweep from the base (Munthe-Kaas update for the pose).
    pub fn integrate_spatial(&self, ctx: &StepContext, base_twist: &Twist, base_wrench: &Wrench) -> Result<Sweep> {
        let n = self.params.node_count;
        let m = self.settings.spatial_substeps_per_interval;
        let h = self.params.spacing() / m as f64;
        let mut g = ctx.base_pose;
        let mut eta = base_twist.0;
        let mut lambda = base_wrench.0;
        let mut sweep = Sweep {
            poses: Vec::with_capacity(n),
            velocities: Vec::with_capacity(n),
            wrenches: Vec::with_capacity(n),
        };
        sweep.poses.push(g);
        sweep.velocities.push(eta);
        sweep.wrenches.push(lambda);
        for k in 0..n - 1 {
            let base = k * self.stages_per_interval;
            for j in 0..m {
                let (i0, i1, i2) = (base + 2 * j, base + 2 * j + 1, base + 2 * j + 2);
                let (x1, e1, l1) = self.stage_rhs(ctx, i0, &g, &eta, &lambda);
                let t2 = x1 * (0.5 * h);
                let g2 = g.compose(&exp_se3(&Twist(t2), 1.0));
                let (x2, e2, l2) = self.stage_rhs(ctx, i1, &g2, &(eta + e1 * (0.5 * h)), &(lambda + l1 * (0.5 * h)));
                let k2 = dexp_inv_apply(&t2, &x2);
                let t3 = k2 * (0.5 * h);
                let g3 = g.compose(&exp_se3(&Twist(t3), 1.0));
                let (x3, e3, l3) = self.stage_rhs(ctx, i1, &g3, &(eta + e2 * (0.5 * h)), &(lambda + l2 * (0.5 * h)));
                let k3 = dexp_inv_apply(&t3, &x3);
                let t4 = k3 * h;
                let g4 = g.compose(&exp_se3(&Twist(t4), 1.0));
                let (x4, e4, l4) = self.stage_rhs(ctx, i2, &g4, &(eta + e3 * h), &(lambda + l3 * h));
                let k4 = dexp_inv_apply(&t4, &x4);
                g = g.compose(&exp_se3(&Twist(x1 + k2 * 2.0 + k3 * 2.0 + k4), h / 6.0));
                eta += (e1 + e2 * 2.0 + e3 * 2.0 + e4) * (h / 6.0);
                lambda += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
            }
            g.guard_orthonormality();
            if !(g.is_finite() && eta.iter().all(|x| x.is_finite()) && lambda.iter().all(|x| x.is_finite())) {
                return Err(Error::Divergence { node: k + 1 });
            }
            sweep.poses.push(g);
            sweep.velocities.push(eta);
            sweep.wrenches.push(lambda);
        }
        Ok(sweep)
    }

    /// Weighted tip residual `[m / L; n]` of `Lambda(L) - F_1,eff`.
    fn residual(
        &self,
        ctx: &StepContext,
        strategy: &dyn BoundaryStrategy,
        base_wrench: &Vector6<f64>,
    ) -> Result<(Vector6<f64>, Sweep)> {
        let w = Wrench(*base_wrench);
        let eta0 = strategy.base_twist(ctx.time, &w)?;
        let sweep = self.integrate_spatial(ctx, &eta0, &w)?;
        let target = strategy.tip_wrench(ctx.time, sweep.tip_pose(), &sweep.tip_velocity())?;
        let mut r = sweep.tip_wrench().0 - target.0;
        let inv_l = 1.0 / self.params.length;
        for i in 0..3 {
            r[i] *= inv_l;
        }
        Ok((r, sweep))
    }

    /// Newton shooting on the base wrench, warm-started at `guess`.
    pub fn shoot(&self, ctx: &StepContext, strategy: &dyn BoundaryStrategy, guess: &Wrench) -> Result<SolvedState> {
        self.shoot_from(ctx, strategy, std::slice::from_ref(guess))
    }

    /// Newton shooting started from the candidate with the smallest residual.
    pub fn shoot_from(&self, ctx: &StepContext, strategy: &dyn BoundaryStrategy, candidates: &[Wrench]) -> Result<SolvedState> {
        let tol = self.settings.residual_tolerance;
        let mut report = ShootReport::default();
        let mut start: Option<(Vector6<f64>, Vector6<f64>, Sweep)> = None;
        let mut first_error = None;
        for c in candidates {
            report.sweeps += 1;
            match self.residual(ctx, strategy, &c.0) {
                Ok((r, sw)) => {
                    if start.as_ref().is_none_or(|s| r.norm() < s.1.norm()) {
                        start = Some((c.0, r, sw));
                    }
                }
                Err(e) if e.is_solver_failure() => {
                    first_error.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
        let (mut x, mut r, mut sweep) = match start {
            Some(s) => s,
            None => {
                return Err(first_error.unwrap_or_else(|| Error::InvalidArgument("no initial guess supplied".into())))
            }
        };
        let mut gamma = r.norm();
        while gamma > tol {
            if report.newton_iterations >= self.settings.max_newton_iterations {
                return Err(Error::NonConvergence {
                    iterations: report.newton_iterations,
                    residual: gamma,
                });
            }
            report.newton_iterations += 1;
            let mut jac = Matrix6::zeros();
            for i in 0..6 {
                let step = self.settings.finite_difference_step * x[i].abs().max(1.0);
                let mut xp = x;
                xp[i] += step;
                let (rp, _) = self.residual(ctx, strategy, &xp)?;
                report.sweeps += 1;
                jac.set_column(i, &((rp - r) / step));
            }
            let delta = match jac.lu().solve(&(-r)) {
                Some(d) if d.iter().all(|v| v.is_finite()) => d,
                _ => jac.svd(true, true).solve(&(-r), 1e-14).map_err(|_| Error::NonConvergence {
                    iterations: report.newton_iterations,
                    residual: gamma,
                })?,
            };
            let mut scale = 1.0;
            let mut best: Option<(Vector6<f64>, Vector6<f64>, Sweep, f64)> = None;
            for _ in 0..=self.settings.max_step_halvings {
                let trial = x + delta * scale;
                report.sweeps += 1;
                match self.residual(ctx, strategy, &trial) {
                    Ok((rt, st)) => {
                        let gt = rt.norm();
                        let improved = best.as_ref().is_none_or(|b| gt < b.3);
                        if improved {
                            best = Some((trial, rt, st, gt));
                        }
                        if gt < gamma {
                            break;
                        }
                    }
                    Err(e) if e.is_solver_failure() => {}
                    Err(e) => return Err(e),
                }
                scale *= 0.5;
            }
            match best {
                Some((xt, rt, st, gt)) => {
                    x = xt;
                    r = rt;
                    sweep = st;
                    gamma = gt;
                }
                None => {
                    return Err(Error::NonConvergence {
                        iterations: report.newton_iterations,
                        residual: gamma,
                    })
                }
            }
        }
        report.residual = gamma;
        Ok(SolvedState {
            state: self.state_from_sweep(ctx, sweep),
            report,
        })
    }

    fn state_from_sweep(&self, ctx: &StepContext, sweep: Sweep) -> RodState {
        let strains = (0..self.params.node_count)
            .map(|k| {
                let act = self
                    .params
                    .actuation_wrench(&ctx.tensions, k)
                    .expect("tensions validated when building the context");
                self.params.strain_from_wrench(&Wrench(sweep.wrenches[k]), &act, k)
            })
            .collect();
        RodState {
            time: ctx.time,
            poses: sweep.poses,
            strains,
            velocities: sweep.velocities.into_iter().map(Twist).collect(),
            wrenches: sweep.wrenches.into_iter().map(Wrench).collect(),
        }
    }

    /// Static equilibrium at time `t` (all time derivatives dropped).
    pub fn solve_static(
        &self,
        t: f64,
        strategy: &dyn BoundaryStrategy,
        tensions: &[f64],
        guess: &Wrench,
    ) -> Result<SolvedState> {
        let ctx = self.static_context(t, strategy.base_pose(t), tensions)?;
        self.shoot(&ctx, strategy, guess).map_err(|e| e.at_time(t))
    }

    /// Advances `history` by one time step; `tensions` are evaluated at the new time.
    pub fn step(&self, history: &mut TimeHistory, strategy: &dyn BoundaryStrategy, tensions: &[f64]) -> Result<SolvedState> {
        let t = history.time() + self.settings.dt;
        let ctx = self.dynamic_context(history, strategy.base_pose(t), tensions)?;
        let solved = self
            .shoot_from(&ctx, strategy, &history.warm_starts())
            .map_err(|e| e.at_time(t))?;
        history.push(solved.state.clone(), tensions)?;
        Ok(solved)
    }

    /// Forward simulation for `steps` steps starting from `initial`.
    ///
    /// Returns the initial state followed by every solved level.
    pub fn simulate(
        &self,
        initial: &RodState,
        strategy: &dyn BoundaryStrategy,
        tensions: &dyn Fn(f64) -> Vec<f64>,
        steps: usize,
    ) -> Result<Vec<RodState>> {
        let mut history = TimeHistory::new(initial, &tensions(initial.time), self.settings.dt)?;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(initial.clone());
        for _ in 0..steps {
            let t = history.time() + self.settings.dt;
            let solved = self.step(&mut history, strategy, &tensions(t))?;
            out.push(solved.state);
        }
        Ok(out)
    }
}
