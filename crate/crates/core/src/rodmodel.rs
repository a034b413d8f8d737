//! Rod physics: section matrices, constitutive law, tendon actuation,
//! gravity, energy, and the Kirchhoff special-case reconstructions.

use nalgebra::{Matrix3, Matrix6, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{apply_adjoint_inverse, Pose, Twist, Wrench};

/// Strain of a straight, unstretched rod: tangent along body `z`.
pub fn straight_reference_strain() -> Twist {
    Twist::from_array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
}

/// Tendon path through the cross-sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TendonRouting {
    /// Intersection point with each cross-section, body frame (m).
    pub offsets: Vec<Vector3<f64>>,
    /// `d'(s)` at each node.
    pub offset_derivatives: Vec<Vector3<f64>>,
    /// Last node at which the tendon acts.
    pub termination_node: usize,
}

impl TendonRouting {
    /// Straight tendon at a fixed offset, `d' = 0`.
    pub fn constant_offset(offset: Vector3<f64>, node_count: usize, termination_node: usize) -> Self {
        Self {
            offsets: vec![offset; node_count],
            offset_derivatives: vec![Vector3::zeros(); node_count],
            termination_node,
        }
    }

    /// Routing from sampled offsets; `d'` by central differences (one-sided at the ends).
    pub fn from_offsets(offsets: Vec<Vector3<f64>>, spacing: f64, termination_node: usize) -> Result<Self> {
        let derivs = finite_difference(&offsets, spacing)?;
        Ok(Self {
            offsets,
            offset_derivatives: derivs,
            termination_node,
        })
    }

    /// Routing with analytic `d'`, checked against finite differences of `d`.
    pub fn with_derivatives(
        offsets: Vec<Vector3<f64>>,
        offset_derivatives: Vec<Vector3<f64>>,
        spacing: f64,
        termination_node: usize,
    ) -> Result<Self> {
        if offsets.len() != offset_derivatives.len() {
            return Err(Error::InvalidArgument("offset and derivative lengths differ".into()));
        }
        let fd = finite_difference(&offsets, spacing)?;
        // Central differences are O(h^2); ends are one-sided and O(h).
        let scale = offsets.iter().map(|d| d.norm()).fold(0.0, f64::max).max(1e-12);
        for (k, (a, b)) in fd.iter().zip(&offset_derivatives).enumerate() {
            let tol = 10.0 * scale * spacing.max(1e-12).powi(if k == 0 || k + 1 == fd.len() { 0 } else { 1 }) + 1e-9;
            if (a - b).norm() > tol {
                return Err(Error::InvalidArgument(format!(
                    "tendon derivative at node {k} inconsistent with offsets ({:e} vs tolerance {tol:e})",
                    (a - b).norm()
                )));
            }
        }
        Ok(Self {
            offsets,
            offset_derivatives,
            termination_node,
        })
    }

    /// Whether the tendon acts on the interval `[node, node + 1]`.
    pub fn active_on_interval(&self, interval: usize) -> bool {
        interval < self.termination_node
    }

    pub fn active_at_node(&self, node: usize) -> bool {
        node <= self.termination_node
    }
}

fn finite_difference(samples: &[Vector3<f64>], spacing: f64) -> Result<Vec<Vector3<f64>>> {
    let n = samples.len();
    if n < 2 || !(spacing > 0.0) {
        return Err(Error::InvalidArgument("need at least 2 samples and positive spacing".into()));
    }
    Ok((0..n)
        .map(|k| {
            if k == 0 {
                (samples[1] - samples[0]) / spacing
            } else if k + 1 == n {
                (samples[n - 1] - samples[n - 2]) / spacing
            } else {
                (samples[k + 1] - samples[k - 1]) / (2.0 * spacing)
            }
        })
        .collect())
}

/// Geometry, inertia, stiffness and loading of the rod on a uniform node grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RodParameters {
    pub length: f64,
    pub node_count: usize,
    /// Cross-sectional inertia `diag(M_a, M_l)` per node.
    pub inertia: Vec<Matrix6<f64>>,
    /// Cross-sectional stiffness `diag(K_a, K_l)` per node.
    pub stiffness: Vec<Matrix6<f64>>,
    pub reference_strain: Vec<Twist>,
    /// Distributed gravity wrench per unit length, global frame.
    pub gravity_wrench: Vec<Wrench>,
    pub tendons: Vec<TendonRouting>,
}

impl RodParameters {
    /// Uniform straight rod without gravity or tendons.
    pub fn uniform(length: f64, node_count: usize, inertia: Matrix6<f64>, stiffness: Matrix6<f64>) -> Result<Self> {
        let params = Self {
            length,
            node_count,
            inertia: vec![inertia; node_count],
            stiffness: vec![stiffness; node_count],
            reference_strain: vec![straight_reference_strain(); node_count],
            gravity_wrench: vec![Wrench::zero(); node_count],
            tendons: Vec::new(),
        };
        params.validate()?;
        Ok(params)
    }

    /// Gravity as the force `M_l g` per unit length at every node, zero moment.
    pub fn with_gravity(mut self, acceleration: Vector3<f64>) -> Self {
        for (f, m) in self.gravity_wrench.iter_mut().zip(&self.inertia) {
            let lin: Matrix3<f64> = m.fixed_view::<3, 3>(3, 3).into_owned();
            *f = Wrench::new(Vector3::zeros(), lin * acceleration);
        }
        self
    }

    pub fn with_tendon(mut self, tendon: TendonRouting) -> Result<Self> {
        self.tendons.push(tendon);
        self.validate()?;
        Ok(self)
    }

    /// Scales every stiffness matrix (model mismatch studies).
    pub fn with_stiffness_scale(mut self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidArgument("stiffness scale must be positive".into()));
        }
        self.stiffness.iter_mut().for_each(|k| *k *= factor);
        Ok(self)
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.node_count - 1) as f64
    }

    pub fn arclength(&self, node: usize) -> f64 {
        node as f64 * self.spacing()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count;
        if n < 2 {
            return Err(Error::InvalidArgument("node_count must be at least 2".into()));
        }
        if !(self.length > 0.0) {
            return Err(Error::InvalidArgument("length must be positive".into()));
        }
        if self.inertia.len() != n
            || self.stiffness.len() != n
            || self.reference_strain.len() != n
            || self.gravity_wrench.len() != n
        {
            return Err(Error::InvalidArgument("per-node tables must have node_count entries".into()));
        }
        for k in 0..n {
            if !is_spd(&self.inertia[k]) {
                return Err(Error::InvalidArgument(format!("inertia at node {k} is not SPD")));
            }
            if !is_spd(&self.stiffness[k]) {
                return Err(Error::InvalidArgument(format!("stiffness at node {k} is not SPD")));
            }
            if self.reference_strain[k].linear().norm() <= 0.0 {
                return Err(Error::InvalidArgument(format!("reference tangent vanishes at node {k}")));
            }
        }
        for (i, t) in self.tendons.iter().enumerate() {
            if t.offsets.len() != n || t.offset_derivatives.len() != n {
                return Err(Error::InvalidArgument(format!("tendon {i} routing has wrong length")));
            }
            if t.termination_node >= n {
                return Err(Error::InvalidArgument(format!("tendon {i} terminates past the tip")));
            }
        }
        Ok(())
    }

    /// Hooke's law `K (xi - xi_o)`.
    pub fn elastic_wrench(&self, strain: &Twist, node: usize) -> Wrench {
        Wrench(self.stiffness[node] * (strain.0 - self.reference_strain[node].0))
    }

    /// Distributed tendon wrench at a node for the given tensions (N).
    pub fn actuation_wrench(&self, tensions: &[f64], node: usize) -> Result<Wrench> {
        check_tensions(tensions, self.tendons.len())?;
        let xi_o = self.reference_strain[node];
        let mut total = Vector6::zeros();
        for (tendon, &tau) in self.tendons.iter().zip(tensions) {
            if tau == 0.0 || !tendon.active_at_node(node) {
                continue;
            }
            total += tendon_wrench(&xi_o.0, &tendon.offsets[node], &tendon.offset_derivatives[node], tau);
        }
        Ok(Wrench(total))
    }

    /// Interval-wise actuation wrench at fraction `frac` in `[0, 1]` of `[interval, interval + 1]`.
    ///
    /// Routing and reference strain are interpolated linearly; tendons
    /// terminating at the left node of the interval do not contribute.
    pub fn actuation_wrench_on_interval(&self, tensions: &[f64], interval: usize, frac: f64) -> Vector6<f64> {
        let xi_o = lerp6(&self.reference_strain[interval].0, &self.reference_strain[interval + 1].0, frac);
        let mut total = Vector6::zeros();
        for (tendon, &tau) in self.tendons.iter().zip(tensions) {
            if tau == 0.0 || !tendon.active_on_interval(interval) {
                continue;
            }
            let d = tendon.offsets[interval] * (1.0 - frac) + tendon.offsets[interval + 1] * frac;
            let dp = tendon.offset_derivatives[interval] * (1.0 - frac) + tendon.offset_derivatives[interval + 1] * frac;
            total += tendon_wrench(&xi_o, &d, &dp, tau);
        }
        total
    }

    /// Body-frame gravity wrench `Ad_g^{-1} F_G`.
    pub fn external_wrench(&self, pose: &Pose, node: usize) -> Wrench {
        Wrench(apply_adjoint_inverse(pose, &self.gravity_wrench[node].0))
    }

    /// Inverse constitutive law `xi = K^{-1} (Lambda - Lambda_act) + xi_o`.
    pub fn strain_from_wrench(&self, wrench: &Wrench, actuation: &Wrench, node: usize) -> Twist {
        let k = self.stiffness[node];
        let rhs = wrench.0 - actuation.0;
        let delta = k.cholesky().map(|c| c.solve(&rhs)).unwrap_or_else(|| rhs * f64::NAN);
        Twist(delta + self.reference_strain[node].0)
    }

    /// `1/2 int (xi - xi_o)^T K (xi - xi_o) + eta^T M eta ds` by trapezoidal quadrature.
    pub fn total_energy(&self, state: &RodState) -> f64 {
        self.energy_of_fields(&state.strains, &state.velocities)
    }

    /// Splits the energy into (elastic, kinetic).
    pub fn energy_parts(&self, strains: &[Twist], velocities: &[Twist]) -> (f64, f64) {
        let ds = self.spacing();
        let n = self.node_count;
        let mut elastic = 0.0;
        let mut kinetic = 0.0;
        for k in 0..n {
            let w = if k == 0 || k + 1 == n { 0.5 * ds } else { ds };
            let e = strains[k].0 - self.reference_strain[k].0;
            elastic += w * 0.5 * e.dot(&(self.stiffness[k] * e));
            let v = velocities[k].0;
            kinetic += w * 0.5 * v.dot(&(self.inertia[k] * v));
        }
        (elastic, kinetic)
    }

    pub fn energy_of_fields(&self, strains: &[Twist], velocities: &[Twist]) -> f64 {
        let (e, k) = self.energy_parts(strains, velocities);
        e + k
    }

    /// Same quadratic form applied to strain/velocity *differences* (no reference strain).
    pub fn error_energy(&self, strain_errors: &[Twist], velocity_errors: &[Twist]) -> f64 {
        let ds = self.spacing();
        let n = self.node_count;
        (0..n)
            .map(|k| {
                let w = if k == 0 || k + 1 == n { 0.5 * ds } else { ds };
                let e = strain_errors[k].0;
                let v = velocity_errors[k].0;
                w * 0.5 * (e.dot(&(self.stiffness[k] * e)) + v.dot(&(self.inertia[k] * v)))
            })
            .sum()
    }
}

fn check_tensions(tensions: &[f64], tendon_count: usize) -> Result<()> {
    if tensions.len() != tendon_count {
        return Err(Error::InvalidArgument(format!(
            "expected {tendon_count} tensions, got {}",
            tensions.len()
        )));
    }
    if let Some(t) = tensions.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::InvalidArgument(format!("tendon tension must be non-negative, got {t}")));
    }
    Ok(())
}

/// `tau / |T| [d^ T; T]` with tangent `T = q_o + u_o^ d + d'`.
fn tendon_wrench(xi_o: &Vector6<f64>, d: &Vector3<f64>, dp: &Vector3<f64>, tau: f64) -> Vector6<f64> {
    let u_o = Vector3::new(xi_o[0], xi_o[1], xi_o[2]);
    let q_o = Vector3::new(xi_o[3], xi_o[4], xi_o[5]);
    let tangent = q_o + u_o.cross(d) + dp;
    let scale = tau / tangent.norm();
    let m = d.cross(&tangent) * scale;
    let f = tangent * scale;
    Vector6::new(m.x, m.y, m.z, f.x, f.y, f.z)
}

pub(crate) fn lerp6(a: &Vector6<f64>, b: &Vector6<f64>, frac: f64) -> Vector6<f64> {
    a * (1.0 - frac) + b * frac
}

fn is_spd(m: &Matrix6<f64>) -> bool {
    let sym = (m - m.transpose()).norm() <= 1e-9 * m.norm().max(1.0);
    sym && m.iter().all(|x| x.is_finite()) && m.cholesky().is_some()
}

/// Section matrices of a solid circular rod.
///
/// `M = diag(M_a, M_l)` with `M_a = diag(1, 1, 2) rho pi r^4 / 4`,
/// `M_l = rho pi r^2 I`; `K = diag(K_a, K_l)` with
/// `K_a = diag(E, E, 2G) pi r^4 / 4`, `K_l = diag(G, G, E) pi r^2`.
pub fn build_section_matrices(radius: f64, density: f64, youngs: f64, shear: f64) -> Result<(Matrix6<f64>, Matrix6<f64>)> {
    for (name, v) in [("radius", radius), ("density", density), ("youngs", youngs), ("shear", shear)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let pi = std::f64::consts::PI;
    let polar = pi * radius.powi(4) / 4.0;
    let area = pi * radius * radius;
    let m = Matrix6::from_diagonal(&Vector6::new(
        density * polar,
        density * polar,
        2.0 * density * polar,
        density * area,
        density * area,
        density * area,
    ));
    let k = Matrix6::from_diagonal(&Vector6::new(
        youngs * polar,
        youngs * polar,
        2.0 * shear * polar,
        shear * area,
        shear * area,
        youngs * area,
    ));
    Ok((m, k))
}

/// Full state of the rod at one instant, sampled at the nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RodState {
    pub time: f64,
    pub poses: Vec<Pose>,
    pub strains: Vec<Twist>,
    pub velocities: Vec<Twist>,
    pub wrenches: Vec<Wrench>,
}

impl RodState {
    /// Reference (unstrained) configuration at rest, integrated from `base`.
    ///
    /// Wrenches include the actuation wrench of `tensions` so the stored
    /// fields satisfy `Lambda = K (xi - xi_o) + Lambda_act`.
    pub fn straight(params: &RodParameters, base: Pose, tensions: &[f64], time: f64) -> Result<Self> {
        let n = params.node_count;
        let strains = params.reference_strain.clone();
        let wrenches = (0..n)
            .map(|k| params.actuation_wrench(tensions, k))
            .collect::<Result<Vec<_>>>()?;
        let poses = integrate_poses(base, &strains, params.spacing());
        Ok(Self {
            time,
            poses,
            strains,
            velocities: vec![Twist::zero(); n],
            wrenches,
        })
    }

    pub fn node_count(&self) -> usize {
        self.poses.len()
    }

    pub fn tip_pose(&self) -> &Pose {
        self.poses.last().expect("non-empty state")
    }

    pub fn tip_velocity(&self) -> &Twist {
        self.velocities.last().expect("non-empty state")
    }

    pub fn base_wrench(&self) -> &Wrench {
        &self.wrenches[0]
    }

    pub fn tip_wrench(&self) -> &Wrench {
        self.wrenches.last().expect("non-empty state")
    }

    pub fn max_orthonormality_error(&self) -> f64 {
        self.poses.iter().map(|p| p.orthonormality_error()).fold(0.0, f64::max)
    }

    /// Largest deviation from `Lambda = K (xi - xi_o) + Lambda_act`, relative to `|Lambda|`.
    pub fn constitutive_defect(&self, params: &RodParameters, tensions: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 0..self.node_count() {
            let expected = params.elastic_wrench(&self.strains[k], k) + params.actuation_wrench(tensions, k)?;
            let scale = self.wrenches[k].norm().max(1.0);
            worst = worst.max((expected - self.wrenches[k]).norm() / scale);
        }
        Ok(worst)
    }
}

/// Node poses from a strain field, midpoint strain per interval.
pub fn integrate_poses(base: Pose, strains: &[Twist], spacing: f64) -> Vec<Pose> {
    let mut poses = Vec::with_capacity(strains.len());
    let mut g = base;
    poses.push(g);
    for pair in strains.windows(2) {
        let mid = (pair[0] + pair[1]) * 0.5;
        g = g.compose(&crate::liegroup::exp_se3(&mid, spacing));
        g.guard_orthonormality();
        poses.push(g);
    }
    poses
}

/// Linear velocity field of a Kirchhoff rod from its angular motion,
/// `v(s) = R^T [R(0) v(0) + int_0^s R w^ q_o ds]` (trapezoidal quadrature).
pub fn kirchhoff_linear_velocity(
    params: &RodParameters,
    rotations: &[Matrix3<f64>],
    angular_velocities: &[Vector3<f64>],
    base_linear_velocity: Vector3<f64>,
) -> Result<Vec<Vector3<f64>>> {
    let n = params.node_count;
    if rotations.len() != n || angular_velocities.len() != n {
        return Err(Error::InvalidArgument("fields must be sampled on the node grid".into()));
    }
    let ds = params.spacing();
    let integrand = |k: usize| {
        let q_o = params.reference_strain[k].linear();
        rotations[k] * angular_velocities[k].cross(&q_o)
    };
    let mut acc = rotations[0] * base_linear_velocity;
    let mut out = Vec::with_capacity(n);
    out.push(base_linear_velocity);
    let mut prev = integrand(0);
    for k in 1..n {
        let cur = integrand(k);
        acc += (prev + cur) * (0.5 * ds);
        out.push(rotations[k].transpose() * acc);
        prev = cur;
    }
    Ok(out)
}

/// Angle field of a planar rod from its tangent field, `p_s = Rot(theta) (0, 1)`.
///
/// The result is unwrapped so that it is continuous along the rod.
pub fn planar_angle_from_positions(tangents: &[Vector2<f64>]) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(tangents.len());
    for (k, t) in tangents.iter().enumerate() {
        let norm = t.norm();
        if !(norm > 1e-9) {
            return Err(Error::DegenerateTangent { node: k, norm });
        }
        // Rot(theta) (0, 1) = (-sin theta, cos theta)
        let mut theta = (-t.x).atan2(t.y);
        if let Some(&prev) = out.last() {
            let two_pi = 2.0 * std::f64::consts::PI;
            theta += two_pi * ((prev - theta) / two_pi).round();
        }
        out.push(theta);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn physical_sections() -> (Matrix6<f64>, Matrix6<f64>) {
        build_section_matrices(0.8e-3, 4.48e4, 200e9, 76.92e9).unwrap()
    }

    #[test]
    fn section_matrices_match_published_values() {
        let (m, k) = physical_sections();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(m[(0, 0)], 1.44e-8) < 5e-3);
        assert!(rel(m[(2, 2)], 2.88e-8) < 5e-3);
        assert!(rel(m[(3, 3)], 9.00e-2) < 5e-3);
        assert!(rel(k[(0, 0)], 6.43e-2) < 5e-3);
        // Shear-modulus entries are printed about 2.3% below G = 76.92 GPa.
        assert!(rel(k[(2, 2)], 4.84e-2) < 2.5e-2);
        assert!(rel(k[(3, 3)], 1.51e5) < 2.5e-2);
        let polar = std::f64::consts::PI * 0.8e-3f64.powi(4) / 4.0;
        assert_relative_eq!(k[(2, 2)], 2.0 * 76.92e9 * polar, max_relative = 1e-12);
        assert!(rel(k[(5, 5)], 4.02e5) < 5e-3);
    }

    #[test]
    fn section_matrices_reject_degenerate_geometry() {
        assert!(build_section_matrices(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(build_section_matrices(1.0, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn density_scales_inertia_only() {
        let (m1, k1) = build_section_matrices(1e-3, 1000.0, 1e9, 4e8).unwrap();
        let (m2, k2) = build_section_matrices(1e-3, 2000.0, 1e9, 4e8).unwrap();
        assert_eq!(m2, m1 * 2.0);
        assert_eq!(k1, k2);
    }

    fn rod() -> RodParameters {
        let (m, k) = physical_sections();
        RodParameters::uniform(0.6, 30, m, k).unwrap()
    }

    #[test]
    fn elastic_wrench_examples() {
        let p = rod();
        let xi_o = p.reference_strain[3];
        assert_eq!(p.elastic_wrench(&xi_o, 3), Wrench::zero());
        let delta = Twist::from_array([0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let w = p.elastic_wrench(&(xi_o + delta), 3);
        assert_relative_eq!(w.moment().x, 0.1 * p.stiffness[3][(0, 0)], epsilon = 1e-15);
        assert!((w.moment().x - 6.43e-3).abs() < 5e-5);
        assert_eq!(w.force(), Vector3::zeros());
        let d = Twist::from_array([0.01, -0.2, 0.03, 1e-4, 2e-5, -3e-4]);
        let lhs = p.elastic_wrench(&(xi_o + d * 2.0), 3);
        let rhs = p.elastic_wrench(&(xi_o + d), 3) * 2.0;
        assert_relative_eq!(lhs.0, rhs.0, max_relative = 1e-12);
    }

    #[test]
    fn actuation_wrench_examples() {
        let a = 0.01;
        let p = rod()
            .with_tendon(TendonRouting::constant_offset(Vector3::new(a, 0.0, 0.0), 30, 29))
            .unwrap();
        assert_eq!(p.actuation_wrench(&[0.0], 5).unwrap(), Wrench::zero());
        let tau = 3.0;
        let w = p.actuation_wrench(&[tau], 5).unwrap();
        assert_relative_eq!(w.moment(), Vector3::new(0.0, -a * tau, 0.0), epsilon = 1e-15);
        assert_relative_eq!(w.force(), Vector3::new(0.0, 0.0, tau), epsilon = 1e-15);
        let w2 = p.actuation_wrench(&[2.0 * tau], 5).unwrap();
        assert_relative_eq!(w2.0, w.0 * 2.0, epsilon = 1e-15);
        assert!(matches!(p.actuation_wrench(&[-1.0], 5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn actuation_force_norm_equals_tension() {
        let n = 30;
        let ds = 0.6 / 29.0;
        let offsets: Vec<_> = (0..n)
            .map(|k| {
                let s = k as f64 * ds;
                Vector3::new(0.01 * (3.0 * s).cos(), 0.01 * (3.0 * s).sin(), 0.0)
            })
            .collect();
        let tendon = TendonRouting::from_offsets(offsets, ds, 14).unwrap();
        let p = rod().with_tendon(tendon).unwrap();
        for node in 0..=14 {
            let w = p.actuation_wrench(&[2.5], node).unwrap();
            assert_relative_eq!(w.force().norm(), 2.5, epsilon = 1e-12);
        }
        assert_eq!(p.actuation_wrench(&[2.5], 15).unwrap(), Wrench::zero());
    }

    #[test]
    fn analytic_tendon_derivatives_are_checked() {
        let n = 30;
        let ds = 0.6 / 29.0;
        let offsets: Vec<_> = (0..n).map(|k| Vector3::new(0.01 * (k as f64 * ds), 0.0, 0.0)).collect();
        let good = vec![Vector3::new(0.01, 0.0, 0.0); n];
        assert!(TendonRouting::with_derivatives(offsets.clone(), good, ds, 29).is_ok());
        let bad = vec![Vector3::new(1.0, 0.0, 0.0); n];
        assert!(TendonRouting::with_derivatives(offsets, bad, ds, 29).is_err());
    }

    #[test]
    fn external_wrench_examples() {
        let p = rod().with_gravity(Vector3::new(0.0, 0.0, -9.81));
        let fg = p.gravity_wrench[2];
        assert_eq!(p.external_wrench(&Pose::identity(), 2), fg);
        let shifted = Pose::from_translation(Vector3::new(0.3, -0.2, 1.0));
        let f = p.external_wrench(&shifted, 2);
        assert_relative_eq!(f.force(), fg.force(), epsilon = 1e-15);
        assert_eq!(f.moment(), Vector3::zeros());
        let none = rod();
        let rotated = crate::liegroup::exp_se3(&Twist::from_array([0.3, 0.2, 0.1, 1.0, 2.0, 3.0]), 1.0);
        assert_eq!(none.external_wrench(&rotated, 0), Wrench::zero());
    }

    #[test]
    fn energy_examples() {
        let (m, k) = physical_sections();
        let p = RodParameters::uniform(0.6, 30, m, k).unwrap();
        let mut state = RodState::straight(&p, Pose::identity(), &[], 0.0).unwrap();
        assert_eq!(p.total_energy(&state), 0.0);
        let m_l = Matrix6::from_diagonal(&Vector6::new(1.0, 1.0, 1.0, 9.0e-2, 9.0e-2, 9.0e-2));
        let p2 = RodParameters::uniform(0.6, 30, m_l, k).unwrap();
        state.velocities = vec![Twist::from_array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]); 30];
        let e = p2.total_energy(&state);
        assert_relative_eq!(e, 0.027, epsilon = 1e-14);
        state.velocities.iter_mut().for_each(|v| *v = *v * 2.0);
        assert_relative_eq!(p2.total_energy(&state), 4.0 * e, epsilon = 1e-14);
    }

    #[test]
    fn kirchhoff_reconstruction_trivial_cases() {
        let p = rod();
        let r = vec![Matrix3::identity(); 30];
        let w = vec![Vector3::zeros(); 30];
        let v = kirchhoff_linear_velocity(&p, &r, &w, Vector3::zeros()).unwrap();
        assert!(v.iter().all(|x| x.norm() == 0.0));
        let c = Vector3::new(0.1, -0.3, 0.2);
        let v = kirchhoff_linear_velocity(&p, &r, &w, c).unwrap();
        assert!(v.iter().all(|x| (x - c).norm() < 1e-15));
    }

    #[test]
    fn kirchhoff_rigid_spin() {
        // Rigid rotation about the base x-axis: v(s) = w x (s e3) in body frame.
        let p = rod();
        let w0 = Vector3::new(0.7, 0.0, 0.0);
        let r = vec![Matrix3::identity(); 30];
        let w = vec![w0; 30];
        let v = kirchhoff_linear_velocity(&p, &r, &w, Vector3::zeros()).unwrap();
        for (k, vk) in v.iter().enumerate() {
            let expected = w0.cross(&Vector3::new(0.0, 0.0, p.arclength(k)));
            assert_relative_eq!(*vk, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn planar_angle_examples() {
        let th = planar_angle_from_positions(&[Vector2::new(0.0, 1.0); 5]).unwrap();
        assert!(th.iter().all(|t| *t == 0.0));
        let th = planar_angle_from_positions(&[Vector2::new(-1.0, 0.0); 5]).unwrap();
        assert!(th.iter().all(|t| (t - FRAC_PI_2).abs() < 1e-15));
        assert!(matches!(
            planar_angle_from_positions(&[Vector2::new(0.0, 1.0), Vector2::new(1e-12, 0.0)]),
            Err(Error::DegenerateTangent { node: 1, .. })
        ));
    }

    #[test]
    fn planar_angle_roundtrip_unwrapped() {
        let thetas: Vec<f64> = (0..200).map(|k| -1.0 + 0.05 * k as f64 + 0.3 * (0.2 * k as f64).sin()).collect();
        let tangents: Vec<_> = thetas.iter().map(|t| Vector2::new(-t.sin(), t.cos()) * 0.9).collect();
        let back = planar_angle_from_positions(&tangents).unwrap();
        let offset = ((thetas[0] - back[0]) / (2.0 * PI)).round() * 2.0 * PI;
        for (a, b) in thetas.iter().zip(&back) {
            assert!((a - b - offset).abs() < 1e-12);
        }
    }
}
