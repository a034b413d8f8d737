//! SO(3)/SE(3) primitives.
//!
//! Six-vectors are always stacked angular-first: velocity twists as `[w; v]`,
//! strain twists as `[u; q]` and wrenches as `[m; n]`. The block formulas for
//! `ad` and `Ad` below depend on this ordering.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Matrix6, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset of the angular (moment) block inside a stacked six-vector.
pub const ANGULAR_BLOCK: usize = 0;
/// Offset of the linear (force) block inside a stacked six-vector.
pub const LINEAR_BLOCK: usize = 3;

/// Below this angle the trigonometric ratios in `exp`/`log` use Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;
/// `log` refuses rotations whose angle is within this margin of pi.
pub const LOG_PI_MARGIN: f64 = 1e-6;
/// Drift of `R^T R` from identity (Frobenius) that triggers re-orthonormalization.
pub const REORTHONORMALIZE_THRESHOLD: f64 = 1e-8;
/// Tolerance used when validating poses and se(3) matrices.
pub const VALIDATION_TOLERANCE: f64 = 1e-9;

macro_rules! six_vector {
    ($(#[$meta:meta])* $name:ident, $first:ident, $second:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
        pub struct $name(pub Vector6<f64>);

        impl $name {
            pub fn new($first: Vector3<f64>, $second: Vector3<f64>) -> Self {
                let mut v = Vector6::zeros();
                v.fixed_rows_mut::<3>(ANGULAR_BLOCK).copy_from(&$first);
                v.fixed_rows_mut::<3>(LINEAR_BLOCK).copy_from(&$second);
                Self(v)
            }

            pub fn zero() -> Self {
                Self(Vector6::zeros())
            }

            pub fn from_array(values: [f64; 6]) -> Self {
                Self(Vector6::from_column_slice(&values))
            }

            pub fn $first(&self) -> Vector3<f64> {
                self.0.fixed_rows::<3>(ANGULAR_BLOCK).into_owned()
            }

            pub fn $second(&self) -> Vector3<f64> {
                self.0.fixed_rows::<3>(LINEAR_BLOCK).into_owned()
            }

            pub fn as_vector(&self) -> &Vector6<f64> {
                &self.0
            }

            pub fn norm(&self) -> f64 {
                self.0.norm()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }
        }

        impl From<Vector6<f64>> for $name {
            fn from(v: Vector6<f64>) -> Self {
                Self(v)
            }
        }

        impl From<$name> for Vector6<f64> {
            fn from(v: $name) -> Self {
                v.0
            }
        }

        impl Add for $name {
            type Output = Self;
            fn add(self, rhs: Self) -> Self {
                Self(self.0 + rhs.0)
            }
        }

        impl AddAssign for $name {
            fn add_assign(&mut self, rhs: Self) {
                self.0 += rhs.0;
            }
        }

        impl Sub for $name {
            type Output = Self;
            fn sub(self, rhs: Self) -> Self {
                Self(self.0 - rhs.0)
            }
        }

        impl Neg for $name {
            type Output = Self;
            fn neg(self) -> Self {
                Self(-self.0)
            }
        }

        impl Mul<f64> for $name {
            type Output = Self;
            fn mul(self, rhs: f64) -> Self {
                Self(self.0 * rhs)
            }
        }
    };
}

six_vector!(
    /// Velocity twist `[w; v]` or strain twist `[u; q]`.
    Twist,
    angular,
    linear
);

six_vector!(
    /// Wrench `[m; n]` (moment first).
    Wrench,
    moment,
    force
);

/// Rigid transformation `g = (R, p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            position: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not in SO(3) within 1e-9.
    pub fn new(rotation: Matrix3<f64>, position: Vector3<f64>) -> Result<Self> {
        let pose = Self { rotation, position };
        let drift = pose.orthonormality_error();
        let det = rotation.determinant();
        if !drift.is_finite() || drift > VALIDATION_TOLERANCE || (det - 1.0).abs() > VALIDATION_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (|R^T R - I| = {drift:e}, det = {det})"
            )));
        }
        if !position.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite position".into()));
        }
        Ok(pose)
    }

    pub fn from_translation(position: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            position,
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self {
            rotation,
            position: Vector3::zeros(),
        }
    }

    /// Pose from a (not necessarily normalized) quaternion `w + xi + yj + zk`.
    pub fn from_quaternion(q: [f64; 4], position: Vector3<f64>) -> Result<Self> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidArgument("zero quaternion".into()));
        }
        let unit = UnitQuaternion::from_quaternion(quat);
        Ok(Self {
            rotation: unit.to_rotation_matrix().into_inner(),
            position,
        })
    }

    /// Unit quaternion `[w, x, y, z]` with non-negative scalar part.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let mut out = [q.w, q.i, q.j, q.k];
        if out[0] < 0.0 {
            out.iter_mut().for_each(|x| *x = -*x);
        }
        out
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            position: -(rt * self.position),
        }
    }

    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            position: self.rotation * other.position + self.position,
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    /// Frobenius norm of `R^T R - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Gram-Schmidt projection of the rotation columns back onto SO(3).
    pub fn reorthonormalize(&mut self) {
        let c0 = self.rotation.column(0).normalize();
        let c1 = self.rotation.column(1);
        let c1 = (c1 - c0 * c0.dot(&c1)).normalize();
        let c2 = c0.cross(&c1);
        self.rotation = Matrix3::from_columns(&[c0, c1, c2]);
    }

    /// Re-orthonormalizes only when drift exceeds [`REORTHONORMALIZE_THRESHOLD`].
    pub fn guard_orthonormality(&mut self) {
        if self.orthonormality_error() > REORTHONORMALIZE_THRESHOLD {
            self.reorthonormalize();
        }
    }

    pub fn adjoint(&self) -> Matrix6<f64> {
        adjoint(self)
    }

    pub fn adjoint_inverse(&self) -> Matrix6<f64> {
        adjoint_inverse(self)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.position.iter()).all(|x| x.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

/// Skew matrix with `hat3(v) * w == v x w`.
pub fn hat3(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn vee3(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// se(3) matrix `[[w^, v], [0, 0]]`.
pub fn hat6(twist: &Twist) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat3(&twist.angular()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&twist.linear());
    m
}

/// Inverse of [`hat6`]; rejects matrices that are not in se(3).
pub fn vee6(m: &Matrix4<f64>) -> Result<Twist> {
    let bottom = m.fixed_view::<1, 4>(3, 0).norm();
    let upper = m.fixed_view::<3, 3>(0, 0).into_owned();
    let skew_defect = (upper + upper.transpose()).norm();
    if !(bottom <= VALIDATION_TOLERANCE) || !(skew_defect <= VALIDATION_TOLERANCE) {
        return Err(Error::InvalidArgument(format!(
            "not an se(3) matrix (bottom row norm {bottom:e}, skew defect {skew_defect:e})"
        )));
    }
    let w = vee3(&upper);
    let v = m.fixed_view::<3, 1>(0, 3).into_owned();
    Ok(Twist::new(w, v))
}

/// `ad_x = [[w^, 0], [v^, w^]]`.
pub fn ad(twist: &Twist) -> Matrix6<f64> {
    let wh = hat3(&twist.angular());
    let vh = hat3(&twist.linear());
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&wh);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&vh);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&wh);
    m
}

/// `ad_a b` without forming the matrix (the se(3) Lie bracket).
#[inline]
pub fn bracket(a: &Vector6<f64>, b: &Vector6<f64>) -> Vector6<f64> {
    let aw = Vector3::new(a[0], a[1], a[2]);
    let av = Vector3::new(a[3], a[4], a[5]);
    let bw = Vector3::new(b[0], b[1], b[2]);
    let bv = Vector3::new(b[3], b[4], b[5]);
    let top = aw.cross(&bw);
    let bottom = av.cross(&bw) + aw.cross(&bv);
    Vector6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z)
}

/// `ad_a^T l` without forming the matrix.
#[inline]
pub fn coadjoint(a: &Vector6<f64>, l: &Vector6<f64>) -> Vector6<f64> {
    let aw = Vector3::new(a[0], a[1], a[2]);
    let av = Vector3::new(a[3], a[4], a[5]);
    let lm = Vector3::new(l[0], l[1], l[2]);
    let ln = Vector3::new(l[3], l[4], l[5]);
    let top = -(aw.cross(&lm) + av.cross(&ln));
    let bottom = -aw.cross(&ln);
    Vector6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z)
}

/// `Ad_g = [[R, 0], [p^ R, R]]`.
pub fn adjoint(g: &Pose) -> Matrix6<f64> {
    let r = g.rotation;
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(hat3(&g.position) * r));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    m
}

/// Closed-form `Ad_g^{-1} = [[R^T, 0], [-R^T p^, R^T]]`.
pub fn adjoint_inverse(g: &Pose) -> Matrix6<f64> {
    let rt = g.rotation.transpose();
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-rt * hat3(&g.position)));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&rt);
    m
}

/// `Ad_g^{-1} x` without forming the matrix.
#[inline]
pub fn apply_adjoint_inverse(g: &Pose, x: &Vector6<f64>) -> Vector6<f64> {
    let top = Vector3::new(x[0], x[1], x[2]);
    let bottom = Vector3::new(x[3], x[4], x[5]);
    let rt = g.rotation.transpose();
    let a = rt * top;
    let b = rt * (bottom - g.position.cross(&top));
    Vector6::new(a.x, a.y, a.z, b.x, b.y, b.z)
}

/// Returns `(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)`.
fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    if theta < SMALL_ANGLE {
        let a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
        let b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
        let c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
        return (a, b, c);
    }
    let a = theta.sin() / theta;
    let half = (0.5 * theta).sin() / theta;
    let b = 2.0 * half * half;
    // (t - sin t) cancels badly well above SMALL_ANGLE.
    let c = if theta < 1e-3 {
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    } else {
        (theta - theta.sin()) / (t2 * theta)
    };
    (a, b, c)
}

/// Rodrigues formula for `exp(w^)`.
pub fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let (a, b, _) = exp_coefficients(theta);
    let wh = hat3(w);
    Matrix3::identity() + wh * a + wh * wh * b
}

/// `exp((step * twist)^)` in closed form.
pub fn exp_se3(twist: &Twist, step: f64) -> Pose {
    let w = twist.angular() * step;
    let v = twist.linear() * step;
    let theta = w.norm();
    let (a, b, c) = exp_coefficients(theta);
    let wh = hat3(&w);
    let wh2 = wh * wh;
    let rotation = Matrix3::identity() + wh * a + wh2 * b;
    let jac = Matrix3::identity() + wh * b + wh2 * c;
    Pose {
        rotation,
        position: jac * v,
    }
}

/// Rotation angle in `[0, pi]` and the unnormalized axis `vee(R - R^T) / 2`.
fn rotation_angle(r: &Matrix3<f64>) -> (f64, Vector3<f64>) {
    let axis = 0.5 * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let cos = 0.5 * (r.trace() - 1.0);
    (axis.norm().atan2(cos), axis)
}

/// Inverse of [`exp_so3`] for angles below `pi - LOG_PI_MARGIN`.
pub fn log_so3(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let (theta, axis) = rotation_angle(r);
    if theta >= std::f64::consts::PI - LOG_PI_MARGIN {
        return Err(Error::LogDomain { angle: theta });
    }
    let scale = if theta < SMALL_ANGLE {
        1.0 + theta * theta / 6.0
    } else {
        theta / theta.sin()
    };
    Ok(axis * scale)
}

/// Inverse of [`exp_se3`] with `step = 1`.
pub fn log_se3(g: &Pose) -> Result<Twist> {
    let w = log_so3(&g.rotation)?;
    let theta = w.norm();
    let wh = hat3(&w);
    let t2 = theta * theta;
    // (1 - (t/2) cot(t/2)) / t^2
    let d = if theta < 1e-4 {
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / t2
    };
    let jac_inv = Matrix3::identity() - wh * 0.5 + wh * wh * d;
    Ok(Twist::new(w, jac_inv * g.position))
}

/// Truncated inverse of the dexp map: `x - [t, x]/2 + [t, [t, x]]/12`.
///
/// Exact enough for fourth-order Runge-Kutta-Munthe-Kaas stages.
#[inline]
pub fn dexp_inv_apply(theta: &Vector6<f64>, x: &Vector6<f64>) -> Vector6<f64> {
    let b1 = bracket(theta, x);
    let b2 = bracket(theta, &b1);
    x - b1 * 0.5 + b2 * (1.0 / 12.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn hat3_examples() {
        assert_eq!(hat3(&Vector3::zeros()), Matrix3::zeros());
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(hat3(&Vector3::z()), expected);
    }

    #[test]
    fn hat6_of_unit_twist() {
        assert_eq!(hat6(&Twist::zero()), Matrix4::zeros());
        let m = hat6(&Twist::from_array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]));
        assert_eq!(m.fixed_view::<3, 3>(0, 0).into_owned(), hat3(&Vector3::z()));
        assert_eq!(m.fixed_view::<3, 1>(0, 3).norm(), 0.0);
    }

    #[test]
    fn vee6_rejects_malformed() {
        let mut m = hat6(&Twist::from_array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        m[(3, 1)] = 1e-6;
        assert!(matches!(vee6(&m), Err(Error::InvalidArgument(_))));
        let mut m = hat6(&Twist::zero());
        m[(0, 1)] = 1.0;
        assert!(vee6(&m).is_err());
    }

    #[test]
    fn adjoint_of_identity() {
        assert_eq!(adjoint(&Pose::identity()), Matrix6::identity());
        assert_eq!(adjoint_inverse(&Pose::identity()), Matrix6::identity());
    }

    #[test]
    fn exp_of_zero_and_quarter_turn() {
        let g = exp_se3(&Twist::zero(), 1.0);
        assert_eq!(g, Pose::identity());
        let g = exp_se3(&Twist::from_array([0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0]), 1.0);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(g.rotation, expected, epsilon = 1e-15);
        assert_eq!(g.position, Vector3::zeros());
    }

    #[test]
    fn exp_small_angle_matches_series_branch() {
        let tw = Twist::from_array([3e-9, -2e-9, 1e-9, 0.3, -0.1, 1.0]);
        let g = exp_se3(&tw, 1.0);
        assert!(g.orthonormality_error() < 1e-15);
        assert_relative_eq!(g.position, tw.linear(), epsilon = 1e-8);
        let back = log_se3(&g).unwrap();
        assert_relative_eq!(back.0, tw.0, epsilon = 1e-15);
    }

    #[test]
    fn log_near_pi_is_domain_error() {
        let g = exp_se3(&Twist::from_array([0.0, std::f64::consts::PI - 1e-7, 0.0, 0.0, 0.0, 0.0]), 1.0);
        assert!(matches!(log_se3(&g), Err(Error::LogDomain { .. })));
        let g = exp_se3(&Twist::from_array([0.0, std::f64::consts::PI - 1e-3, 0.0, 1.0, 0.0, 0.0]), 1.0);
        assert!(log_se3(&g).is_ok());
    }

    #[test]
    fn pose_validation_and_quaternion() {
        assert!(Pose::new(Matrix3::identity() * 1.01, Vector3::zeros()).is_err());
        let g = exp_se3(&Twist::from_array([0.2, -0.4, 0.9, 1.0, 2.0, 3.0]), 1.0);
        let q = g.quaternion();
        let back = Pose::from_quaternion([q[0] * 3.0, q[1] * 3.0, q[2] * 3.0, q[3] * 3.0], g.position).unwrap();
        assert_relative_eq!(back.rotation, g.rotation, epsilon = 1e-14);
    }

    #[test]
    fn reorthonormalize_restores_so3() {
        let mut g = exp_se3(&Twist::from_array([0.3, 0.1, -0.2, 0.0, 0.0, 0.0]), 1.0);
        g.rotation[(0, 1)] += 1e-5;
        assert!(g.orthonormality_error() > REORTHONORMALIZE_THRESHOLD);
        g.guard_orthonormality();
        assert!(g.orthonormality_error() < 1e-14);
        assert_relative_eq!(g.rotation.determinant(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn bracket_and_coadjoint_match_matrices() {
        let a = Vector6::new(0.3, -1.2, 0.7, 2.0, -0.5, 0.1);
        let b = Vector6::new(-0.4, 0.8, 1.1, 0.3, 0.9, -2.0);
        let am = ad(&Twist(a));
        assert_relative_eq!(bracket(&a, &b), am * b, epsilon = 1e-14);
        assert_relative_eq!(coadjoint(&a, &b), am.transpose() * b, epsilon = 1e-14);
        let g = exp_se3(&Twist(b), 1.0);
        assert_relative_eq!(apply_adjoint_inverse(&g, &a), adjoint_inverse(&g) * a, epsilon = 1e-14);
    }
}
