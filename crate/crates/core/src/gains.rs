//! Linearized wave analysis of the observer error: Riemann coordinates,
//! boundary reflection matrices, the convergence-rate estimate and the
//! perfectly absorbing gains.

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{Twist, Wrench};

/// Below this largest singular value of `rho0 rho1` the rate is reported as infinite.
pub const ABSORBING_THRESHOLD: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainAnalysis {
    /// `K^1/2 M^-1 K^1/2`.
    pub s: Matrix6<f64>,
    /// Orthogonal, with `S = U^T Sigma^2 U`.
    pub u: Matrix6<f64>,
    /// Characteristic wave speeds, ascending.
    pub sigma: Vector6<f64>,
    pub k_half: Matrix6<f64>,
    pub k_half_inv: Matrix6<f64>,
}

impl GainAnalysis {
    pub fn sigma_matrix(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&self.sigma)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma.min()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiemannCoordinates {
    pub plus: Vector6<f64>,
    pub minus: Vector6<f64>,
}

/// Which boundary (or both) is perfectly absorbing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Absorbing {
    One,
    Both,
}

/// Which gain a rate sweep varies (the other is held at zero).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptGain {
    Base,
    Tip,
}

fn check_spd(m: &Matrix6<f64>, name: &str) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    if !m.iter().all(|x| x.is_finite()) || asym > 1e-9 * m.norm().max(1.0) {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    let eig = SymmetricEigen::new(*m);
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::InvalidArgument(format!("{name} is not positive definite")));
    }
    Ok(())
}

/// `A^p` for symmetric positive definite `A`.
pub fn spd_power(a: &Matrix6<f64>, p: f64) -> Matrix6<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = eig.eigenvalues.map(|l| l.powf(p));
    eig.eigenvectors * Matrix6::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Diagonalizes `S = K^1/2 M^-1 K^1/2` with ascending wave speeds and
/// each eigenvector's largest-magnitude entry made positive.
pub fn riemann_setup(m: &Matrix6<f64>, k: &Matrix6<f64>) -> Result<GainAnalysis> {
    check_spd(m, "inertia")?;
    check_spd(k, "stiffness")?;
    let k_half = spd_power(k, 0.5);
    let k_half_inv = spd_power(k, -0.5);
    let m_inv = m.cholesky().expect("checked SPD").inverse();
    let s = k_half * m_inv * k_half;
    let s = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut u = Matrix6::zeros();
    let mut sigma = Vector6::zeros();
    for (row, &col) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(col).into_owned();
        // `iamax` returns the first index of the largest magnitude, fixing ties.
        if v[v.iamax()] < 0.0 {
            v = -v;
        }
        u.set_row(row, &v.transpose());
        sigma[row] = eig.eigenvalues[col].max(0.0).sqrt();
    }
    Ok(GainAnalysis {
        s,
        u,
        sigma,
        k_half,
        k_half_inv,
    })
}

/// `phi_pm = U K^1/2 eta -+ Sigma U K^-1/2 Lambda`.
pub fn riemann_transform(wrench: &Wrench, twist: &Twist, a: &GainAnalysis) -> RiemannCoordinates {
    let vel = a.u * a.k_half * twist.0;
    let wave = Matrix6::from_diagonal(&a.sigma) * (a.u * a.k_half_inv * wrench.0);
    RiemannCoordinates {
        plus: vel - wave,
        minus: vel + wave,
    }
}

/// Inverse of [`riemann_transform`].
pub fn riemann_inverse(coords: &RiemannCoordinates, a: &GainAnalysis) -> (Wrench, Twist) {
    let sum = coords.plus + coords.minus;
    let diff = coords.plus - coords.minus;
    let eta = a.k_half_inv * a.u.transpose() * sum * 0.5;
    let scaled = diff.component_div(&a.sigma);
    let lambda = -(a.k_half * a.u.transpose() * scaled) * 0.5;
    (Wrench(lambda), Twist(eta))
}

/// `G1 = U K^-1/2 Gamma1 K^-1/2 U^T`.
pub fn tip_gain_transform(gamma1: &Matrix6<f64>, a: &GainAnalysis) -> Matrix6<f64> {
    a.u * a.k_half_inv * gamma1 * a.k_half_inv * a.u.transpose()
}

/// `G0 = U K^-1/2 Gamma0^-1 K^-1/2 U^T`, only defined for invertible `Gamma0`.
pub fn base_gain_transform(gamma0: &Matrix6<f64>, a: &GainAnalysis) -> Result<Matrix6<f64>> {
    let inv = gamma0
        .try_inverse()
        .ok_or_else(|| Error::SingularReflection("base gain is not invertible".into()))?;
    Ok(a.u * a.k_half_inv * inv * a.k_half_inv * a.u.transpose())
}

/// `(I + Sigma G)^-1 (I - Sigma G)`.
pub fn reflection_from_transformed(g: &Matrix6<f64>, a: &GainAnalysis) -> Result<Matrix6<f64>> {
    let sg = a.sigma_matrix() * g;
    let lhs = Matrix6::identity() + sg;
    let rhs = Matrix6::identity() - sg;
    lhs.lu()
        .solve(&rhs)
        .filter(|m| m.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::SingularReflection("I + Sigma G is singular".into()))
}

/// `(Sigma^-1 + G)^-1 (Sigma^-1 - G)`, the companion form.
pub fn reflection_from_transformed_alt(g: &Matrix6<f64>, a: &GainAnalysis) -> Result<Matrix6<f64>> {
    let si = Matrix6::from_diagonal(&a.sigma.map(|s| 1.0 / s));
    (si + g)
        .lu()
        .solve(&(si - g))
        .filter(|m| m.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::SingularReflection("Sigma^-1 + G is singular".into()))
}

/// Base reflection `rho0`, valid for singular `Gamma0`.
///
/// With `X = U K^1/2 Gamma0 K^1/2 U^T` (so `G0 = X^-1` when it exists),
/// `(I + Sigma X^-1)^-1 (I - Sigma X^-1) = (X - Sigma)(X + Sigma)^-1`.
pub fn base_reflection(gamma0: &Matrix6<f64>, a: &GainAnalysis) -> Result<Matrix6<f64>> {
    let x = a.u * a.k_half * gamma0 * a.k_half * a.u.transpose();
    let sigma = a.sigma_matrix();
    let denom_t = (x + sigma).transpose();
    let num_t = (x - sigma).transpose();
    // (X - S)(X + S)^-1 = [(X + S)^-T (X - S)^T]^T
    denom_t
        .lu()
        .solve(&num_t)
        .map(|m| m.transpose())
        .filter(|m| m.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::SingularReflection("X + Sigma is singular".into()))
}

pub fn tip_reflection(gamma1: &Matrix6<f64>, a: &GainAnalysis) -> Result<Matrix6<f64>> {
    reflection_from_transformed(&tip_gain_transform(gamma1, a), a)
}

pub fn reflection_matrices(gamma0: &Matrix6<f64>, gamma1: &Matrix6<f64>, a: &GainAnalysis) -> Result<(Matrix6<f64>, Matrix6<f64>)> {
    Ok((base_reflection(gamma0, a)?, tip_reflection(gamma1, a)?))
}

/// `sigma_min(Sigma) / (2L) ln(1 / sigma_max(rho0 rho1))`, clamped at zero.
pub fn mu_max(rho0: &Matrix6<f64>, rho1: &Matrix6<f64>, sigma: &Vector6<f64>, length: f64) -> f64 {
    let prod = rho0 * rho1;
    let smax = prod.singular_values().max();
    if smax <= ABSORBING_THRESHOLD {
        return f64::INFINITY;
    }
    if smax >= 1.0 {
        return 0.0;
    }
    sigma.min() / (2.0 * length) * (1.0 / smax).ln()
}

/// Perfectly absorbing gains `(Gamma0*, Gamma1*)`.
///
/// `Gamma1*` is computed from its own closed form, not by inverting `Gamma0*`.
pub fn optimal_gains(m: &Matrix6<f64>, k: &Matrix6<f64>) -> Result<(Matrix6<f64>, Matrix6<f64>)> {
    check_spd(m, "inertia")?;
    check_spd(k, "stiffness")?;
    let kh = spd_power(k, 0.5);
    let khi = spd_power(k, -0.5);
    let m_inv = m.cholesky().expect("checked SPD").inverse();
    let g0 = khi * spd_power(&(kh * m_inv * kh), 0.5) * khi;
    let g1 = kh * spd_power(&(khi * m * khi), 0.5) * kh;
    Ok(((g0 + g0.transpose()) * 0.5, (g1 + g1.transpose()) * 0.5))
}

/// Worst-case extinction time of error waves with absorbing boundaries.
pub fn finite_time_bound(sigma: &Vector6<f64>, length: f64, absorbing: Absorbing) -> f64 {
    let one = 2.0 * length / sigma.min();
    match absorbing {
        Absorbing::One => one,
        Absorbing::Both => 0.5 * one,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuSample {
    pub gamma_scale: f64,
    pub mu_max: f64,
    /// The absorbing point lies in `[gamma_scale, next gamma_scale]`.
    pub singularity_bracket: bool,
}

/// Eigenvalues of the symmetric matrix similar to the boundary's `Sigma G`
/// (inverted for the base); an eigenvalue equal to 1 means that channel is absorbed.
fn absorption_spectrum(gain: &Matrix6<f64>, which: SweptGain, a: &GainAnalysis) -> Vector6<f64> {
    let sh = a.sigma.map(f64::sqrt);
    let m = match which {
        SweptGain::Tip => {
            let g = tip_gain_transform(gain, a);
            Matrix6::from_diagonal(&sh) * g * Matrix6::from_diagonal(&sh)
        }
        SweptGain::Base => {
            let x = a.u * a.k_half * gain * a.k_half * a.u.transpose();
            let shi = sh.map(|v| 1.0 / v);
            Matrix6::from_diagonal(&shi) * x * Matrix6::from_diagonal(&shi)
        }
    };
    SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues
}

/// `mu_max` along `gain = gamma * reference` for one boundary, the other gain zero.
pub fn mu_sweep(
    m: &Matrix6<f64>,
    k: &Matrix6<f64>,
    length: f64,
    reference: &Matrix6<f64>,
    gammas: &[f64],
    which: SweptGain,
) -> Result<Vec<MuSample>> {
    if !(length > 0.0) {
        return Err(Error::InvalidArgument("length must be positive".into()));
    }
    let a = riemann_setup(m, k)?;
    let zero = Matrix6::zeros();
    let mut out = Vec::with_capacity(gammas.len());
    let mut spectra = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let gain = reference * g;
        let (rho0, rho1) = match which {
            SweptGain::Base => reflection_matrices(&gain, &zero, &a)?,
            SweptGain::Tip => reflection_matrices(&zero, &gain, &a)?,
        };
        spectra.push(absorption_spectrum(&gain, which, &a));
        out.push(MuSample {
            gamma_scale: g,
            mu_max: mu_max(&rho0, &rho1, &a.sigma, length),
            singularity_bracket: false,
        });
    }
    for i in 0..out.len().saturating_sub(1) {
        let crosses = (0..6).any(|c| {
            let (l, r) = (spectra[i][c] - 1.0, spectra[i + 1][c] - 1.0);
            l == 0.0 || l * r < 0.0
        });
        out[i].singularity_bracket = crosses;
    }
    if let (Some(last), Some(spec)) = (out.last_mut(), spectra.last()) {
        last.singularity_bracket = spec.iter().any(|e| *e == 1.0);
    }
    Ok(out)
}
