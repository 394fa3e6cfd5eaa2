//! Fixed-corotated hyperelasticity and the plastic return mappings.

use serde::{Deserialize, Serialize};

use crate::{Error, Mat3, Material, Result, Vec3};

/// Lamé parameters `(mu, lambda)` from Young's modulus and Poisson's ratio.
pub fn lame_params(youngs: f64, poisson: f64) -> Result<(f64, f64)> {
    if !(youngs > 0.0) {
        return Err(Error::invalid(format!("Young's modulus must be positive, got {youngs}")));
    }
    if !(poisson > 0.0 && poisson < 0.5) {
        return Err(Error::InvalidPoisson(poisson));
    }
    let mu = youngs / (2.0 * (1.0 + poisson));
    let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    Ok((mu, lambda))
}

/// Singular value decomposition `F = U diag(s) V^T` with `U`, `V` proper
/// rotations. A reflection is absorbed into the smallest singular value,
/// which may then be negative.
pub fn signed_svd(f: &Mat3) -> (Mat3, Vec3, Mat3) {
    let svd = f.svd(true, true);
    let mut u = svd.u.expect("requested U");
    let mut v = svd.v_t.expect("requested V^T").transpose();
    let mut s = svd.singular_values;
    // nalgebra sorts singular values in decreasing order; flip the last one.
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
        s[2] = -s[2];
    }
    if v.determinant() < 0.0 {
        v.column_mut(2).neg_mut();
        s[2] = -s[2];
    }
    (u, s, v)
}

/// Rotation factor of the polar decomposition `F = R S`.
pub fn polar_rotation(f: &Mat3) -> Mat3 {
    let (u, _, v) = signed_svd(f);
    u * v.transpose()
}

/// Fixed-corotated energy density `mu |F - R|^2 + lambda/2 (J - 1)^2`.
pub fn fixed_corotated_energy(f: &Mat3, mu: f64, lambda: f64) -> f64 {
    let r = polar_rotation(f);
    let j = f.determinant();
    mu * (f - r).norm_squared() + 0.5 * lambda * (j - 1.0) * (j - 1.0)
}

/// First Piola-Kirchhoff stress `dPsi/dF` of the fixed-corotated model:
/// `2 mu (F - R) + lambda (J - 1) J F^{-T}`.
///
/// Plastic materials are expected to have been projected already, which
/// keeps `det F > 0`.
pub fn first_piola_stress(f: &Mat3, mu: f64, lambda: f64, material: Material) -> Result<Mat3> {
    let j = f.determinant();
    if !(j > 0.0) {
        log::trace!("inverted {material} element, det {j}");
        return Err(Error::Inverted { particle: 0, det: j });
    }
    let r = polar_rotation(f);
    // J F^{-T} is the cofactor matrix.
    let cof = cofactor(f);
    Ok(2.0 * mu * (f - r) + lambda * (j - 1.0) * cof)
}

fn cofactor(f: &Mat3) -> Mat3 {
    let c0 = f.column(1).cross(&f.column(2));
    let c1 = f.column(2).cross(&f.column(0));
    let c2 = f.column(0).cross(&f.column(1));
    // Rows of F^{-1} are c_i / J, so J F^{-T} has them as columns.
    Mat3::from_columns(&[c0, c1, c2])
}

/// Parameters of the plastic models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlasticParams {
    /// Critical compression: singular values are clamped at `1 - theta_c`.
    pub theta_c: f64,
    /// Critical stretch: singular values are clamped at `1 + theta_s`.
    pub theta_s: f64,
    /// Drucker-Prager friction angle, degrees.
    pub friction_angle_deg: f64,
}

impl Default for PlasticParams {
    fn default() -> Self {
        Self {
            theta_c: 0.1,
            theta_s: 0.1,
            friction_angle_deg: 35.0,
        }
    }
}

impl PlasticParams {
    /// Drucker-Prager cone coefficient `sqrt(2/3) * 2 sin(phi) / (3 - sin(phi))`.
    pub fn drucker_prager_alpha(&self) -> f64 {
        let s = self.friction_angle_deg.to_radians().sin();
        (2.0f64 / 3.0).sqrt() * 2.0 * s / (3.0 - s)
    }
}

/// Project a trial deformation gradient back onto the yield surface of the
/// material. Elastic (and rigid) materials are returned unchanged.
pub fn plastic_project(f: &Mat3, material: Material, params: &PlasticParams, mu: f64, lambda: f64) -> Mat3 {
    match material {
        Material::Elastic | Material::Rigid => *f,
        Material::Plasticine => {
            let (u, s, v) = signed_svd(f);
            let lo = 1.0 - params.theta_c;
            let hi = 1.0 + params.theta_s;
            let clamped = s.map(|x| x.clamp(lo, hi));
            if clamped == s {
                return *f;
            }
            u * Mat3::from_diagonal(&clamped) * v.transpose()
        }
        Material::Sand => {
            let (u, s, v) = signed_svd(f);
            let eps = s.map(|x| x.max(1e-6).ln());
            let tr = eps.sum();
            if tr >= 0.0 {
                // Free expansion: all elastic strain released.
                return u * v.transpose();
            }
            let dev = eps - Vec3::repeat(tr / 3.0);
            let dev_norm = dev.norm();
            if dev_norm <= 0.0 {
                return *f;
            }
            let alpha = params.drucker_prager_alpha();
            let dgamma = dev_norm + (3.0 * lambda + 2.0 * mu) / (2.0 * mu) * tr * alpha;
            if dgamma <= 0.0 {
                return *f;
            }
            let h = eps - dev * (dgamma / dev_norm);
            u * Mat3::from_diagonal(&h.map(f64::exp)) * v.transpose()
        }
    }
}
