//! Z-Y-X Euler angle utilities. Angles are stored as (roll, pitch, yaw).

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::{Error, Result};

/// Half-width of the excluded band around pitch = ±π/2 [rad].
pub const GIMBAL_EPS: f64 = 1e-3;

/// Body-to-world rotation R = Rz(yaw)·Ry(pitch)·Rx(roll).
pub fn rotation_matrix(theta: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::from_euler_angles(theta.x, theta.y, theta.z).into_inner()
}

fn check_pitch(pitch: f64) -> Result<()> {
    if !pitch.is_finite() || pitch.abs() >= std::f64::consts::FRAC_PI_2 - GIMBAL_EPS {
        return Err(Error::GimbalLock { pitch });
    }
    Ok(())
}

/// Matrix J(θ) with θ̇ = J(θ)·ω_b, ω_b the body-frame angular velocity.
pub fn euler_rate_matrix(theta: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_pitch(theta.y)?;
    let (sr, cr) = theta.x.sin_cos();
    let (sp, cp) = theta.y.sin_cos();
    let tp = sp / cp;
    Ok(Matrix3::new(
        1.0,
        sr * tp,
        cr * tp,
        0.0,
        cr,
        -sr,
        0.0,
        sr / cp,
        cr / cp,
    ))
}

/// Inverse map E(θ) with ω_b = E(θ)·θ̇. Defined everywhere; singular at gimbal lock.
pub fn body_rate_matrix(theta: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = theta.x.sin_cos();
    let (sp, cp) = theta.y.sin_cos();
    Matrix3::new(1.0, 0.0, -sp, 0.0, cr, sr * cp, 0.0, -sr, cr * cp)
}

/// Wraps an angle onto (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
