use std::f64::consts::FRAC_PI_4;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::{Error, Result};

/// Physical parameters shared by the reduced-order model and the multibody plant.
///
/// Rotors are indexed front-left, front-right, rear-left, rear-right. The body
/// frame is x forward, y left, z up.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotParams {
    /// Main-body mass [kg].
    pub body_mass: f64,
    /// Lumped mass of one leg [kg].
    pub leg_mass: f64,
    /// Main-body inertia about its centre of mass, body frame [kg·m²].
    pub inertia: Matrix3<f64>,
    /// Hip sagittal joint positions in the body frame [m].
    pub hip_offsets: [Vector3<f64>; 4],
    /// Hip-to-thruster distance [m].
    pub leg_length: f64,
    /// Joint angle at which every thrust axis is aligned with body +z [rad].
    pub nominal_joint_angle: f64,
    /// Reaction moment per unit thrust [m].
    pub thrust_moment_coeff: f64,
    /// Propeller spin direction, ±1 per rotor.
    pub spin_dirs: [f64; 4],
    /// Viscous drag on the world-frame linear velocity [N·s/m].
    pub drag_lin: Vector3<f64>,
    /// Viscous drag on the body-frame angular velocity [N·m·s/rad].
    pub drag_ang: Vector3<f64>,
    /// Gravitational acceleration [m/s²].
    pub gravity: f64,
}

/// Hip offsets along the body axes [m].
const HIP_X: f64 = 0.16;
const HIP_Y: f64 = 0.225;
/// Propeller axis distance at the nominal posture [m].
pub const NOMINAL_ROTOR_SPACING: f64 = 0.45;

impl Default for RobotParams {
    fn default() -> Self {
        let nominal = FRAC_PI_4;
        Self {
            body_mass: 4.8,
            leg_mass: 0.3,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.08, 0.13, 0.15)),
            hip_offsets: [
                Vector3::new(HIP_X, HIP_Y, 0.0),
                Vector3::new(HIP_X, -HIP_Y, 0.0),
                Vector3::new(-HIP_X, HIP_Y, 0.0),
                Vector3::new(-HIP_X, -HIP_Y, 0.0),
            ],
            leg_length: (0.5 * NOMINAL_ROTOR_SPACING - HIP_X) / nominal.sin(),
            nominal_joint_angle: nominal,
            thrust_moment_coeff: 0.02,
            spin_dirs: [1.0, -1.0, -1.0, 1.0],
            drag_lin: Vector3::new(0.3, 0.3, 0.3),
            drag_ang: Vector3::new(0.6, 0.6, 0.13),
            gravity: 9.81,
        }
    }
}

impl RobotParams {
    /// Total mass m_b + 4·m_l [kg].
    pub fn total_mass(&self) -> f64 {
        self.body_mass + 4.0 * self.leg_mass
    }

    /// Per-rotor thrust that balances gravity with all four rotors [N].
    pub fn hover_thrust(&self) -> f64 {
        self.total_mass() * self.gravity / 4.0
    }

    /// Sagittal swing sign: front legs swing forward (+x) as the joint angle grows,
    /// rear legs swing backward.
    pub fn swing_sign(&self, rotor: usize) -> f64 {
        if self.hip_offsets[rotor].x >= 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn nominal_joint_angles(&self) -> nalgebra::Vector4<f64> {
        nalgebra::Vector4::repeat(self.nominal_joint_angle)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::InvalidParameter { field: field.into(), reason: reason.into() })
        };
        if !(self.body_mass > 0.0 && self.body_mass.is_finite()) {
            return bad("m_b", "must be positive");
        }
        if !(self.leg_mass >= 0.0 && self.leg_mass.is_finite()) {
            return bad("m_l", "must be non-negative");
        }
        if (self.inertia - self.inertia.transpose()).abs().max() > 1e-12 {
            return bad("inertia", "must be symmetric");
        }
        let eig = SymmetricEigen::new(self.inertia).eigenvalues;
        if eig.iter().any(|&e| !(e > 0.0)) {
            return bad("inertia", "must be positive definite");
        }
        if !(self.leg_length > 0.0 && self.leg_length.is_finite()) {
            return bad("leg_length", "must be positive");
        }
        if self.spin_dirs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return bad("spin_dirs", "entries must be +1 or -1");
        }
        if self.spin_dirs.iter().sum::<f64>() != 0.0 {
            return bad("spin_dirs", "must sum to zero");
        }
        if self.drag_lin.iter().chain(self.drag_ang.iter()).any(|&d| !(d >= 0.0)) {
            return bad("drag", "coefficients must be non-negative");
        }
        if !(self.gravity > 0.0) {
            return bad("g", "must be positive");
        }
        if self.hip_offsets.iter().flatten().any(|v| !v.is_finite()) {
            return bad("hip_offsets", "must be finite");
        }
        Ok(())
    }
}
