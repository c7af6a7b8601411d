use nalgebra::{SVector, Vector3, Vector4};

use super::RobotParams;

pub const STATE_DIM: usize = 20;
pub const INPUT_DIM: usize = 8;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type InputVector = SVector<f64, INPUT_DIM>;

/// Reduced-order state. Flattened layout:
/// `[p(0..3), θ(3..6), q_a(6..10), v(10..13), ω(13..16), q̇_a(16..20)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RomState {
    /// Body position, world frame [m].
    pub position: Vector3<f64>,
    /// (roll, pitch, yaw) [rad].
    pub attitude: Vector3<f64>,
    /// Hip sagittal joint angles [rad].
    pub joints: Vector4<f64>,
    /// Linear velocity, world frame [m/s].
    pub velocity: Vector3<f64>,
    /// Angular velocity, body frame [rad/s].
    pub angular_velocity: Vector3<f64>,
    pub joint_rates: Vector4<f64>,
}

pub mod idx {
    pub const POS: usize = 0;
    pub const ATT: usize = 3;
    pub const ROLL: usize = 3;
    pub const PITCH: usize = 4;
    pub const YAW: usize = 5;
    pub const JOINT: usize = 6;
    pub const VEL: usize = 10;
    pub const OMEGA: usize = 13;
    pub const YAW_RATE: usize = 15;
    pub const JOINT_RATE: usize = 16;
}

impl RomState {
    /// At rest at `position`, level, legs at the nominal posture.
    pub fn hover(params: &RobotParams, position: Vector3<f64>) -> Self {
        Self {
            position,
            attitude: Vector3::zeros(),
            joints: params.nominal_joint_angles(),
            velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            joint_rates: Vector4::zeros(),
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(idx::POS).copy_from(&self.position);
        x.fixed_rows_mut::<3>(idx::ATT).copy_from(&self.attitude);
        x.fixed_rows_mut::<4>(idx::JOINT).copy_from(&self.joints);
        x.fixed_rows_mut::<3>(idx::VEL).copy_from(&self.velocity);
        x.fixed_rows_mut::<3>(idx::OMEGA).copy_from(&self.angular_velocity);
        x.fixed_rows_mut::<4>(idx::JOINT_RATE).copy_from(&self.joint_rates);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            position: x.fixed_rows::<3>(idx::POS).into(),
            attitude: x.fixed_rows::<3>(idx::ATT).into(),
            joints: x.fixed_rows::<4>(idx::JOINT).into(),
            velocity: x.fixed_rows::<3>(idx::VEL).into(),
            angular_velocity: x.fixed_rows::<3>(idx::OMEGA).into(),
            joint_rates: x.fixed_rows::<4>(idx::JOINT_RATE).into(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Thrust forces [N] and hip sagittal joint accelerations [rad/s²].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub thrusts: Vector4<f64>,
    pub joint_acc: Vector4<f64>,
}

impl ControlInput {
    pub fn new(thrusts: Vector4<f64>, joint_acc: Vector4<f64>) -> Self {
        Self { thrusts, joint_acc }
    }

    pub fn zero() -> Self {
        Self::new(Vector4::zeros(), Vector4::zeros())
    }

    pub fn hover(params: &RobotParams) -> Self {
        Self::new(Vector4::repeat(params.hover_thrust()), Vector4::zeros())
    }

    pub fn to_vector(&self) -> InputVector {
        let mut u = InputVector::zeros();
        u.fixed_rows_mut::<4>(0).copy_from(&self.thrusts);
        u.fixed_rows_mut::<4>(4).copy_from(&self.joint_acc);
        u
    }

    pub fn from_vector(u: &InputVector) -> Self {
        Self::new(u.fixed_rows::<4>(0).into(), u.fixed_rows::<4>(4).into())
    }
}
