//! Receding-horizon controller over the reduced-order model.
//!
//! Each control period the controller minimizes
//! `Σ_j (x_j − r_j)ᵀQ(x_j − r_j) + Σ_j (u_j − ū)ᵀR(u_j − ū)` over N_h inputs,
//! with hard box bounds on the inputs (enforced by projection) and quadratic
//! penalties on roll/pitch, joint range and the per-side joint sum.

mod cost;
mod solver;

pub use cost::{cost_gradient, rollout, total_cost, CostModel};
pub use solver::{solve, update_detected_bounds, Controller, Diagnostics, SolveStatus, Solution};

use std::hash::{Hash, Hasher};

use nalgebra::Vector4;

use crate::dynamics::{idx, InputVector, RobotParams, StateVector, INPUT_DIM};
use crate::{Error, Result};

const DEG: f64 = std::f64::consts::PI / 180.0;

/// Named diagonal entries of Q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateWeights {
    pub position_xy: f64,
    pub position_z: f64,
    pub velocity_xy: f64,
    pub velocity_z: f64,
    pub roll_pitch: f64,
    pub yaw: f64,
    pub roll_pitch_rate: f64,
    pub yaw_rate: f64,
    pub joint: f64,
    pub joint_rate: f64,
}

impl Default for StateWeights {
    fn default() -> Self {
        Self {
            position_xy: 8.0,
            position_z: 20.0,
            velocity_xy: 3.0,
            velocity_z: 20.0,
            roll_pitch: 50.0,
            yaw: 0.0,
            roll_pitch_rate: 3.0,
            yaw_rate: 0.0,
            joint: 0.5,
            joint_rate: 0.1,
        }
    }
}

impl StateWeights {
    pub fn diagonal(&self) -> StateVector {
        let mut q = StateVector::zeros();
        q.fixed_rows_mut::<2>(idx::POS).fill(self.position_xy);
        q[idx::POS + 2] = self.position_z;
        q[idx::ROLL] = self.roll_pitch;
        q[idx::PITCH] = self.roll_pitch;
        q[idx::YAW] = self.yaw;
        q.fixed_rows_mut::<4>(idx::JOINT).fill(self.joint);
        q.fixed_rows_mut::<2>(idx::VEL).fill(self.velocity_xy);
        q[idx::VEL + 2] = self.velocity_z;
        q[idx::OMEGA] = self.roll_pitch_rate;
        q[idx::OMEGA + 1] = self.roll_pitch_rate;
        q[idx::YAW_RATE] = self.yaw_rate;
        q.fixed_rows_mut::<4>(idx::JOINT_RATE).fill(self.joint_rate);
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputWeights {
    pub thrust: f64,
    pub joint_acc: f64,
}

impl Default for InputWeights {
    fn default() -> Self {
        Self { thrust: 1e-3, joint_acc: 1e-2 }
    }
}

impl InputWeights {
    pub fn diagonal(&self) -> InputVector {
        let mut r = InputVector::zeros();
        r.fixed_rows_mut::<4>(0).fill(self.thrust);
        r.fixed_rows_mut::<4>(4).fill(self.joint_acc);
        r
    }
}

/// Hard input box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBounds {
    pub thrust_min: Vector4<f64>,
    pub thrust_max: Vector4<f64>,
    pub joint_acc_min: Vector4<f64>,
    pub joint_acc_max: Vector4<f64>,
}

impl Default for InputBounds {
    fn default() -> Self {
        Self {
            thrust_min: Vector4::zeros(),
            thrust_max: Vector4::repeat(30.0),
            joint_acc_min: Vector4::repeat(-50.0),
            joint_acc_max: Vector4::repeat(50.0),
        }
    }
}

impl InputBounds {
    pub fn lower(&self) -> InputVector {
        let mut v = InputVector::zeros();
        v.fixed_rows_mut::<4>(0).copy_from(&self.thrust_min);
        v.fixed_rows_mut::<4>(4).copy_from(&self.joint_acc_min);
        v
    }

    pub fn upper(&self) -> InputVector {
        let mut v = InputVector::zeros();
        v.fixed_rows_mut::<4>(0).copy_from(&self.thrust_max);
        v.fixed_rows_mut::<4>(4).copy_from(&self.joint_acc_max);
        v
    }

    pub fn project(&self, u: &InputVector) -> InputVector {
        let (lo, hi) = (self.lower(), self.upper());
        InputVector::from_fn(|i, _| u[i].clamp(lo[i], hi[i]))
    }

    pub fn contains(&self, u: &InputVector) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        (0..INPUT_DIM).all(|i| u[i] >= lo[i] && u[i] <= hi[i])
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower().iter().zip(self.upper().iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidParameter { field: "nmpc.bounds".into(), reason: "min must not exceed max".into() });
        }
        Ok(())
    }
}

/// Soft state limits. Yaw is left free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBounds {
    pub roll_pitch_max: f64,
    pub joint_min: f64,
    pub joint_max: f64,
    /// Ceiling on the sum of the two joint angles on each side of the body.
    pub side_sum_max: f64,
}

impl Default for StateBounds {
    fn default() -> Self {
        Self { roll_pitch_max: 90.0 * DEG, joint_min: 0.0, joint_max: 90.0 * DEG, side_sum_max: 110.0 * DEG }
    }
}

impl StateBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.roll_pitch_max > 0.0 && self.joint_min < self.joint_max && self.side_sum_max > 0.0) {
            return Err(Error::InvalidParameter { field: "nmpc.state_bounds".into(), reason: "ranges must be nonempty".into() });
        }
        Ok(())
    }
}

/// Input the R term is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputReference {
    /// m_net·g/4 per rotor, zero joint acceleration.
    #[default]
    Hover,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Diagonal of Q.
    pub q_diag: StateVector,
    /// Diagonal of R.
    pub r_diag: InputVector,
    pub input_reference: InputReference,
    pub input_bounds: InputBounds,
    pub state_bounds: StateBounds,
    pub penalty_weight: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Solver variable scale for joint accelerations relative to thrust.
    pub accel_scale: f64,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            dt: 0.1,
            q_diag: StateWeights::default().diagonal(),
            r_diag: InputWeights::default().diagonal(),
            input_reference: InputReference::Hover,
            input_bounds: InputBounds::default(),
            state_bounds: StateBounds::default(),
            penalty_weight: 1e3,
            max_iters: 60,
            grad_tol: 1e-6,
            accel_scale: 10.0,
        }
    }
}

impl NmpcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::InvalidParameter { field: format!("nmpc.{field}"), reason: reason.into() });
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1");
        }
        if !(self.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if self.q_diag.iter().any(|&w| !(w >= 0.0)) {
            return bad("weights", "Q entries must be non-negative");
        }
        if self.r_diag.iter().any(|&w| !(w >= 0.0)) || self.r_diag.fixed_rows::<4>(0).iter().any(|&w| w <= 0.0) {
            return bad("weights", "R entries must be non-negative and thrust entries positive");
        }
        if !(self.penalty_weight >= 0.0) || !(self.grad_tol > 0.0) || !(self.accel_scale > 0.0) {
            return bad("solver", "penalty_weight, grad_tol and accel_scale must be positive");
        }
        self.input_bounds.validate()?;
        self.state_bounds.validate()
    }

    pub fn input_reference_vector(&self, params: &RobotParams) -> InputVector {
        match self.input_reference {
            InputReference::Hover => crate::dynamics::ControlInput::hover(params).to_vector(),
            InputReference::Zero => InputVector::zeros(),
        }
    }

    /// Stable digest of every field; equal configurations hash equal.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let mut put = |v: f64| v.to_bits().hash(&mut h);
        put(self.horizon as f64);
        put(self.dt);
        self.q_diag.iter().for_each(|&v| put(v));
        self.r_diag.iter().for_each(|&v| put(v));
        put(match self.input_reference {
            InputReference::Hover => 0.0,
            InputReference::Zero => 1.0,
        });
        let b = &self.input_bounds;
        b.lower().iter().chain(b.upper().iter()).for_each(|&v| put(v));
        let s = &self.state_bounds;
        [s.roll_pitch_max, s.joint_min, s.joint_max, s.side_sum_max].into_iter().for_each(&mut put);
        put(self.penalty_weight);
        put(self.max_iters as f64);
        put(self.grad_tol);
        put(self.accel_scale);
        h.finish()
    }
}

/// Target states `r_0..r_N` over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub states: Vec<StateVector>,
}

impl Reference {
    pub fn constant(x: StateVector, horizon: usize) -> Self {
        Self { states: vec![x; horizon + 1] }
    }
}
