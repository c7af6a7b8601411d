//! Fault-tolerant flight control for a morphing quadrotor.
//!
//! The crate couples two flight models of a four-legged robot whose legs carry
//! the thrusters:
//!
//! - [`dynamics`]: a reduced-order model (single rigid body, posture-dependent
//!   thruster wrench) used as the prediction model of the controller;
//! - [`high_fidelity`]: an Euler–Lagrange multibody plant with lumped leg
//!   masses, used as the simulated vehicle.
//!
//! [`nmpc`] solves a short-horizon tracking problem over the reduced model,
//! using both thrust and hip sagittal joint accelerations as inputs, so a
//! single controller flies the vehicle before and after a rotor loses
//! effectiveness. [`faults`] injects the loss on the plant side and
//! [`harness`] runs closed-loop scenarios and computes metrics.
//!
//! ```
//! use morphnmpc::dynamics::{rom_dynamics, ControlInput, RobotParams, RomState};
//!
//! let params = RobotParams::default();
//! let x = RomState::hover(&params, nalgebra::Vector3::new(0.0, 0.0, 2.0));
//! let u = ControlInput::hover(&params);
//! let xdot = rom_dynamics(&x, &u, &params).unwrap();
//! assert!(xdot.norm() < 1e-12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
mod error;
pub mod faults;
pub mod harness;
pub mod high_fidelity;
pub mod integrator;
pub mod nmpc;
pub mod selftest;

pub use error::{Error, Result};
