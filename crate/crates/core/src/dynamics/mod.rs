//! Reduced-order flight model: one rigid body carrying four posture-dependent
//! thrusters. Leg masses only enter through the total mass.

mod kinematics;
mod params;
mod state;
mod wrench;

pub use kinematics::{body_rate_matrix, euler_rate_matrix, rotation_matrix, skew, wrap_angle, GIMBAL_EPS};
pub use params::{RobotParams, NOMINAL_ROTOR_SPACING};
pub use state::{idx, ControlInput, InputVector, RomState, StateVector, INPUT_DIM, STATE_DIM};
pub use wrench::{drag_wrench, net_wrench, thruster_geometry, Rotor, Wrench};

pub(crate) use wrench::{leg_axis, thrust_axis};

use nalgebra::Vector3;

use crate::{Error, Result};

/// Time derivative of the reduced-order state.
pub fn rom_dynamics(x: &RomState, u: &ControlInput, params: &RobotParams) -> Result<StateVector> {
    let rate = euler_rate_matrix(&x.attitude)?;
    let rot = rotation_matrix(&x.attitude);
    let thrust = net_wrench(&x.joints, &u.thrusts, params);
    let drag = drag_wrench(&x.velocity, &x.angular_velocity, params);
    let m = params.total_mass();
    let w = x.angular_velocity;

    let accel = (rot * thrust.force + drag.force) / m - Vector3::new(0.0, 0.0, params.gravity);
    let inertia_inv = params
        .inertia
        .try_inverse()
        .ok_or(Error::InvalidParameter { field: "inertia".into(), reason: "singular".into() })?;
    let ang_accel = inertia_inv * (thrust.torque + drag.torque - w.cross(&(params.inertia * w)));

    let xdot = RomState {
        position: x.velocity,
        attitude: rate * w,
        joints: x.joint_rates,
        velocity: accel,
        angular_velocity: ang_accel,
        joint_rates: u.joint_acc,
    }
    .to_vector();
    if xdot.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "rom_dynamics" });
    }
    Ok(xdot)
}

/// [`rom_dynamics`] on flattened vectors.
pub fn rom_dynamics_vec(x: &StateVector, u: &InputVector, params: &RobotParams) -> Result<StateVector> {
    rom_dynamics(&RomState::from_vector(x), &ControlInput::from_vector(u), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::rk4_step;
    use nalgebra::{Matrix3, Vector4};

    #[test]
    fn hover_is_fixed_point() {
        let p = RobotParams::default();
        let x = RomState::hover(&p, Vector3::new(1.0, -2.0, 3.0));
        let xdot = rom_dynamics(&x, &ControlInput::hover(&p), &p).unwrap();
        assert!(xdot.norm() < 1e-12, "{xdot}");
        assert!(xdot.fixed_rows::<6>(idx::VEL).norm() < 1e-12);
    }

    #[test]
    fn free_fall_without_drag() {
        let p = RobotParams { drag_lin: Vector3::zeros(), drag_ang: Vector3::zeros(), ..Default::default() };
        let mut x = RomState::hover(&p, Vector3::zeros());
        x.velocity = Vector3::new(1.0, 2.0, -3.0);
        let xdot = rom_dynamics(&x, &ControlInput::zero(), &p).unwrap();
        assert_eq!(xdot.fixed_rows::<3>(idx::VEL).clone_owned(), Vector3::new(0.0, 0.0, -9.81));
    }

    #[test]
    fn principal_axis_spin_has_no_gyroscopic_torque() {
        let p = RobotParams { drag_ang: Vector3::zeros(), ..Default::default() };
        let mut x = RomState::hover(&p, Vector3::zeros());
        x.angular_velocity = Vector3::new(0.0, 0.0, 1.0);
        let xdot = rom_dynamics(&x, &ControlInput::zero(), &p).unwrap();
        assert_eq!(xdot.fixed_rows::<3>(idx::OMEGA).norm(), 0.0);
    }

    #[test]
    fn joint_acceleration_passes_through() {
        let p = RobotParams::default();
        let x = RomState::hover(&p, Vector3::zeros());
        let u = ControlInput::new(Vector4::repeat(p.hover_thrust()), Vector4::new(1.0, -2.0, 3.0, -4.0));
        let xdot = rom_dynamics(&x, &u, &p).unwrap();
        assert_eq!(xdot.fixed_rows::<4>(idx::JOINT_RATE).clone_owned(), u.joint_acc);
    }

    #[test]
    fn gimbal_lock_propagates() {
        let p = RobotParams::default();
        let mut x = RomState::hover(&p, Vector3::zeros());
        x.attitude.y = std::f64::consts::FRAC_PI_2;
        assert!(matches!(rom_dynamics(&x, &ControlInput::zero(), &p), Err(Error::GimbalLock { .. })));
    }

    #[test]
    fn steady_yaw_rate_balances_drag() {
        // ω̇_z = (N − d·ω_z)/I_zz has fixed point N/d.
        let p = RobotParams::default();
        let mut x = RomState::hover(&p, Vector3::zeros());
        let n = 0.4;
        let w_star = n / p.drag_ang.z;
        x.angular_velocity.z = w_star;
        // Yaw moment from spin reaction alone: raise the +1 rotors, lower the −1 rotors.
        let dt = n / (4.0 * p.thrust_moment_coeff);
        let th = p.hover_thrust();
        let u = ControlInput::new(Vector4::new(th + dt, th - dt, th - dt, th + dt), Vector4::zeros());
        let xdot = rom_dynamics(&x, &u, &p).unwrap();
        assert!(xdot[idx::YAW_RATE].abs() < 1e-12);
    }

    #[test]
    fn yaw_rotation_invariance_with_isotropic_horizontal_drag() {
        let p = RobotParams::default();
        assert_eq!(p.drag_lin.x, p.drag_lin.y);
        let x = RomState {
            position: Vector3::new(0.3, 0.1, 2.0),
            attitude: Vector3::new(0.2, -0.1, 0.4),
            joints: Vector4::new(0.6, 0.9, 0.7, 0.8),
            velocity: Vector3::new(1.0, -0.5, 0.2),
            angular_velocity: Vector3::new(0.3, 0.2, -0.4),
            joint_rates: Vector4::new(0.1, 0.0, -0.2, 0.3),
        };
        let u = ControlInput::new(Vector4::new(12.0, 15.0, 14.0, 16.0), Vector4::new(1.0, 0.0, -1.0, 2.0));
        let psi = 1.1;
        let rz = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), psi);
        let mut xr = x;
        xr.attitude.z += psi;
        xr.velocity = rz * x.velocity;
        let a = RomState::from_vector(&rom_dynamics(&x, &u, &p).unwrap());
        let b = RomState::from_vector(&rom_dynamics(&xr, &u, &p).unwrap());
        assert!((rz * a.velocity - b.velocity).norm() < 1e-12);
        assert!((a.angular_velocity - b.angular_velocity).norm() < 1e-12);
        assert!((a.attitude - b.attitude).norm() < 1e-12);
    }

    #[test]
    fn rotational_energy_conserved_under_gyroscopic_motion() {
        let p = RobotParams {
            drag_lin: Vector3::zeros(),
            drag_ang: Vector3::zeros(),
            inertia: Matrix3::new(0.08, 0.01, 0.0, 0.01, 0.13, 0.02, 0.0, 0.02, 0.15),
            ..Default::default()
        };
        let mut x = RomState::hover(&p, Vector3::zeros());
        x.angular_velocity = Vector3::new(1.5, -2.0, 3.0);
        let energy = |s: &StateVector| {
            let w: Vector3<f64> = s.fixed_rows::<3>(idx::OMEGA).into();
            0.5 * w.dot(&(p.inertia * w))
        };
        let e0 = energy(&x.to_vector());
        let u = ControlInput::zero();
        let h = 1e-5;
        // Only the rotational block matters; keep attitude away from gimbal lock by
        // integrating ω alone.
        let mut w = x.to_vector();
        for _ in 0..100_000 {
            w = rk4_step(
                |s| {
                    let mut st = RomState::from_vector(s);
                    st.attitude = Vector3::zeros();
                    let mut d = rom_dynamics(&st, &u, &p)?;
                    d.fixed_rows_mut::<6>(0).fill(0.0);
                    d.fixed_rows_mut::<3>(idx::VEL).fill(0.0);
                    Ok(d)
                },
                &w,
                h,
            )
            .unwrap();
        }
        assert!(((energy(&w) - e0) / e0).abs() < 1e-8);
    }
}
