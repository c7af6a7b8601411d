//! Posture-dependent thruster placement and the resulting body wrench.
//!
//! Each leg swings about the body y axis. A leg at joint angle q points along
//! `R_y(σq)·(−ẑ)` (σ = −1 front, +1 rear), so q = 0 hangs the leg straight down
//! and q = 90° lays it horizontal, fully extended fore or aft. The thrust axis
//! is rigidly attached to the leg and coincides with body +z at the nominal
//! joint angle; moving a leg by δ from nominal tilts its thrust by δ in the
//! x-z plane.

use nalgebra::{Vector3, Vector4};

use super::RobotParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotor {
    /// Thrust application point, body frame [m].
    pub position: Vector3<f64>,
    /// Unit thrust axis, body frame.
    pub direction: Vector3<f64>,
}

/// Force and torque pair. Frames are stated by the producing function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Self { force: Vector3::zeros(), torque: Vector3::zeros() }
    }
}

/// Unit vector along leg `k` from hip to thruster, and its derivative in q.
pub(crate) fn leg_axis(params: &RobotParams, k: usize, q: f64) -> (Vector3<f64>, Vector3<f64>) {
    let s = params.swing_sign(k);
    let (sq, cq) = q.sin_cos();
    (Vector3::new(-s * sq, 0.0, -cq), Vector3::new(-s * cq, 0.0, sq))
}

/// Thrust axis of rotor `k` and its derivative in q.
pub(crate) fn thrust_axis(params: &RobotParams, k: usize, q: f64) -> (Vector3<f64>, Vector3<f64>) {
    let s = params.swing_sign(k);
    let (sa, ca) = (s * (q - params.nominal_joint_angle)).sin_cos();
    (Vector3::new(sa, 0.0, ca), Vector3::new(s * ca, 0.0, -s * sa))
}

pub fn thruster_geometry(joints: &Vector4<f64>, params: &RobotParams) -> [Rotor; 4] {
    std::array::from_fn(|k| Rotor {
        position: params.hip_offsets[k] + params.leg_length * leg_axis(params, k, joints[k]).0,
        direction: thrust_axis(params, k, joints[k]).0,
    })
}

/// Thruster wrench with force and torque both in the body frame, torque about
/// the body origin. Includes each rotor's reaction moment
/// `spin_k · c_m · T_k` along its own thrust axis.
pub fn net_wrench(joints: &Vector4<f64>, thrusts: &Vector4<f64>, params: &RobotParams) -> Wrench {
    let rotors = thruster_geometry(joints, params);
    let mut w = Wrench::zero();
    for (k, rotor) in rotors.iter().enumerate() {
        let f = thrusts[k] * rotor.direction;
        w.force += f;
        w.torque += rotor.position.cross(&f) + params.spin_dirs[k] * params.thrust_moment_coeff * f;
    }
    w
}

/// Viscous drag: force in the world frame, torque in the body frame.
pub fn drag_wrench(velocity: &Vector3<f64>, angular_velocity: &Vector3<f64>, params: &RobotParams) -> Wrench {
    Wrench {
        force: -params.drag_lin.component_mul(velocity),
        torque: -params.drag_ang.component_mul(angular_velocity),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn p() -> RobotParams {
        RobotParams::default()
    }

    #[test]
    fn nominal_posture_points_up_with_045_spacing() {
        let params = p();
        let r = thruster_geometry(&params.nominal_joint_angles(), &params);
        for rotor in &r {
            assert!((rotor.direction - Vector3::z()).norm() < 1e-15);
        }
        // FL-FR share x, FL-RL share y.
        assert!(((r[0].position - r[2].position).x - 0.45).abs() < 1e-12);
        assert!(((r[1].position - r[3].position).x - 0.45).abs() < 1e-12);
        assert!(((r[0].position - r[1].position).y - 0.45).abs() < 1e-12);
        assert!(((r[2].position - r[3].position).y - 0.45).abs() < 1e-12);
    }

    #[test]
    fn perturbing_one_leg_only_moves_that_rotor() {
        let params = p();
        let q0 = params.nominal_joint_angles();
        let base = thruster_geometry(&q0, &params);
        let delta = 0.2;
        for k in 0..4 {
            let mut q = q0;
            q[k] += delta;
            let moved = thruster_geometry(&q, &params);
            for j in 0..4 {
                if j == k {
                    assert!((moved[j].direction.x.abs() - delta.sin()).abs() < 1e-15);
                    assert!((moved[j].direction.z - delta.cos()).abs() < 1e-15);
                    assert!((moved[j].position - base[j].position).norm() > 1e-3);
                } else {
                    assert_eq!(moved[j], base[j]);
                }
            }
        }
    }

    #[test]
    fn fully_extended_legs_are_horizontal() {
        let params = p();
        let q = Vector4::repeat(FRAC_PI_2);
        let r = thruster_geometry(&q, &params);
        let tilt = FRAC_PI_2 - params.nominal_joint_angle;
        for (k, rotor) in r.iter().enumerate() {
            let hip = params.hip_offsets[k];
            // leg horizontal, outward along x
            assert!((rotor.position.z - hip.z).abs() < 1e-15);
            assert!(((rotor.position.x - hip.x) - hip.x.signum() * params.leg_length).abs() < 1e-15);
            // R_y(σ·tilt)·ẑ with σ = −sign(hip.x)
            let s = -hip.x.signum();
            let expect = Vector3::new((s * tilt).sin(), 0.0, (s * tilt).cos());
            assert!((rotor.direction - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn symmetric_equal_thrust_gives_pure_lift() {
        let params = p();
        let w = net_wrench(&params.nominal_joint_angles(), &Vector4::repeat(10.0), &params);
        assert!((w.force - Vector3::new(0.0, 0.0, 40.0)).norm() < 1e-12);
        assert!(w.torque.norm() < 1e-12);
    }

    #[test]
    fn zero_thrust_zero_wrench() {
        let params = p();
        let w = net_wrench(&Vector4::new(0.1, 0.5, 1.0, 1.4), &Vector4::zeros(), &params);
        assert_eq!(w, Wrench::zero());
    }

    #[test]
    fn rotor4_out_matches_cross_product_sum() {
        let params = p();
        let th = params.hover_thrust();
        let w = net_wrench(&params.nominal_joint_angles(), &Vector4::new(th, th, th, 0.0), &params);
        // Independent sum: upright thrusts at (±a, ±b, z0).
        let a = 0.225;
        let b = 0.225;
        let z0 = -params.leg_length * params.nominal_joint_angle.cos();
        let pos = [(a, b), (a, -b), (-a, b)];
        let mut tau = Vector3::zeros();
        let mut yaw = 0.0;
        for (k, (x, y)) in pos.iter().enumerate() {
            tau += Vector3::new(*x, *y, z0).cross(&Vector3::new(0.0, 0.0, th));
            yaw += params.spin_dirs[k] * params.thrust_moment_coeff * th;
        }
        assert!((w.torque.x - tau.x).abs() < 1e-12);
        assert!((w.torque.y - tau.y).abs() < 1e-12);
        assert!((w.torque.z - yaw).abs() < 1e-12);
        // Rotor 4 is rear-right: that corner drops, so right side down (+x) and nose up (−y).
        assert!(w.torque.x > 0.0, "roll torque {}", w.torque.x);
        assert!(w.torque.y < 0.0, "pitch torque {}", w.torque.y);
        assert!((w.torque.z + params.spin_dirs[3] * params.thrust_moment_coeff * th).abs() < 1e-12);
    }

    #[test]
    fn drag_is_dissipative() {
        let params = p();
        assert_eq!(drag_wrench(&Vector3::zeros(), &Vector3::zeros(), &params), Wrench::zero());
        let w = Vector3::new(0.0, 0.0, 3.0);
        let d = drag_wrench(&Vector3::zeros(), &w, &params);
        assert!((w.dot(&d.torque) + params.drag_ang.z * 9.0).abs() < 1e-12);
        assert!(w.dot(&d.torque) < 0.0);
    }

    proptest! {
        #[test]
        fn wrench_is_linear_in_thrust(
            q in proptest::array::uniform4(0.0f64..1.6),
            t1 in proptest::array::uniform4(0.0f64..30.0),
            t2 in proptest::array::uniform4(0.0f64..30.0),
            a in 0.0f64..3.0,
            b in 0.0f64..3.0,
        ) {
            let params = p();
            let q = Vector4::from(q);
            let (t1, t2) = (Vector4::from(t1), Vector4::from(t2));
            let lhs = net_wrench(&q, &(a * t1 + b * t2), &params);
            let w1 = net_wrench(&q, &t1, &params);
            let w2 = net_wrench(&q, &t2, &params);
            let scale = 1.0 + lhs.force.norm() + lhs.torque.norm();
            prop_assert!((lhs.force - (a * w1.force + b * w2.force)).norm() < 1e-13 * scale);
            prop_assert!((lhs.torque - (a * w1.torque + b * w2.torque)).norm() < 1e-13 * scale);
        }
    }
}
