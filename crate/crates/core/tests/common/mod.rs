#![allow(dead_code)]

use std::io::Write;
use std::path::PathBuf;

use nalgebra::{Matrix3, Rotation3, Vector3, Vector4};

use morphnmpc::config::Config;
use morphnmpc::dynamics::{RobotParams, RomState};
use morphnmpc::harness::Scenario;
use morphnmpc::high_fidelity::HfParams;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios")).join(name)
}

pub fn load_scenario(name: &str) -> Scenario {
    Config::load(&scenario_path(name), &[]).unwrap().scenario().unwrap()
}

/// Write straight to the process stderr so the line survives output capture.
pub fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

/// A named pass/fail item with the measured value for the report line.
pub struct Item {
    pub name: String,
    pub detail: String,
    pub ok: bool,
}

pub fn item(name: &str, ok: bool, detail: String) -> Item {
    Item { name: name.into(), detail, ok }
}

/// Print one PASS/FAIL line for the criterion and fail the test if any item failed.
pub fn conclude(label: &str, items: &[Item]) {
    let ok = items.iter().all(|i| i.ok);
    let body: Vec<String> = items.iter().map(|i| format!("{}{} {}", if i.ok { "" } else { "!" }, i.name, i.detail)).collect();
    report(&format!("{} {label}: {}", if ok { "PASS" } else { "FAIL" }, body.join("; ")));
    assert!(ok, "{label} failed: {}", body.join("; "));
}

/// Z-Y-X rotation from (roll, pitch, yaw).
pub fn rotation(att: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::from_euler_angles(att.x, att.y, att.z).into_inner()
}

/// +1 for legs behind the body origin, -1 for legs in front.
fn sigma(p: &RobotParams, k: usize) -> f64 {
    if p.hip_offsets[k].x > 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Body-frame point at `fraction` along leg `k`, and its derivative in the joint angle.
pub fn leg_point(p: &RobotParams, k: usize, q: f64, fraction: f64) -> (Vector3<f64>, Vector3<f64>) {
    let s = sigma(p, k);
    let down = Vector3::new(0.0, 0.0, -1.0);
    let swing = Rotation3::from_axis_angle(&Vector3::y_axis(), s * q);
    let dswing = Rotation3::from_axis_angle(&Vector3::y_axis(), s * q + std::f64::consts::FRAC_PI_2);
    let arm = fraction * p.leg_length;
    (p.hip_offsets[k] + arm * (swing * down), s * arm * (dswing * down))
}

/// Body-frame thrust direction of rotor `k`.
pub fn thrust_direction(p: &RobotParams, k: usize, q: f64) -> Vector3<f64> {
    let tilt = Rotation3::from_axis_angle(&Vector3::y_axis(), sigma(p, k) * (q - p.nominal_joint_angle));
    tilt * Vector3::z()
}

/// Body yaw torque of the given thrusts at the given posture, including reaction moments.
pub fn yaw_torque(p: &RobotParams, joints: &Vector4<f64>, thrusts: &Vector4<f64>) -> f64 {
    (0..4)
        .map(|k| {
            let d = thrust_direction(p, k, joints[k]);
            let r = leg_point(p, k, joints[k], 1.0).0;
            let f = thrusts[k] * d;
            (r.cross(&f) + p.spin_dirs[k] * p.thrust_moment_coeff * f).z
        })
        .sum()
}

/// Kinetic plus potential energy of the multibody plant summed body by body.
pub fn energy(hf: &HfParams, x: &RomState) -> f64 {
    let p = &hf.robot;
    let rot = rotation(&x.attitude);
    let w = x.angular_velocity;
    let mut e = 0.5 * p.body_mass * x.velocity.norm_squared() + 0.5 * w.dot(&(p.inertia * w)) + p.body_mass * p.gravity * x.position.z;
    for k in 0..4 {
        for mp in &hf.mass_points {
            let m = mp.share * p.leg_mass;
            let (r, dr) = leg_point(p, k, x.joints[k], mp.fraction);
            let v = x.velocity + rot * (w.cross(&r) + dr * x.joint_rates[k]);
            e += 0.5 * m * v.norm_squared() + m * p.gravity * (x.position + rot * r).z;
        }
    }
    e
}
