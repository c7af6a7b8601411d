mod common;

use nalgebra::{Vector3, Vector4};
use proptest::prelude::*;

use morphnmpc::dynamics::{net_wrench, rom_dynamics, rotation_matrix, thruster_geometry, ControlInput, RobotParams, RomState};
use morphnmpc::high_fidelity::{hf_dynamics, mass_matrix, total_energy, GenVector, HfParams, HfState};

fn vec3(lo: f64, hi: f64) -> impl Strategy<Value = Vector3<f64>> {
    (lo..hi, lo..hi, lo..hi).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn joints() -> impl Strategy<Value = Vector4<f64>> {
    let q = 0.0..std::f64::consts::FRAC_PI_2;
    (q.clone(), q.clone(), q.clone(), q).prop_map(|(a, b, c, d)| Vector4::new(a, b, c, d))
}

fn state() -> impl Strategy<Value = RomState> {
    (vec3(-3.0, 3.0), vec3(-1.2, 1.2), joints(), vec3(-2.0, 2.0), vec3(-2.0, 2.0), vec3(-1.0, 1.0)).prop_map(|(p, a, q, v, w, qd)| RomState {
        position: p,
        attitude: a,
        joints: q,
        velocity: v,
        angular_velocity: w,
        joint_rates: Vector4::new(qd.x, qd.y, qd.z, -qd.x),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_matches_body_by_body_sum(x in state()) {
        let hf = HfParams::default();
        let lib = total_energy(&HfState::from_rom(&x).unwrap(), &hf);
        let oracle = common::energy(&hf, &x);
        prop_assert!((lib - oracle).abs() < 1e-10 * (1.0 + oracle.abs()), "{lib} vs {oracle}");
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(x in state()) {
        let hf = HfParams::default();
        let q = HfState::from_rom(&x).unwrap().q;
        let m = mass_matrix(&q, &hf).unwrap();
        prop_assert!((m - m.transpose()).amax() < 1e-12);
        prop_assert!(m.cholesky().is_some());
    }

    #[test]
    fn rotation_is_orthonormal(a in vec3(-3.0, 3.0)) {
        let r = rotation_matrix(&a);
        prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).amax() < 1e-14);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-14);
        prop_assert!((r - common::rotation(&a)).amax() < 1e-14);
    }

    #[test]
    fn resting_bodies_fall_at_gravity(p in vec3(-3.0, 3.0), a in vec3(-1.2, 1.2), q in joints()) {
        let hf = HfParams::default();
        let x = RomState { position: p, attitude: a, joints: q, ..RomState::hover(&hf.robot, p) };
        let zero = Vector4::zeros();
        let rom = rom_dynamics(&x, &ControlInput::zero(), &hf.robot).unwrap();
        let plant = hf_dynamics(&HfState::from_rom(&x).unwrap(), &zero, &zero, &hf).unwrap();
        let g = Vector3::new(0.0, 0.0, -hf.robot.gravity);
        prop_assert!((rom.fixed_rows::<3>(10) - g).amax() < 1e-12);
        prop_assert!((plant.fixed_rows::<3>(10) - g).amax() < 1e-10);
        prop_assert!(plant.fixed_rows::<3>(13).amax() < 1e-10);
    }

    #[test]
    fn hover_is_a_fixed_point_anywhere(p in vec3(-10.0, 10.0), yaw in -3.0f64..3.0) {
        let hf = HfParams::default();
        let mut x = RomState::hover(&hf.robot, p);
        x.attitude.z = yaw;
        let u = ControlInput::hover(&hf.robot);
        prop_assert!(rom_dynamics(&x, &u, &hf.robot).unwrap().amax() < 1e-12);
        prop_assert!(rom_dynamics(&x, &u, &hf.reduced_order_params()).unwrap().amax() < 1e-12);
        prop_assert!(hf_dynamics(&HfState::from_rom(&x).unwrap(), &u.thrusts, &u.joint_acc, &hf).unwrap().amax() < 1e-9);
    }

    #[test]
    fn thruster_geometry_matches_oracle(q in joints(), t in vec3(0.0, 25.0), t4 in 0.0f64..25.0) {
        let p = RobotParams::default();
        let thrusts = Vector4::new(t.x, t.y, t.z, t4);
        for (k, rotor) in thruster_geometry(&q, &p).iter().enumerate() {
            prop_assert!((rotor.position - common::leg_point(&p, k, q[k], 1.0).0).amax() < 1e-14);
            prop_assert!((rotor.direction - common::thrust_direction(&p, k, q[k])).amax() < 1e-14);
        }
        let w = net_wrench(&q, &thrusts, &p);
        prop_assert!((w.torque.z - common::yaw_torque(&p, &q, &thrusts)).abs() < 1e-12);
    }

    #[test]
    fn generalized_coordinates_round_trip(x in state()) {
        let back = HfState::from_rom(&x).unwrap().to_rom();
        prop_assert!((back.to_vector() - x.to_vector()).amax() < 1e-12);
    }
}

#[test]
fn nominal_posture_places_rotors_on_a_square() {
    let p = RobotParams::default();
    let rotors = thruster_geometry(&p.nominal_joint_angles(), &p);
    let spacing = (rotors[0].position - rotors[1].position).norm();
    assert!((spacing - 0.45).abs() < 1e-12);
    for r in &rotors {
        assert!((r.direction - Vector3::z()).norm() < 1e-15);
    }
}

#[test]
fn mass_matrix_of_the_origin_posture_carries_total_mass() {
    let hf = HfParams::default();
    let m = mass_matrix(&GenVector::zeros(), &hf).unwrap();
    for i in 0..3 {
        assert!((m[(i, i)] - 6.0).abs() < 1e-12);
    }
}
