//! Euler–Lagrange multibody plant: a rigid main body plus three point masses
//! per leg, generalized coordinates `q = [p(3), θ(3), q_a(4)]`.
//!
//! The hip joints are servo-driven: the plant realizes commanded joint
//! accelerations exactly and solves only the six floating-base rows of
//! `M q̈ + C q̇ + g = B u + Q_drag`. Joint torques follow by inverse dynamics.

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen, Vector3, Vector4};

use crate::dynamics::{
    body_rate_matrix, euler_rate_matrix, leg_axis, rotation_matrix, skew, thrust_axis, RobotParams, RomState,
    StateVector,
};
use crate::{Error, Result};

pub const NQ: usize = 10;
pub type GenVector = SVector<f64, NQ>;
pub type MassMatrix = SMatrix<f64, NQ, NQ>;
pub type PointJacobian = SMatrix<f64, 3, NQ>;
pub type InputMatrix = SMatrix<f64, NQ, 8>;

/// Step used to difference the mass matrix for Christoffel symbols.
const MASS_FD_STEP: f64 = 1e-6;
/// Largest admissible condition number of the floating-base mass block.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassPoint {
    /// Position along the leg as a fraction of `leg_length`.
    pub fraction: f64,
    /// Share of the leg mass.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HfParams {
    pub robot: RobotParams,
    pub mass_points: [MassPoint; 3],
}

impl Default for HfParams {
    fn default() -> Self {
        Self::from_robot(RobotParams::default())
    }
}

impl HfParams {
    /// Equal thirds of the leg mass at 0.3, 0.6 and 1.0 of the leg length.
    pub fn from_robot(robot: RobotParams) -> Self {
        let third = 1.0 / 3.0;
        Self {
            robot,
            mass_points: [
                MassPoint { fraction: 0.3, share: third },
                MassPoint { fraction: 0.6, share: third },
                MassPoint { fraction: 1.0, share: third },
            ],
        }
    }

    /// Body inertia plus the leg mass points at the nominal posture, about the
    /// body origin [kg·m²].
    pub fn composite_inertia(&self) -> Matrix3<f64> {
        let robot = &self.robot;
        let mut inertia = robot.inertia;
        for k in 0..4 {
            let (axis, _) = leg_axis(robot, k, robot.nominal_joint_angle);
            for mp in &self.mass_points {
                let r = robot.hip_offsets[k] + mp.fraction * robot.leg_length * axis;
                inertia += mp.share * robot.leg_mass * (Matrix3::identity() * r.norm_squared() - r * r.transpose());
            }
        }
        inertia
    }

    /// Parameters for the reduced-order model: identical to `robot` except
    /// that the inertia is [`Self::composite_inertia`].
    pub fn reduced_order_params(&self) -> RobotParams {
        RobotParams { inertia: self.composite_inertia(), ..self.robot.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        let total: f64 = self.mass_points.iter().map(|m| m.share).sum();
        if (total - 1.0).abs() > 1e-9 || self.mass_points.iter().any(|m| m.share < 0.0) {
            return Err(Error::InvalidParameter {
                field: "leg_mass_points".into(),
                reason: format!("shares must be non-negative and sum to 1, got {total}"),
            });
        }
        if self.mass_points.iter().any(|m| !(0.0..=1.0).contains(&m.fraction)) {
            return Err(Error::InvalidParameter {
                field: "leg_mass_points".into(),
                reason: "fractions must lie in [0, 1]".into(),
            });
        }
        Ok(())
    }
}

/// Generalized state `(q, q̇)` with `q̇ = (ṗ, θ̇, q̇_a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HfState {
    pub q: GenVector,
    pub qd: GenVector,
}

impl HfState {
    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<NQ>(0).copy_from(&self.q);
        x.fixed_rows_mut::<NQ>(NQ).copy_from(&self.qd);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self { q: x.fixed_rows::<NQ>(0).into(), qd: x.fixed_rows::<NQ>(NQ).into() }
    }

    pub fn from_rom(x: &RomState) -> Result<Self> {
        let rate = euler_rate_matrix(&x.attitude)?;
        let mut q = GenVector::zeros();
        let mut qd = GenVector::zeros();
        q.fixed_rows_mut::<3>(0).copy_from(&x.position);
        q.fixed_rows_mut::<3>(3).copy_from(&x.attitude);
        q.fixed_rows_mut::<4>(6).copy_from(&x.joints);
        qd.fixed_rows_mut::<3>(0).copy_from(&x.velocity);
        qd.fixed_rows_mut::<3>(3).copy_from(&(rate * x.angular_velocity));
        qd.fixed_rows_mut::<4>(6).copy_from(&x.joint_rates);
        Ok(Self { q, qd })
    }

    pub fn to_rom(&self) -> RomState {
        let attitude: Vector3<f64> = self.q.fixed_rows::<3>(3).into();
        let euler_rates: Vector3<f64> = self.qd.fixed_rows::<3>(3).into();
        RomState {
            position: self.q.fixed_rows::<3>(0).into(),
            attitude,
            joints: self.q.fixed_rows::<4>(6).into(),
            velocity: self.qd.fixed_rows::<3>(0).into(),
            angular_velocity: body_rate_matrix(&attitude) * euler_rates,
            joint_rates: self.qd.fixed_rows::<4>(6).into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PointKinematics {
    pub mass: f64,
    /// World position [m].
    pub position: Vector3<f64>,
    /// ∂position/∂q.
    pub jacobian: PointJacobian,
}

#[derive(Debug, Clone)]
pub struct Kinematics {
    pub rotation: Matrix3<f64>,
    /// Maps q̇ to the body-frame angular velocity.
    pub body_angular_jacobian: PointJacobian,
    /// Leg mass points, three per leg in leg order.
    pub points: [PointKinematics; 12],
    /// Thrust application points (mass field is zero).
    pub rotors: [PointKinematics; 4],
}

fn attitude(q: &GenVector) -> Vector3<f64> {
    q.fixed_rows::<3>(3).into()
}

/// World position and Jacobian of a point fixed at `fraction` along leg `k`.
fn leg_point(q: &GenVector, rot: &Matrix3<f64>, rate: &Matrix3<f64>, params: &RobotParams, k: usize, fraction: f64, mass: f64) -> PointKinematics {
    let (axis, daxis) = leg_axis(params, k, q[6 + k]);
    let r = params.hip_offsets[k] + fraction * params.leg_length * axis;
    let position = Vector3::new(q[0], q[1], q[2]) + rot * r;
    let mut jacobian = PointJacobian::zeros();
    jacobian.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    jacobian.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-rot * skew(&r) * rate));
    jacobian.set_column(6 + k, &(rot * (fraction * params.leg_length * daxis)));
    PointKinematics { mass, position, jacobian }
}

pub fn point_kinematics(q: &GenVector, params: &HfParams) -> Kinematics {
    let robot = &params.robot;
    let th = attitude(q);
    let rot = rotation_matrix(&th);
    let rate = body_rate_matrix(&th);
    let mut body_angular_jacobian = PointJacobian::zeros();
    body_angular_jacobian.fixed_view_mut::<3, 3>(0, 3).copy_from(&rate);
    let points = std::array::from_fn(|i| {
        let (k, mp) = (i / 3, params.mass_points[i % 3]);
        leg_point(q, &rot, &rate, robot, k, mp.fraction, mp.share * robot.leg_mass)
    });
    let rotors = std::array::from_fn(|k| leg_point(q, &rot, &rate, robot, k, 1.0, 0.0));
    Kinematics { rotation: rot, body_angular_jacobian, points, rotors }
}

fn assemble_mass_matrix(q: &GenVector, params: &HfParams) -> MassMatrix {
    let kin = point_kinematics(q, params);
    let robot = &params.robot;
    let mut m = MassMatrix::zeros();
    for i in 0..3 {
        m[(i, i)] = robot.body_mass;
    }
    let jw = &kin.body_angular_jacobian;
    m += jw.transpose() * robot.inertia * jw;
    for p in kin.points.iter().filter(|p| p.mass > 0.0) {
        m += p.mass * p.jacobian.transpose() * p.jacobian;
    }
    m
}

/// Generalized mass matrix, with a conditioning guard on the floating-base block.
pub fn mass_matrix(q: &GenVector, params: &HfParams) -> Result<MassMatrix> {
    let m = assemble_mass_matrix(q, params);
    let base = m.fixed_view::<6, 6>(0, 0).clone_owned();
    let eig = SymmetricEigen::new(base).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularConfiguration { condition });
    }
    Ok(m)
}

/// ∂M/∂q_i by central differences; translation entries are exactly zero.
pub fn mass_matrix_partials(q: &GenVector, params: &HfParams) -> [MassMatrix; NQ] {
    std::array::from_fn(|i| {
        if i < 3 {
            return MassMatrix::zeros();
        }
        let mut qp = *q;
        let mut qm = *q;
        qp[i] += MASS_FD_STEP;
        qm[i] -= MASS_FD_STEP;
        (assemble_mass_matrix(&qp, params) - assemble_mass_matrix(&qm, params)) / (2.0 * MASS_FD_STEP)
    })
}

/// Coriolis matrix from Christoffel symbols of the first kind:
/// `C_kj = Σ_i ½(∂_i M_kj + ∂_j M_ki − ∂_k M_ij) q̇_i`.
pub fn coriolis_matrix(q: &GenVector, qd: &GenVector, params: &HfParams) -> MassMatrix {
    let dm = mass_matrix_partials(q, params);
    let mut c = MassMatrix::zeros();
    for k in 0..NQ {
        for j in 0..NQ {
            let mut s = 0.0;
            for i in 0..NQ {
                s += 0.5 * (dm[i][(k, j)] + dm[j][(k, i)] - dm[k][(i, j)]) * qd[i];
            }
            c[(k, j)] = s;
        }
    }
    c
}

pub fn potential_energy(q: &GenVector, params: &HfParams) -> f64 {
    let kin = point_kinematics(q, params);
    let g = params.robot.gravity;
    g * (params.robot.body_mass * q[2] + kin.points.iter().map(|p| p.mass * p.position.z).sum::<f64>())
}

/// ∂V/∂q.
pub fn gravity_vector(q: &GenVector, params: &HfParams) -> GenVector {
    let kin = point_kinematics(q, params);
    let g = params.robot.gravity;
    let mut out = GenVector::zeros();
    out[2] = params.robot.body_mass * g;
    for p in &kin.points {
        out += p.mass * g * p.jacobian.row(2).transpose();
    }
    out
}

/// `C(q, q̇)·q̇ + g(q)`.
pub fn bias_and_gravity(q: &GenVector, qd: &GenVector, params: &HfParams) -> GenVector {
    let dm = mass_matrix_partials(q, params);
    let mut mdot = MassMatrix::zeros();
    for (i, d) in dm.iter().enumerate() {
        if qd[i] != 0.0 {
            mdot += d * qd[i];
        }
    }
    let mut coriolis = mdot * qd;
    for k in 3..NQ {
        coriolis[k] -= 0.5 * qd.dot(&(dm[k] * qd));
    }
    coriolis + gravity_vector(q, params)
}

/// Columns 0–3 map rotor thrusts (force at the rotor plus its reaction moment),
/// columns 4–7 map hip joint torques.
pub fn input_matrix(q: &GenVector, params: &HfParams) -> InputMatrix {
    let robot = &params.robot;
    let kin = point_kinematics(q, params);
    let mut b = InputMatrix::zeros();
    for k in 0..4 {
        let (d_body, _) = thrust_axis(robot, k, q[6 + k]);
        let d_world = kin.rotation * d_body;
        let moment = robot.spin_dirs[k] * robot.thrust_moment_coeff * d_body;
        let mut col = kin.rotors[k].jacobian.transpose() * d_world;
        col += kin.body_angular_jacobian.transpose() * moment;
        // Leg spins about body y relative to the body.
        col[6 + k] += robot.swing_sign(k) * moment.y;
        b.set_column(k, &col);
        b[(6 + k, 4 + k)] = 1.0;
    }
    b
}

/// Generalized drag force: body-origin force in world frame, body-frame torque.
pub fn drag_generalized(x: &HfState, params: &HfParams) -> GenVector {
    let rom = x.to_rom();
    let d = crate::dynamics::drag_wrench(&rom.velocity, &rom.angular_velocity, &params.robot);
    let rate = body_rate_matrix(&rom.attitude);
    let mut out = GenVector::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&d.force);
    out.fixed_rows_mut::<3>(3).copy_from(&(rate.transpose() * d.torque));
    out
}

fn thrust_forces(q: &GenVector, thrusts: &Vector4<f64>, params: &HfParams) -> GenVector {
    input_matrix(q, params).fixed_columns::<4>(0) * thrusts
}

/// Generalized accelerations with prescribed joint accelerations.
pub fn generalized_acceleration(x: &HfState, thrusts: &Vector4<f64>, joint_acc: &Vector4<f64>, params: &HfParams) -> Result<GenVector> {
    let m = mass_matrix(&x.q, params)?;
    let rhs = thrust_forces(&x.q, thrusts, params) + drag_generalized(x, params) - bias_and_gravity(&x.q, &x.qd, params);
    let m_bb = m.fixed_view::<6, 6>(0, 0).clone_owned();
    let m_ba = m.fixed_view::<6, 4>(0, 6);
    let base_rhs = rhs.fixed_rows::<6>(0) - m_ba * joint_acc;
    let chol = m_bb.cholesky().ok_or(Error::SingularConfiguration { condition: f64::INFINITY })?;
    let base_acc = chol.solve(&base_rhs);
    let mut qdd = GenVector::zeros();
    qdd.fixed_rows_mut::<6>(0).copy_from(&base_acc);
    qdd.fixed_rows_mut::<4>(6).copy_from(joint_acc);
    if qdd.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "hf_dynamics" });
    }
    Ok(qdd)
}

/// State derivative `(q̇, q̈)`.
pub fn hf_dynamics(x: &HfState, thrusts: &Vector4<f64>, joint_acc: &Vector4<f64>, params: &HfParams) -> Result<StateVector> {
    let qdd = generalized_acceleration(x, thrusts, joint_acc, params)?;
    Ok(HfState { q: x.qd, qd: qdd }.to_vector())
}

/// Hip torques the servos must supply to realize `joint_acc`.
pub fn joint_torques(x: &HfState, thrusts: &Vector4<f64>, joint_acc: &Vector4<f64>, params: &HfParams) -> Result<Vector4<f64>> {
    let qdd = generalized_acceleration(x, thrusts, joint_acc, params)?;
    let m = mass_matrix(&x.q, params)?;
    let residual = m * qdd + bias_and_gravity(&x.q, &x.qd, params)
        - thrust_forces(&x.q, thrusts, params)
        - drag_generalized(x, params);
    Ok(residual.fixed_rows::<4>(6).into())
}

/// Kinetic plus potential energy; potential is zero at z = 0.
pub fn total_energy(x: &HfState, params: &HfParams) -> f64 {
    let m = assemble_mass_matrix(&x.q, params);
    0.5 * x.qd.dot(&(m * x.qd)) + potential_energy(&x.q, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rom_dynamics, ControlInput};
    use crate::integrator::rk4_step;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_q(rng: &mut ChaCha8Rng) -> GenVector {
        let mut q = GenVector::zeros();
        for i in 0..3 {
            q[i] = rng.gen_range(-5.0..5.0);
        }
        q[3] = rng.gen_range(-1.5..1.5);
        q[4] = rng.gen_range(-1.2..1.2);
        q[5] = rng.gen_range(-3.0..3.0);
        for i in 6..10 {
            q[i] = rng.gen_range(0.0..FRAC_PI_2);
        }
        q
    }

    fn random_qd(rng: &mut ChaCha8Rng) -> GenVector {
        GenVector::from_fn(|_, _| rng.gen_range(-2.0..2.0))
    }

    fn no_drag() -> HfParams {
        let mut p = HfParams::default();
        p.robot.drag_lin = Vector3::zeros();
        p.robot.drag_ang = Vector3::zeros();
        p
    }

    #[test]
    fn zero_configuration_points() {
        let p = HfParams::default();
        let mut q = GenVector::zeros();
        q.fixed_rows_mut::<4>(6).fill(0.0);
        let kin = point_kinematics(&q, &p);
        for (i, pt) in kin.points.iter().enumerate() {
            let (k, f) = (i / 3, p.mass_points[i % 3].fraction);
            let expect = p.robot.hip_offsets[k] + Vector3::new(0.0, 0.0, -f * p.robot.leg_length);
            assert!((pt.position - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn point_jacobians_match_central_differences() {
        let p = HfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..10 {
            let q = random_q(&mut rng);
            let kin = point_kinematics(&q, &p);
            for j in 0..NQ {
                let (mut qp, mut qm) = (q, q);
                qp[j] += h;
                qm[j] -= h;
                let (kp, km) = (point_kinematics(&qp, &p), point_kinematics(&qm, &p));
                for i in 0..12 {
                    let fd = (kp.points[i].position - km.points[i].position) / (2.0 * h);
                    let col: Vector3<f64> = kin.points[i].jacobian.column(j).into();
                    let scale = col.norm().max(1e-3);
                    assert!((fd - col).norm() / scale < 1e-6, "point {i} coord {j}");
                }
            }
        }
    }

    #[test]
    fn translation_shifts_every_point() {
        let p = HfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_q(&mut rng);
        let delta = Vector3::new(0.5, -1.25, 2.0);
        let mut qs = q;
        for i in 0..3 {
            qs[i] += delta[i];
        }
        let (a, b) = (point_kinematics(&q, &p), point_kinematics(&qs, &p));
        for i in 0..12 {
            assert!((b.points[i].position - a.points[i].position - delta).norm() < 1e-12);
        }
    }

    #[test]
    fn massless_legs_decouple() {
        let mut p = HfParams::default();
        p.robot.leg_mass = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_q(&mut rng);
        let m = mass_matrix(&q, &p).unwrap();
        assert!(m.fixed_view::<4, 4>(6, 6).norm() == 0.0);
        assert!(m.fixed_view::<6, 4>(0, 6).norm() == 0.0);
        assert!(m.fixed_view::<3, 3>(0, 3).norm() == 0.0);
        assert!((m.fixed_view::<3, 3>(0, 0) - Matrix3::identity() * p.robot.body_mass).norm() == 0.0);
    }

    #[test]
    fn mass_matrix_symmetric_positive_definite() {
        let p = HfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let q = random_q(&mut rng);
            let m = mass_matrix(&q, &p).unwrap();
            assert!((m - m.transpose()).abs().max() < 1e-12);
            let min = SymmetricEigen::new(m).eigenvalues.min();
            assert!(min > 0.0, "min eigenvalue {min}");
        }
    }

    #[test]
    fn kinetic_energy_matches_point_sum() {
        let p = HfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..20 {
            let q = random_q(&mut rng);
            let qd = random_qd(&mut rng);
            let m = mass_matrix(&q, &p).unwrap();
            let k_matrix = 0.5 * qd.dot(&(m * qd));
            // independent: finite-difference point velocities
            let h = 1e-7;
            let kp = point_kinematics(&(q + h * qd), &p);
            let km = point_kinematics(&(q - h * qd), &p);
            let mut k_sum = 0.0;
            for i in 0..12 {
                let v = (kp.points[i].position - km.points[i].position) / (2.0 * h);
                k_sum += 0.5 * kp.points[i].mass * v.norm_squared();
            }
            let v_body = Vector3::new(qd[0], qd[1], qd[2]);
            let th = attitude(&q);
            let w = body_rate_matrix(&th) * Vector3::new(qd[3], qd[4], qd[5]);
            k_sum += 0.5 * p.robot.body_mass * v_body.norm_squared() + 0.5 * w.dot(&(p.robot.inertia * w));
            assert!(((k_matrix - k_sum) / k_sum).abs() < 1e-8, "{k_matrix} vs {k_sum}");
        }
    }

    #[test]
    fn near_gimbal_lock_is_singular() {
        let p = HfParams::default();
        let mut q = GenVector::zeros();
        q[4] = FRAC_PI_2 - 1e-9;
        assert!(matches!(mass_matrix(&q, &p), Err(Error::SingularConfiguration { .. })));
    }

    #[test]
    fn statics_bias_is_weight() {
        let p = HfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let q = random_q(&mut rng);
        let b = bias_and_gravity(&q, &GenVector::zeros(), &p);
        assert!((b[2] - p.robot.total_mass() * p.robot.gravity).abs() < 1e-10);
        assert!(b[0].abs() < 1e-12 && b[1].abs() < 1e-12);
        let mut q2 = q;
        q2[2] += 7.5;
        let qd = random_qd(&mut rng);
        assert!((bias_and_gravity(&q, &qd, &p) - bias_and_gravity(&q2, &qd, &p)).norm() < 1e-9);
    }

    #[test]
    fn christoffel_skew_symmetry() {
        let p = HfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let q = random_q(&mut rng);
            let qd = random_qd(&mut rng);
            let c = coriolis_matrix(&q, &qd, &p);
            let h = 1e-6;
            let mdot = (mass_matrix(&(q + h * qd), &p).unwrap() - mass_matrix(&(q - h * qd), &p).unwrap()) / (2.0 * h);
            let r = qd.dot(&((mdot - 2.0 * c) * qd));
            assert!(r.abs() < 1e-6, "residual {r}");
        }
    }

    #[test]
    fn coriolis_matrix_agrees_with_bias_shortcut() {
        let p = HfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let q = random_q(&mut rng);
        let qd = random_qd(&mut rng);
        let a = coriolis_matrix(&q, &qd, &p) * qd + gravity_vector(&q, &p);
        let b = bias_and_gravity(&q, &qd, &p);
        assert!((a - b).norm() < 1e-9 * (1.0 + b.norm()));
    }

    #[test]
    fn upright_thrust_column_lifts() {
        let p = HfParams::default();
        let mut q = GenVector::zeros();
        q.fixed_rows_mut::<4>(6).copy_from(&p.robot.nominal_joint_angles());
        let b = input_matrix(&q, &p);
        for k in 0..4 {
            assert!((b[(2, k)] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn thrust_columns_obey_virtual_work() {
        let mut p = HfParams::default();
        p.robot.thrust_moment_coeff = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..10 {
            let q = random_q(&mut rng);
            let qd = random_qd(&mut rng);
            let b = input_matrix(&q, &p);
            let power = b.transpose() * qd;
            let h = 1e-6;
            let kp = point_kinematics(&(q + h * qd), &p);
            let km = point_kinematics(&(q - h * qd), &p);
            let kin = point_kinematics(&q, &p);
            for k in 0..4 {
                let v = (kp.rotors[k].position - km.rotors[k].position) / (2.0 * h);
                let d = kin.rotation * thrust_axis(&p.robot, k, q[6 + k]).0;
                let expect = v.dot(&d);
                assert!((power[k] - expect).abs() < 1e-8 * (1.0 + expect.abs()), "{} vs {}", power[k], expect);
            }
        }
    }

    #[test]
    fn horizontal_thrust_gives_no_lift() {
        // Tilt every thrust axis by 90° from nominal while level.
        let p = HfParams::default();
        let mut q = GenVector::zeros();
        for k in 0..4 {
            q[6 + k] = p.robot.nominal_joint_angle + FRAC_PI_2;
        }
        let b = input_matrix(&q, &p);
        for k in 0..4 {
            assert!(b[(2, k)].abs() < 1e-15);
        }
    }

    fn hover_state(p: &HfParams) -> HfState {
        HfState::from_rom(&RomState::hover(&p.robot, Vector3::new(0.0, 0.0, 2.0))).unwrap()
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = HfParams::default();
        let x = hover_state(&p);
        let th = Vector4::repeat(p.robot.hover_thrust());
        let xdot = hf_dynamics(&x, &th, &Vector4::zeros(), &p).unwrap();
        assert!(xdot.norm() < 1e-9, "{xdot}");
    }

    fn rk4_hf(x: &HfState, thrusts: &Vector4<f64>, acc: &Vector4<f64>, p: &HfParams, h: f64) -> HfState {
        HfState::from_vector(&rk4_step(|v| hf_dynamics(&HfState::from_vector(v), thrusts, acc, p), &x.to_vector(), h).unwrap())
    }

    #[test]
    fn energy_conserved_without_inputs() {
        let p = no_drag();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut x = hover_state(&p);
        x.q[3] = 0.3;
        x.q[4] = -0.2;
        x.q[2] = 10.0;
        for i in 0..6 {
            x.qd[i] = rng.gen_range(-1.0..1.0);
        }
        let e0 = total_energy(&x, &p);
        let h = 1e-4;
        for _ in 0..10_000 {
            x = rk4_hf(&x, &Vector4::zeros(), &Vector4::zeros(), &p, h);
        }
        let drift = ((total_energy(&x, &p) - e0) / e0).abs();
        assert!(drift < 1e-6, "drift {drift}");
    }

    #[test]
    fn energy_reference_values() {
        let p = HfParams::default();
        let mut q = GenVector::zeros();
        q.fixed_rows_mut::<4>(6).fill(FRAC_PI_2);
        let mut x = HfState { q, qd: GenVector::zeros() };
        assert!(total_energy(&x, &p).abs() < 1e-15);
        x.qd[2] = 1.5;
        assert!((total_energy(&x, &p) - 0.5 * 6.0 * 2.25).abs() < 1e-12);
    }

    #[test]
    fn massless_frozen_legs_match_rom() {
        let mut p = HfParams::default();
        p.robot.leg_mass = 0.0;
        let mut rom = RomState::hover(&p.robot, Vector3::new(0.0, 0.0, 1.0));
        rom.attitude = Vector3::new(0.1, -0.05, 0.3);
        rom.velocity = Vector3::new(0.5, 0.0, -0.2);
        rom.angular_velocity = Vector3::new(0.4, -0.3, 0.8);
        let u = ControlInput::new(Vector4::new(6.0, 7.0, 5.0, 4.5), Vector4::zeros());
        let h = 1e-3;
        let mut hf = HfState::from_rom(&rom).unwrap();
        let mut xr = rom.to_vector();
        for _ in 0..1000 {
            hf = rk4_hf(&hf, &u.thrusts, &u.joint_acc, &p, h);
            xr = rk4_step(|v| rom_dynamics(&RomState::from_vector(v), &u, &p.robot), &xr, h).unwrap();
        }
        let diff = (hf.to_rom().to_vector() - xr).amax();
        assert!(diff < 1e-6, "diff {diff}");
    }

    #[test]
    fn passive_with_drag() {
        let p = HfParams::default();
        let mut x = hover_state(&p);
        x.qd[0] = 2.0;
        x.qd[5] = 3.0;
        x.qd[3] = 0.5;
        let mut e = total_energy(&x, &p);
        for _ in 0..200 {
            x = rk4_hf(&x, &Vector4::zeros(), &Vector4::zeros(), &p, 1e-3);
            let e2 = total_energy(&x, &p);
            assert!(e2 <= e + 1e-9);
            e = e2;
        }
    }

    #[test]
    fn world_yaw_rotation_maps_solutions() {
        let p = HfParams::default();
        let mut rom = RomState::hover(&p.robot, Vector3::new(0.4, -0.3, 2.0));
        rom.attitude = Vector3::new(0.1, 0.2, -0.4);
        rom.velocity = Vector3::new(1.0, 0.5, 0.0);
        rom.angular_velocity = Vector3::new(0.2, -0.1, 0.6);
        rom.joint_rates = Vector4::new(0.3, -0.2, 0.1, 0.0);
        let thr = Vector4::new(14.0, 15.0, 13.0, 16.0);
        let acc = Vector4::new(1.0, -1.0, 0.5, 0.0);
        let psi = 0.83;
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), psi);
        let mut rot = rom;
        rot.position = rz * rom.position;
        rot.velocity = rz * rom.velocity;
        rot.attitude.z += psi;
        let (mut a, mut b) = (HfState::from_rom(&rom).unwrap(), HfState::from_rom(&rot).unwrap());
        for _ in 0..50 {
            a = rk4_hf(&a, &thr, &acc, &p, 1e-2);
            b = rk4_hf(&b, &thr, &acc, &p, 1e-2);
        }
        let (ra, rb) = (a.to_rom(), b.to_rom());
        assert!((rz * ra.position - rb.position).norm() < 1e-8);
        assert!((rz * ra.velocity - rb.velocity).norm() < 1e-8);
        assert!((ra.angular_velocity - rb.angular_velocity).norm() < 1e-8);
        assert!((ra.attitude.z + psi - rb.attitude.z).abs() < 1e-8);
    }

    #[test]
    fn inverse_dynamics_torques_hold_legs_at_hover() {
        let p = HfParams::default();
        let x = hover_state(&p);
        let tau = joint_torques(&x, &Vector4::repeat(p.robot.hover_thrust()), &Vector4::zeros(), &p).unwrap();
        // Mirror-symmetric legs need identical holding torques.
        for k in 1..4 {
            assert!((tau[k] - tau[0]).abs() < 1e-9);
        }
        assert!(tau[0].abs() > 0.1);
    }
}
