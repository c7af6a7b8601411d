//! Fast invariant battery behind `morphnmpc selftest`.

use std::fmt;

use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{rom_dynamics, rom_dynamics_vec, ControlInput, InputVector, RobotParams, RomState, StateVector};
use crate::harness::model_matching;
use crate::high_fidelity::{coriolis_matrix, hf_dynamics, mass_matrix, mass_matrix_partials, total_energy, GenVector, HfParams, HfState};
use crate::integrator::{rk4_step, StepSpec};
use crate::nmpc::{cost_gradient, total_cost, rollout, NmpcConfig, Reference};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Measured quantity compared against the limit.
    pub value: f64,
    pub limit: String,
    pub passed: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<28} {:.3e} ({})", self.name, self.value, self.limit)
    }
}

fn below(name: &'static str, value: f64, limit: f64) -> Check {
    Check { name, value, limit: format!("< {limit:e}"), passed: value < limit }
}

/// Random posture with moderate attitude and joints inside their range.
pub fn random_posture(rng: &mut impl Rng) -> GenVector {
    let mut q = GenVector::zeros();
    for i in 0..3 {
        q[i] = rng.gen_range(-5.0..5.0);
    }
    for i in 3..6 {
        q[i] = rng.gen_range(-1.2..1.2);
    }
    for i in 6..10 {
        q[i] = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
    }
    q
}

pub fn hover_residual() -> Result<f64> {
    let hf = HfParams::default();
    let x = RomState::hover(&hf.robot, Vector3::new(0.0, 0.0, 2.0));
    let u = ControlInput::hover(&hf.robot);
    let rom = rom_dynamics(&x, &u, &hf.robot)?;
    let plant = hf_dynamics(&HfState::from_rom(&x)?, &u.thrusts, &u.joint_acc, &hf)?;
    Ok(rom.amax().max(plant.amax()))
}

/// Observed order of RK4 on the reduced model from a tumbling start.
pub fn rk4_order() -> Result<f64> {
    let p = RobotParams::default();
    let mut x0 = RomState::hover(&p, Vector3::new(0.0, 0.0, 2.0));
    x0.angular_velocity = Vector3::new(1.0, -0.5, 2.0);
    x0.velocity = Vector3::new(1.0, 0.0, 0.5);
    let x0 = x0.to_vector();
    let u = ControlInput::new(Vector4::new(16.0, 13.0, 15.0, 12.0), Vector4::new(2.0, -1.0, 0.5, 0.0)).to_vector();
    let f = |x: &StateVector| rom_dynamics_vec(x, &u, &p);
    let run = |n: usize| -> Result<StateVector> {
        let h = 0.4 / n as f64;
        (0..n).try_fold(x0, |x, _| rk4_step(f, &x, h))
    };
    let exact = run(512)?;
    let e1 = (run(8)? - exact).norm();
    let e2 = (run(16)? - exact).norm();
    Ok((e1 / e2).log2())
}

/// Smallest mass-matrix eigenvalue over `n` random postures.
pub fn min_mass_eigenvalue(n: usize, seed: u64) -> Result<f64> {
    let hf = HfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = f64::INFINITY;
    for _ in 0..n {
        let m = mass_matrix(&random_posture(&mut rng), &hf)?;
        lo = lo.min(m.symmetric_eigenvalues().min());
    }
    Ok(lo)
}

/// Largest |Ṁ − 2C + (Ṁ − 2C)ᵀ| entry over `n` random states.
pub fn skew_residual(n: usize, seed: u64) -> f64 {
    let hf = HfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let q = random_posture(&mut rng);
            let qd = GenVector::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let dm = mass_matrix_partials(&q, &hf);
            let mdot = (0..10).fold(nalgebra::SMatrix::<f64, 10, 10>::zeros(), |acc, i| acc + dm[i] * qd[i]);
            let n = mdot - 2.0 * coriolis_matrix(&q, &qd, &hf);
            (n + n.transpose()).amax()
        })
        .fold(0.0, f64::max)
}

/// Worst relative error of the adjoint gradient against central differences.
pub fn gradient_error(instances: usize, seed: u64) -> Result<f64> {
    let p = RobotParams::default();
    let cfg = NmpcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let mut x = RomState::hover(&p, Vector3::new(0.0, 0.0, 2.0));
        x.attitude = Vector3::from_fn(|_, _| rng.gen_range(-0.3..0.3));
        x.velocity = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        x.angular_velocity = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        x.joints = Vector4::from_fn(|_, _| rng.gen_range(0.5..1.1));
        let x0 = x.to_vector();
        let u: Vec<InputVector> = (0..cfg.horizon)
            .map(|_| InputVector::from_fn(|i, _| if i < 4 { rng.gen_range(5.0..25.0) } else { rng.gen_range(-20.0..20.0) }))
            .collect();
        let mut target = RomState::hover(&p, Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0)));
        target.position.z += 2.0;
        let reference = Reference::constant(target.to_vector(), cfg.horizon);
        let (_, g) = cost_gradient(&x0, &u, &reference, &cfg, &p)?;
        let cost = |u: &[InputVector]| -> Result<f64> { Ok(total_cost(&rollout(&x0, u, &cfg, &p)?, u, &reference, &cfg, &p)) };
        let mut diff = Vec::new();
        let mut exact = Vec::new();
        for j in 0..u.len() {
            for i in 0..8 {
                let h = 1e-5 * (1.0 + u[j][i].abs());
                let (mut up, mut dn) = (u.clone(), u.clone());
                up[j][i] += h;
                dn[j][i] -= h;
                diff.push((cost(&up)? - cost(&dn)?) / (2.0 * h));
                exact.push(g[j][i]);
            }
        }
        let num: f64 = diff.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = diff.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(num / den);
    }
    Ok(worst)
}

/// Relative total-energy drift of the drag-free plant with zero input.
pub fn energy_drift(duration: f64, h: f64) -> Result<f64> {
    let robot = RobotParams { drag_lin: Vector3::zeros(), drag_ang: Vector3::zeros(), ..RobotParams::default() };
    let hf = HfParams::from_robot(robot);
    let mut x0 = RomState::hover(&hf.robot, Vector3::new(0.0, 0.0, 10.0));
    x0.velocity = Vector3::new(1.0, -0.5, 2.0);
    x0.angular_velocity = Vector3::new(0.8, -0.4, 1.5);
    x0.joints = Vector4::new(0.6, 0.9, 0.7, 1.0);
    let mut x = HfState::from_rom(&x0)?;
    let e0 = total_energy(&x, &hf);
    let zero = Vector4::zeros();
    let n = (duration / h).round() as usize;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let v = rk4_step(|s| hf_dynamics(&HfState::from_vector(s), &zero, &zero, &hf), &x.to_vector(), h)?;
        x = HfState::from_vector(&v);
        worst = worst.max((total_energy(&x, &hf) - e0).abs());
    }
    Ok(worst / e0.abs())
}

/// Reduced model against the plant with massless legs and frozen joints.
pub fn degenerate_matching() -> Result<f64> {
    let robot = RobotParams { leg_mass: 0.0, body_mass: 6.0, ..RobotParams::default() };
    let hf = HfParams::from_robot(robot);
    let x0 = RomState::hover(&hf.robot, Vector3::new(0.0, 0.0, 2.0));
    let u = ControlInput::new(Vector4::new(hf.robot.hover_thrust(), hf.robot.hover_thrust(), hf.robot.hover_thrust(), 0.0), Vector4::zeros());
    let r = model_matching(&x0, &vec![u; 5], StepSpec::new(0.1, 100)?, &hf)?;
    Ok(r.max_position_norm().max(r.max_attitude_norm()))
}

/// Run the whole battery.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let order = rk4_order()?;
    let lowest = min_mass_eigenvalue(1000, seed)?;
    Ok(vec![
        below("hover fixed point", hover_residual()?, 1e-9),
        Check { name: "rk4 convergence order", value: order, limit: "in [3.8, 4.2]".into(), passed: (3.8..=4.2).contains(&order) },
        Check {
            name: "mass matrix SPD (1000)",
            value: lowest,
            limit: "> 0".into(),
            passed: lowest > 0.0,
        },
        below("christoffel skew symmetry", skew_residual(50, seed), 1e-6),
        below("cost gradient (20)", gradient_error(20, seed)?, 1e-4),
        below("energy drift 1 s", energy_drift(1.0, 1e-4)?, 1e-6),
        below("massless-leg matching", degenerate_matching()?, 1e-6),
    ])
}
