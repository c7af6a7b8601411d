use nalgebra::{DMatrix, SMatrix};

use super::{NmpcConfig, Reference, StateBounds};
use crate::dynamics::{idx, rom_dynamics_vec, wrap_angle, InputVector, RobotParams, StateVector, INPUT_DIM, STATE_DIM};
use crate::integrator::rk4_step;
use crate::{Error, Result};

type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
type InputJacobian = SMatrix<f64, STATE_DIM, INPUT_DIM>;

/// Relative step for differencing the model Jacobians.
const JACOBIAN_STEP: f64 = 1e-6;

/// Predicted states `x_0..x_N` under piecewise-constant inputs.
pub fn rollout(x0: &StateVector, u_seq: &[InputVector], cfg: &NmpcConfig, params: &RobotParams) -> Result<Vec<StateVector>> {
    let mut traj = Vec::with_capacity(u_seq.len() + 1);
    traj.push(*x0);
    let mut x = *x0;
    for u in u_seq {
        x = rk4_step(|s| rom_dynamics_vec(s, u, params), &x, cfg.dt)?;
        traj.push(x);
    }
    Ok(traj)
}

/// Cost terms shared by evaluation and differentiation.
pub struct CostModel<'a> {
    pub(crate) cfg: &'a NmpcConfig,
    u_ref: InputVector,
}

impl<'a> CostModel<'a> {
    pub fn new(cfg: &'a NmpcConfig, params: &RobotParams) -> Self {
        Self { cfg, u_ref: cfg.input_reference_vector(params) }
    }

    fn state_error(x: &StateVector, r: &StateVector) -> StateVector {
        let mut e = x - r;
        for i in idx::ATT..idx::ATT + 3 {
            e[i] = wrap_angle(e[i]);
        }
        e
    }

    /// Quadratic tracking term of one state and its gradient.
    pub fn state_term(&self, x: &StateVector, r: &StateVector) -> (f64, StateVector) {
        let e = Self::state_error(x, r);
        let qe = self.cfg.q_diag.component_mul(&e);
        (e.dot(&qe), 2.0 * qe)
    }

    pub fn input_term(&self, u: &InputVector) -> (f64, InputVector) {
        let d = u - self.u_ref;
        let rd = self.cfg.r_diag.component_mul(&d);
        (d.dot(&rd), 2.0 * rd)
    }

    /// Quadratic penalty on state-limit violations; zero strictly inside.
    pub fn penalty(&self, x: &StateVector) -> (f64, StateVector) {
        penalty(x, &self.cfg.state_bounds, self.cfg.penalty_weight)
    }

    /// Hessian of the penalty (exact where the active set is locally constant).
    pub(crate) fn penalty_curvature(&self, x: &StateVector) -> StateJacobian {
        let b = &self.cfg.state_bounds;
        let w2 = 2.0 * self.cfg.penalty_weight;
        let mut h = StateJacobian::zeros();
        for k in [idx::ROLL, idx::PITCH] {
            if wrap_angle(x[k]).abs() > b.roll_pitch_max {
                h[(k, k)] += w2;
            }
        }
        for k in 0..4 {
            let q = x[idx::JOINT + k];
            if q > b.joint_max || q < b.joint_min {
                h[(idx::JOINT + k, idx::JOINT + k)] += w2;
            }
        }
        for (a, c) in [(idx::JOINT, idx::JOINT + 2), (idx::JOINT + 1, idx::JOINT + 3)] {
            if x[a] + x[c] > b.side_sum_max {
                for i in [a, c] {
                    for j in [a, c] {
                        h[(i, j)] += w2;
                    }
                }
            }
        }
        h
    }
}

fn penalty(x: &StateVector, b: &StateBounds, w: f64) -> (f64, StateVector) {
    let mut value = 0.0;
    let mut grad = StateVector::zeros();
    for k in [idx::ROLL, idx::PITCH] {
        let a = wrap_angle(x[k]);
        let excess = a.abs() - b.roll_pitch_max;
        if excess > 0.0 {
            value += w * excess * excess;
            grad[k] += 2.0 * w * excess * a.signum();
        }
    }
    let mut upper = |i: &[usize], limit: f64, sign: f64| {
        let s: f64 = i.iter().map(|&k| sign * x[k]).sum();
        let excess = s - limit;
        if excess > 0.0 {
            value += w * excess * excess;
            for &k in i {
                grad[k] += 2.0 * w * excess * sign;
            }
        }
    };
    for k in 0..4 {
        upper(&[idx::JOINT + k], b.joint_max, 1.0);
        upper(&[idx::JOINT + k], -b.joint_min, -1.0);
    }
    // left side: front-left + rear-left; right side: front-right + rear-right
    upper(&[idx::JOINT, idx::JOINT + 2], b.side_sum_max, 1.0);
    upper(&[idx::JOINT + 1, idx::JOINT + 3], b.side_sum_max, 1.0);
    (value, grad)
}

/// Penalized objective for a given trajectory.
pub fn total_cost(traj: &[StateVector], u_seq: &[InputVector], reference: &Reference, cfg: &NmpcConfig, params: &RobotParams) -> f64 {
    let model = CostModel::new(cfg, params);
    let states: f64 = traj
        .iter()
        .zip(&reference.states)
        .map(|(x, r)| model.state_term(x, r).0 + model.penalty(x).0)
        .sum();
    let inputs: f64 = u_seq.iter().map(|u| model.input_term(u).0).sum();
    states + inputs
}

fn model_jacobians(x: &StateVector, u: &InputVector, params: &RobotParams) -> Result<(StateJacobian, InputJacobian)> {
    let mut a = StateJacobian::zeros();
    let mut b = InputJacobian::zeros();
    for i in 0..STATE_DIM {
        let h = JACOBIAN_STEP * (1.0 + x[i].abs());
        let (mut xp, mut xm) = (*x, *x);
        xp[i] += h;
        xm[i] -= h;
        let col = (rom_dynamics_vec(&xp, u, params)? - rom_dynamics_vec(&xm, u, params)?) / (2.0 * h);
        a.set_column(i, &col);
    }
    for i in 0..INPUT_DIM {
        let h = JACOBIAN_STEP * (1.0 + u[i].abs());
        let (mut up, mut um) = (*u, *u);
        up[i] += h;
        um[i] -= h;
        let col = (rom_dynamics_vec(x, &up, params)? - rom_dynamics_vec(x, &um, params)?) / (2.0 * h);
        b.set_column(i, &col);
    }
    Ok((a, b))
}

/// One RK4 step and its sensitivities with respect to the state and the held input.
fn rk4_sensitivity(x: &StateVector, u: &InputVector, h: f64, params: &RobotParams) -> Result<(StateVector, StateJacobian, InputJacobian)> {
    let f = |s: &StateVector| rom_dynamics_vec(s, u, params);
    let eye = StateJacobian::identity();
    let k1 = f(x)?;
    let (a1, b1) = model_jacobians(x, u, params)?;
    let x2 = x + 0.5 * h * k1;
    let k2 = f(&x2)?;
    let (a2, b2) = model_jacobians(&x2, u, params)?;
    let x3 = x + 0.5 * h * k2;
    let k3 = f(&x3)?;
    let (a3, b3) = model_jacobians(&x3, u, params)?;
    let x4 = x + h * k3;
    let k4 = f(&x4)?;
    let (a4, b4) = model_jacobians(&x4, u, params)?;

    let k1x = a1;
    let k1u = b1;
    let k2x = a2 * (eye + 0.5 * h * k1x);
    let k2u = a2 * (0.5 * h * k1u) + b2;
    let k3x = a3 * (eye + 0.5 * h * k2x);
    let k3u = a3 * (0.5 * h * k2u) + b3;
    let k4x = a4 * (eye + h * k3x);
    let k4u = a4 * (h * k3u) + b4;

    let next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let phi_x = eye + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    let phi_u = (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "nmpc rollout" });
    }
    Ok((next, phi_x, phi_u))
}

/// Trajectory and per-step RK4 sensitivities about an input sequence.
pub(crate) struct Linearization {
    pub traj: Vec<StateVector>,
    pub phi_x: Vec<StateJacobian>,
    pub phi_u: Vec<InputJacobian>,
}

pub(crate) fn linearize(x0: &StateVector, u_seq: &[InputVector], dt: f64, params: &RobotParams) -> Result<Linearization> {
    let n = u_seq.len();
    let mut lin = Linearization { traj: Vec::with_capacity(n + 1), phi_x: Vec::with_capacity(n), phi_u: Vec::with_capacity(n) };
    lin.traj.push(*x0);
    for (j, u) in u_seq.iter().enumerate() {
        let (next, phi_x, phi_u) = rk4_sensitivity(&lin.traj[j], u, dt, params)?;
        lin.traj.push(next);
        lin.phi_x.push(phi_x);
        lin.phi_u.push(phi_u);
    }
    Ok(lin)
}

/// Objective and adjoint gradient for an existing linearization.
pub(crate) fn value_and_gradient(lin: &Linearization, u_seq: &[InputVector], reference: &Reference, model: &CostModel) -> (f64, Vec<InputVector>) {
    let n = u_seq.len();
    let mut value = 0.0;
    let mut state_grads = Vec::with_capacity(n + 1);
    for (x, r) in lin.traj.iter().zip(&reference.states) {
        let (c, g) = model.state_term(x, r);
        let (p, pg) = model.penalty(x);
        value += c + p;
        state_grads.push(g + pg);
    }
    let mut grads = vec![InputVector::zeros(); n];
    let mut lambda = state_grads[n];
    for j in (0..n).rev() {
        let (c, g) = model.input_term(&u_seq[j]);
        value += c;
        grads[j] = g + lin.phi_u[j].transpose() * lambda;
        lambda = state_grads[j] + lin.phi_x[j].transpose() * lambda;
    }
    (value, grads)
}

/// Gauss–Newton approximation of the objective Hessian in the stacked inputs.
pub(crate) fn gauss_newton_hessian(lin: &Linearization, model: &CostModel) -> DMatrix<f64> {
    let n = lin.phi_u.len();
    let m = n * INPUT_DIM;
    let mut h = DMatrix::<f64>::zeros(m, m);
    for j in 0..n {
        for i in 0..INPUT_DIM {
            h[(j * INPUT_DIM + i, j * INPUT_DIM + i)] = 2.0 * model.cfg.r_diag[i];
        }
    }
    // sens[i] = ∂x_k/∂u_i for the current k, advanced one step per pass.
    let mut sens: Vec<InputJacobian> = Vec::with_capacity(n);
    for k in 1..=n {
        for s in sens.iter_mut() {
            *s = lin.phi_x[k - 1] * *s;
        }
        sens.push(lin.phi_u[k - 1]);
        let mut w = StateJacobian::from_diagonal(&(2.0 * model.cfg.q_diag));
        w += model.penalty_curvature(&lin.traj[k]);
        let ws: Vec<InputJacobian> = sens.iter().map(|s| w * s).collect();
        for a in 0..k {
            for b in 0..=a {
                let block = sens[a].transpose() * ws[b];
                for r in 0..INPUT_DIM {
                    for c in 0..INPUT_DIM {
                        h[(a * INPUT_DIM + r, b * INPUT_DIM + c)] += block[(r, c)];
                        if a != b {
                            h[(b * INPUT_DIM + c, a * INPUT_DIM + r)] += block[(r, c)];
                        }
                    }
                }
            }
        }
    }
    h
}

/// Objective value and its gradient with respect to every input, by adjoint
/// accumulation through the RK4 chain.
pub fn cost_gradient(
    x0: &StateVector,
    u_seq: &[InputVector],
    reference: &Reference,
    cfg: &NmpcConfig,
    params: &RobotParams,
) -> Result<(f64, Vec<InputVector>)> {
    let model = CostModel::new(cfg, params);
    let lin = linearize(x0, u_seq, cfg.dt, params)?;
    Ok(value_and_gradient(&lin, u_seq, reference, &model))
}
