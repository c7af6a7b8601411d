//! Projected Gauss–Newton with Armijo backtracking along the projection arc.
//! Variables pinned at a bound with an outward gradient take a diagonally
//! scaled gradient step; the rest take a Newton step.

use nalgebra::{DMatrix, DVector, Vector4};

use super::cost::{gauss_newton_hessian, linearize, value_and_gradient, CostModel, Linearization};
use super::{rollout, total_cost, InputBounds, NmpcConfig, Reference};
use crate::dynamics::{ControlInput, InputVector, RobotParams, StateVector, INPUT_DIM};
use crate::{Error, Result};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;
const ACTIVE_EPS: f64 = 1e-3;
const COST_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// Line search stalled after at least one accepted step.
    Stalled,
    /// No step was accepted; the warm start is returned.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    pub cost: f64,
    /// Norm of the projected gradient step `P(u − ∇J) − u`, in solver scaling.
    pub grad_norm: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub inputs: Vec<InputVector>,
    pub diagnostics: Diagnostics,
}

/// Scale the thrust ceiling of each rotor by its detected loss.
pub fn update_detected_bounds(current: &InputBounds, loe: &Vector4<f64>) -> InputBounds {
    let mut b = *current;
    for k in 0..4 {
        b.thrust_max[k] = current.thrust_max[k] * (1.0 - loe[k].clamp(0.0, 1.0));
        b.thrust_min[k] = b.thrust_min[k].min(b.thrust_max[k]);
    }
    b
}

struct Problem<'a> {
    x0: &'a StateVector,
    reference: &'a Reference,
    cfg: &'a NmpcConfig,
    params: &'a RobotParams,
    bounds: &'a InputBounds,
    model: CostModel<'a>,
    scale: DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

struct Point {
    z: DVector<f64>,
    f: f64,
    g: DVector<f64>,
    lin: Linearization,
}

impl<'a> Problem<'a> {
    fn new(x0: &'a StateVector, reference: &'a Reference, cfg: &'a NmpcConfig, params: &'a RobotParams, bounds: &'a InputBounds) -> Self {
        let mut unit = InputVector::repeat(1.0);
        unit.fixed_rows_mut::<4>(4).fill(cfg.accel_scale);
        let n = cfg.horizon;
        let scale = DVector::from_iterator(n * INPUT_DIM, (0..n).flat_map(|_| unit.iter().copied().collect::<Vec<_>>()));
        let lo = bounds.lower().component_div(&unit);
        let hi = bounds.upper().component_div(&unit);
        let lower = DVector::from_iterator(n * INPUT_DIM, (0..n).flat_map(|_| lo.iter().copied().collect::<Vec<_>>()));
        let upper = DVector::from_iterator(n * INPUT_DIM, (0..n).flat_map(|_| hi.iter().copied().collect::<Vec<_>>()));
        Self { x0, reference, cfg, params, bounds, model: CostModel::new(cfg, params), scale, lower, upper }
    }

    fn to_inputs(&self, z: &DVector<f64>) -> Vec<InputVector> {
        let u = z.component_mul(&self.scale);
        (0..self.cfg.horizon).map(|j| InputVector::from_iterator(u.rows(j * INPUT_DIM, INPUT_DIM).iter().copied())).collect()
    }

    fn flatten(&self, u: &[InputVector]) -> DVector<f64> {
        DVector::from_iterator(u.len() * INPUT_DIM, u.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>())).component_div(&self.scale)
    }

    fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        z.zip_zip_map(&self.lower, &self.upper, |v, lo, hi| v.clamp(lo, hi))
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        let u = self.to_inputs(z);
        match rollout(self.x0, &u, self.cfg, self.params) {
            Ok(traj) => total_cost(&traj, &u, self.reference, self.cfg, self.params),
            Err(_) => f64::INFINITY,
        }
    }

    fn evaluate(&self, z: DVector<f64>) -> Result<Point> {
        let u = self.to_inputs(&z);
        let lin = linearize(self.x0, &u, self.cfg.dt, self.params)?;
        let (f, grads) = value_and_gradient(&lin, &u, self.reference, &self.model);
        let g = self.flatten(&grads).component_mul(&self.scale).component_mul(&self.scale);
        Ok(Point { z, f, g, lin })
    }

    fn hessian(&self, p: &Point) -> DMatrix<f64> {
        let h = gauss_newton_hessian(&p.lin, &self.model);
        let s = DMatrix::from_diagonal(&self.scale);
        &s * h * &s
    }

    fn pg_norm(&self, p: &Point) -> f64 {
        (self.project(&(&p.z - &p.g)) - &p.z).norm()
    }

    /// Newton step on the free variables, scaled gradient on those held at a bound.
    fn direction(&self, p: &Point, eps: f64) -> DVector<f64> {
        let h = self.hessian(p);
        let m = p.z.len();
        let free: Vec<usize> = (0..m)
            .filter(|&i| !((p.z[i] <= self.lower[i] + eps && p.g[i] > 0.0) || (p.z[i] >= self.upper[i] - eps && p.g[i] < 0.0)))
            .collect();
        let mut d = DVector::from_iterator(m, (0..m).map(|i| -p.g[i] / h[(i, i)].max(f64::EPSILON)));
        if free.is_empty() {
            return d;
        }
        let hff = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| p.g[i]));
        let mut damping = 0.0;
        let floor = 1e-10 * hff.diagonal().amax().max(1.0);
        let step = loop {
            let mut a = hff.clone();
            for i in 0..free.len() {
                a[(i, i)] += damping;
            }
            if let Some(ch) = a.cholesky() {
                break -ch.solve(&gf);
            }
            damping = if damping == 0.0 { floor } else { damping * 10.0 };
        };
        for (k, &i) in free.iter().enumerate() {
            d[i] = step[k];
        }
        d
    }

    /// Projected arc search along `d` with Armijo acceptance.
    fn search(&self, p: &Point, d: &DVector<f64>) -> Option<DVector<f64>> {
        let mut lambda = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let trial = self.project(&(&p.z + lambda * d));
            let slope = p.g.dot(&(&trial - &p.z));
            if slope < 0.0 {
                let ft = self.value(&trial);
                if ft.is_finite() && ft <= p.f + ARMIJO * slope {
                    return Some(trial);
                }
            }
            lambda *= 0.5;
        }
        None
    }
}

/// Minimize the horizon objective from `warm_start`. Every returned input lies
/// inside `bounds`.
pub fn solve(
    x0: &StateVector,
    reference: &Reference,
    warm_start: &[InputVector],
    cfg: &NmpcConfig,
    params: &RobotParams,
    bounds: &InputBounds,
) -> Result<Solution> {
    if warm_start.len() != cfg.horizon {
        return Err(Error::SolverFailure(format!("warm start has {} inputs, horizon is {}", warm_start.len(), cfg.horizon)));
    }
    if reference.states.len() < cfg.horizon + 1 {
        return Err(Error::SolverFailure(format!("reference has {} states, need {}", reference.states.len(), cfg.horizon + 1)));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "nmpc initial state" });
    }
    let prob = Problem::new(x0, reference, cfg, params, bounds);
    let projected_warm: Vec<InputVector> = warm_start.iter().map(|u| bounds.project(u)).collect();
    let failed = |iterations| Solution {
        inputs: projected_warm.clone(),
        diagnostics: Diagnostics { iterations, cost: f64::INFINITY, grad_norm: f64::INFINITY, status: SolveStatus::Failed },
    };
    let mut p = match prob.evaluate(prob.project(&prob.flatten(&projected_warm))) {
        Ok(p) if p.f.is_finite() => p,
        _ => return Ok(failed(0)),
    };
    let mut grad_norm = prob.pg_norm(&p);
    let mut status = SolveStatus::MaxIterations;
    let mut accepted = 0;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if grad_norm < cfg.grad_tol {
            status = SolveStatus::Converged;
            break;
        }
        iterations += 1;
        let d = prob.direction(&p, grad_norm.min(ACTIVE_EPS));
        let next = prob.search(&p, &d).or_else(|| prob.search(&p, &(prob.project(&(&p.z - &p.g)) - &p.z)));
        let Some(z) = next else {
            status = if accepted > 0 { SolveStatus::Stalled } else { SolveStatus::Failed };
            break;
        };
        let f_prev = p.f;
        p = match prob.evaluate(z) {
            Ok(np) => np,
            Err(_) => {
                status = if accepted > 0 { SolveStatus::Stalled } else { SolveStatus::Failed };
                break;
            }
        };
        accepted += 1;
        grad_norm = prob.pg_norm(&p);
        if f_prev - p.f <= COST_RTOL * f_prev.abs().max(1.0) && grad_norm < cfg.grad_tol.sqrt() {
            status = SolveStatus::Converged;
            break;
        }
    }
    if status == SolveStatus::MaxIterations && grad_norm < cfg.grad_tol {
        status = SolveStatus::Converged;
    }
    if status == SolveStatus::Failed {
        return Ok(Solution { diagnostics: Diagnostics { cost: p.f, grad_norm, ..failed(iterations).diagnostics }, ..failed(iterations) });
    }
    let inputs = prob.to_inputs(&p.z).iter().map(|u| prob.bounds.project(u)).collect();
    Ok(Solution { inputs, diagnostics: Diagnostics { iterations, cost: p.f, grad_norm, status } })
}

/// Receding-horizon wrapper: owns the warm start and shifts it every period.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: NmpcConfig,
    params: RobotParams,
    warm: Vec<InputVector>,
}

impl Controller {
    pub fn new(cfg: NmpcConfig, params: RobotParams) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let u0 = cfg.input_bounds.project(&cfg.input_reference_vector(&params));
        let warm = vec![u0; cfg.horizon];
        Ok(Self { cfg, params, warm })
    }

    pub fn config(&self) -> &NmpcConfig {
        &self.cfg
    }

    pub fn warm_start(&self) -> &[InputVector] {
        &self.warm
    }

    /// Solve from `x0` and return the first input; the solution, shifted by
    /// one step with its last entry repeated, seeds the next call.
    pub fn step(&mut self, x0: &StateVector, reference: &Reference, bounds: &InputBounds) -> Result<(ControlInput, Diagnostics)> {
        let sol = solve(x0, reference, &self.warm, &self.cfg, &self.params, bounds)?;
        let first = sol.inputs[0];
        let last = *sol.inputs.last().expect("horizon >= 1");
        self.warm = sol.inputs[1..].iter().copied().chain(std::iter::once(last)).collect();
        Ok((ControlInput::from_vector(&first), sol.diagnostics))
    }
}
