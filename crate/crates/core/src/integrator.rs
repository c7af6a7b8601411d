//! Fixed-step classical Runge–Kutta. Inputs are held constant over a step by
//! capturing them in the dynamics closure.

use nalgebra::SVector;

use crate::{Error, Result};

/// Control-period integration settings for the plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSpec {
    /// Control period [s].
    pub h: f64,
    /// Plant substeps per control period.
    pub substeps: usize,
}

impl Default for StepSpec {
    fn default() -> Self {
        Self { h: 0.1, substeps: 10 }
    }
}

impl StepSpec {
    pub fn new(h: f64, substeps: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter { field: "dt".into(), reason: "must be positive".into() });
        }
        if substeps == 0 {
            return Err(Error::InvalidParameter { field: "substeps".into(), reason: "must be at least 1".into() });
        }
        Ok(Self { h, substeps })
    }

    pub fn substep(&self) -> f64 {
        self.h / self.substeps as f64
    }
}

fn finite<const N: usize>(v: SVector<f64, N>) -> Result<SVector<f64, N>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite { context: "rk4 stage" })
    }
}

pub fn rk4_step<const N: usize, F>(f: F, x: &SVector<f64, N>, h: f64) -> Result<SVector<f64, N>>
where
    F: Fn(&SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let k1 = finite(f(x)?)?;
    let k2 = finite(f(&(x + 0.5 * h * k1))?)?;
    let k3 = finite(f(&(x + 0.5 * h * k2))?)?;
    let k4 = finite(f(&(x + h * k3))?)?;
    finite(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// `n` RK4 steps from `x0`; returns all `n + 1` states.
pub fn integrate_held<const N: usize, F>(f: F, x0: &SVector<f64, N>, h: f64, n: usize) -> Result<Vec<SVector<f64, N>>>
where
    F: Fn(&SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let mut traj = Vec::with_capacity(n + 1);
    traj.push(*x0);
    let mut x = *x0;
    for _ in 0..n {
        x = rk4_step(&f, &x, h)?;
        traj.push(x);
    }
    Ok(traj)
}
