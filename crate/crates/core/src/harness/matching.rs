use nalgebra::{Vector3, Vector4};

use super::sim::{Scenario, SimLog};
use crate::dynamics::{rom_dynamics_vec, wrap_angle, ControlInput, RomState};
use crate::faults::effective_thrust;
use crate::high_fidelity::{hf_dynamics, HfParams, HfState};
use crate::integrator::{rk4_step, StepSpec};
use crate::Result;

/// Open-loop comparison of the prediction model against the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub times: Vec<f64>,
    pub rom: Vec<RomState>,
    pub hf: Vec<RomState>,
    /// Largest per-axis position gap [m].
    pub max_position: Vector3<f64>,
    /// Largest per-angle gap, wrapped [rad].
    pub max_attitude: Vector3<f64>,
}

impl MatchReport {
    pub fn max_position_norm(&self) -> f64 {
        self.max_position.amax()
    }

    pub fn max_attitude_norm(&self) -> f64 {
        self.max_attitude.amax()
    }

    /// One row per control period: time, then position and Euler angles of
    /// the reduced model, then of the plant.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        writeln!(out, "t,x_rom,y_rom,z_rom,roll_rom,pitch_rom,yaw_rom,x_hf,y_hf,z_hf,roll_hf,pitch_hf,yaw_hf")?;
        for ((t, r), h) in self.times.iter().zip(&self.rom).zip(&self.hf) {
            let v: Vec<String> = [r.position, r.attitude, h.position, h.attitude].iter().flat_map(|v| v.iter()).map(|x| format!("{x:.8e}")).collect();
            writeln!(out, "{t:.8e},{}", v.join(","))?;
        }
        Ok(())
    }
}

impl std::fmt::Display for MatchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (p, a) = (self.max_position, self.max_attitude.map(f64::to_degrees));
        writeln!(f, "window = {:.3} s", self.times.last().copied().unwrap_or(0.0))?;
        writeln!(f, "max_dx = {:.6e} m", p.x)?;
        writeln!(f, "max_dy = {:.6e} m", p.y)?;
        writeln!(f, "max_dz = {:.6e} m", p.z)?;
        writeln!(f, "max_droll = {:.6e} deg", a.x)?;
        writeln!(f, "max_dpitch = {:.6e} deg", a.y)?;
        write!(f, "max_dyaw = {:.6e} deg", a.z)
    }
}

/// Integrate both models from `x0` under the same held inputs, one per control period.
pub fn model_matching(x0: &RomState, inputs: &[ControlInput], step: StepSpec, hf: &HfParams) -> Result<MatchReport> {
    let h = step.substep();
    let rom = hf.reduced_order_params();
    let mut xr = x0.to_vector();
    let mut xh = HfState::from_rom(x0)?.to_vector();
    let mut report = MatchReport {
        times: vec![0.0],
        rom: vec![*x0],
        hf: vec![*x0],
        max_position: Vector3::zeros(),
        max_attitude: Vector3::zeros(),
    };
    for (k, u) in inputs.iter().enumerate() {
        let uv = u.to_vector();
        for _ in 0..step.substeps {
            xr = rk4_step(|s| rom_dynamics_vec(s, &uv, &rom), &xr, h)?;
            xh = rk4_step(|s| hf_dynamics(&HfState::from_vector(s), &u.thrusts, &u.joint_acc, hf), &xh, h)?;
        }
        let (r, p) = (RomState::from_vector(&xr), HfState::from_vector(&xh).to_rom());
        let dp = (r.position - p.position).abs();
        let da = (r.attitude - p.attitude).map(|a| wrap_angle(a).abs());
        report.max_position = report.max_position.sup(&dp);
        report.max_attitude = report.max_attitude.sup(&da);
        report.times.push((k + 1) as f64 * step.h);
        report.rom.push(r);
        report.hf.push(p);
    }
    Ok(report)
}

/// Hold hover thrust on every rotor, pass it through the scenario's fault
/// schedule, and compare both models from `scenario.initial` until
/// `window` seconds after the fault (or for the whole scenario without one).
pub fn open_loop_failure(scenario: &Scenario, window: f64) -> Result<MatchReport> {
    let robot = &scenario.hf.robot;
    let dt = scenario.nmpc.dt;
    let end = scenario.fault_time().map_or(scenario.duration, |tf| tf + window);
    let steps = (end / dt + 1e-9).round() as usize;
    let limits = scenario.rotor_limits();
    let hover = Vector4::repeat(robot.hover_thrust());
    let inputs: Vec<ControlInput> = (0..steps)
        .map(|k| ControlInput::new(effective_thrust(&hover, k as f64 * dt + 1e-9, &scenario.faults, &limits), Vector4::zeros()))
        .collect();
    model_matching(&scenario.initial, &inputs, StepSpec::new(dt, scenario.substeps)?, &scenario.hf)
}

/// Replay the effective inputs of a logged run, up to `until`, on both models.
pub fn replay_log(log: &SimLog, until: f64, substeps: usize, hf: &HfParams) -> Result<MatchReport> {
    let x0 = log.rows.first().map(|r| r.state).unwrap_or_else(|| RomState::hover(&hf.robot, Vector3::zeros()));
    let inputs: Vec<ControlInput> = log
        .rows
        .iter()
        .filter(|r| r.t < until - 1e-9)
        .map(|r| ControlInput::new(r.effective_thrust, r.command.joint_acc))
        .collect();
    model_matching(&x0, &inputs, StepSpec::new(log.dt, substeps)?, hf)
}
