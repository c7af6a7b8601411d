use nalgebra::{Vector3, Vector4};

use super::reference::{Phase, ReferenceSpec, Trajectory};
use crate::dynamics::{idx, net_wrench, rom_dynamics_vec, ControlInput, RobotParams, RomState, StateVector};
use crate::faults::{effective_thrust, FaultSchedule, LoeNormalization, RotorLimits};
use crate::high_fidelity::{hf_dynamics, total_energy, HfParams, HfState};
use crate::integrator::{rk4_step, StepSpec};
use crate::nmpc::{update_detected_bounds, Controller, Diagnostics, NmpcConfig, Reference};
use crate::{Error, Result};

/// Tolerance used when comparing grid times against event times.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlantKind {
    #[default]
    Hf,
    Rom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlMode {
    #[default]
    Nmpc,
    /// All inputs held at zero; used for conservation checks.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantKind,
    pub control: ControlMode,
    pub duration: f64,
    pub reference: ReferenceSpec,
    pub faults: FaultSchedule,
    pub initial: RomState,
    /// Delay between a fault and the controller's bound update [s].
    pub detection_delay: f64,
    /// On fault detection, replace the reference with a stop from the current
    /// position and horizontal velocity at `stop_decel`.
    pub hold_on_detection: bool,
    /// Deceleration of the stop reference [m/s²].
    pub stop_decel: f64,
    pub thrust_ceiling: f64,
    pub loe_normalization: LoeNormalization,
    /// Altitude below which the run counts as a crash [m].
    pub crash_altitude: f64,
    pub hf: HfParams,
    pub nmpc: NmpcConfig,
    pub substeps: usize,
}

impl Scenario {
    /// Hover at `position` for `duration` seconds under defaults.
    pub fn hover(name: &str, position: Vector3<f64>, duration: f64) -> Self {
        let hf = HfParams::default();
        Self {
            name: name.into(),
            plant: PlantKind::Hf,
            control: ControlMode::Nmpc,
            duration,
            reference: ReferenceSpec::Hover { position },
            faults: FaultSchedule::empty(),
            initial: RomState::hover(&hf.robot, position),
            detection_delay: 0.1,
            hold_on_detection: false,
            stop_decel: 1.0,
            thrust_ceiling: 30.0,
            loe_normalization: LoeNormalization::Ceiling,
            crash_altitude: -0.5,
            hf,
            nmpc: NmpcConfig::default(),
            substeps: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::InvalidParameter { field: field.into(), reason: reason.into() });
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("scenario.duration", "must be positive");
        }
        if !(self.detection_delay >= 0.0) {
            return bad("scenario.detection_delay", "must be non-negative");
        }
        if !(self.stop_decel > 0.0 && self.stop_decel.is_finite()) {
            return bad("scenario.stop_decel", "must be positive");
        }
        if !(self.thrust_ceiling > 0.0) {
            return bad("scenario.thrust_ceiling", "must be positive");
        }
        if !self.initial.is_finite() {
            return bad("scenario.initial", "must be finite");
        }
        self.reference.validate()?;
        self.hf.validate()?;
        self.nmpc.validate()?;
        StepSpec::new(self.nmpc.dt, self.substeps)?;
        Ok(())
    }

    pub fn rotor_limits(&self) -> RotorLimits {
        RotorLimits { ceiling: self.thrust_ceiling, normalization: self.loe_normalization, hover_thrust: self.hf.robot.hover_thrust() }
    }

    /// Number of control periods; the log has one more row.
    pub fn steps(&self) -> usize {
        (self.duration / self.nmpc.dt + TIME_EPS).round() as usize
    }

    /// Onset of the first complete failure, or of the first fault if none is complete.
    pub fn fault_time(&self) -> Option<f64> {
        let events = self.faults.events();
        let first = |complete: bool| {
            events
                .iter()
                .filter(|e| e.loe > 0.0 && (!complete || e.loe >= 1.0))
                .map(|e| e.start)
                .fold(None, |a: Option<f64>, t| Some(a.map_or(t, |a| a.min(t))))
        };
        first(true).or_else(|| first(false))
    }
}

/// One control period of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub phase: Phase,
    pub state: RomState,
    pub reference: Vector3<f64>,
    pub command: ControlInput,
    pub effective_thrust: Vector4<f64>,
    pub detected_max: Vector4<f64>,
    pub solver: Option<Diagnostics>,
    pub energy: f64,
    /// Body yaw torque produced by the effective thrusts [N·m].
    pub yaw_torque: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    Crashed { t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub scenario: String,
    pub dt: f64,
    pub fault_time: Option<f64>,
    pub landing_start: Option<f64>,
    pub yaw_drag: f64,
    pub nmpc_fingerprint: u64,
    pub rows: Vec<LogRow>,
    pub outcome: Outcome,
}

impl SimLog {
    pub fn crashed(&self) -> bool {
        matches!(self.outcome, Outcome::Crashed { .. })
    }

    /// `Err(Error::Crash)` if the run aborted.
    pub fn check(&self) -> Result<()> {
        match &self.outcome {
            Outcome::Completed => Ok(()),
            Outcome::Crashed { t, reason } => Err(Error::Crash { t: *t, reason: reason.clone() }),
        }
    }
}

enum Plant {
    Hf(HfState),
    Rom(StateVector, Box<RobotParams>),
}

impl Plant {
    fn new(kind: PlantKind, x0: &RomState, rom: RobotParams) -> Result<Self> {
        Ok(match kind {
            PlantKind::Hf => Plant::Hf(HfState::from_rom(x0)?),
            PlantKind::Rom => Plant::Rom(x0.to_vector(), Box::new(rom)),
        })
    }

    fn state(&self) -> RomState {
        match self {
            Plant::Hf(x) => x.to_rom(),
            Plant::Rom(x, _) => RomState::from_vector(x),
        }
    }

    fn energy(&self, hf: &HfParams) -> f64 {
        match self {
            Plant::Hf(x) => total_energy(x, hf),
            Plant::Rom(x, p) => {
                let s = RomState::from_vector(x);
                let m = p.total_mass();
                0.5 * m * s.velocity.norm_squared()
                    + 0.5 * s.angular_velocity.dot(&(p.inertia * s.angular_velocity))
                    + m * p.gravity * s.position.z
            }
        }
    }

    fn step(&mut self, thrusts: &Vector4<f64>, joint_acc: &Vector4<f64>, h: f64, hf: &HfParams) -> Result<()> {
        match self {
            Plant::Hf(x) => {
                let v = rk4_step(|s| hf_dynamics(&HfState::from_vector(s), thrusts, joint_acc, hf), &x.to_vector(), h)?;
                *x = HfState::from_vector(&v);
            }
            Plant::Rom(x, p) => {
                let u = ControlInput::new(*thrusts, *joint_acc).to_vector();
                *x = rk4_step(|s| rom_dynamics_vec(s, &u, p), x, h)?;
            }
        }
        Ok(())
    }

    /// Resting on the ground: zero every rate.
    fn settle(&mut self) {
        match self {
            Plant::Hf(x) => x.qd.fill(0.0),
            Plant::Rom(x, _) => x.fixed_rows_mut::<10>(idx::VEL).fill(0.0),
        }
    }
}

/// Straight-line stop at constant deceleration in the horizontal plane.
#[derive(Debug, Clone, Copy)]
struct Stop {
    t0: f64,
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    decel: f64,
}

impl Stop {
    fn new(t0: f64, x: &RomState, decel: f64) -> Self {
        Self { t0, position: x.position, velocity: Vector3::new(x.velocity.x, x.velocity.y, 0.0), decel }
    }

    fn sample(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let speed = self.velocity.norm();
        if speed == 0.0 {
            return (self.position, Vector3::zeros());
        }
        let dir = self.velocity / speed;
        let tau = (t - self.t0).clamp(0.0, speed / self.decel);
        let s = speed * tau - 0.5 * self.decel * tau * tau;
        (self.position + s * dir, (speed - self.decel * tau) * dir)
    }
}

fn horizon_reference(traj: &Trajectory, stop: Option<Stop>, t: f64, x: &RomState, sc: &Scenario) -> Reference {
    let nominal = sc.hf.robot.nominal_joint_angles();
    let states = (0..=sc.nmpc.horizon)
        .map(|j| {
            let tj = t + j as f64 * sc.nmpc.dt;
            let (p, v) = match stop {
                Some(s) => s.sample(tj),
                None => {
                    let r = traj.sample(tj);
                    (r.position, r.velocity)
                }
            };
            let r = RomState {
                position: p,
                attitude: Vector3::new(0.0, 0.0, x.attitude.z),
                joints: nominal,
                velocity: v,
                angular_velocity: Vector3::zeros(),
                joint_rates: Vector4::zeros(),
            };
            r.to_vector()
        })
        .collect();
    Reference { states }
}

/// Simulate `scenario` in closed loop. A crash ends the run early and is
/// reported in [`SimLog::outcome`]; configuration problems are errors.
pub fn run_closed_loop(scenario: &Scenario) -> Result<SimLog> {
    scenario.validate()?;
    let sc = scenario;
    let robot = &sc.hf.robot;
    let prediction = sc.hf.reduced_order_params();
    let dt = sc.nmpc.dt;
    let spec = StepSpec::new(dt, sc.substeps)?;
    let h = spec.substep();
    let limits = sc.rotor_limits();
    let detected_schedule = sc.faults.shifted(sc.detection_delay);
    let traj = sc.reference.trajectory();
    let landing = traj.landing();
    let mut controller = Controller::new(sc.nmpc.clone(), prediction.clone())?;
    let mut plant = Plant::new(sc.plant, &sc.initial, prediction)?;
    let mut log = SimLog {
        scenario: sc.name.clone(),
        dt,
        fault_time: sc.fault_time(),
        landing_start: traj.landing_start(),
        yaw_drag: robot.drag_ang.z,
        nmpc_fingerprint: sc.nmpc.fingerprint(),
        rows: Vec::with_capacity(sc.steps() + 1),
        outcome: Outcome::Completed,
    };
    let mut stop: Option<Stop> = None;
    let mut landed = false;

    for k in 0..=sc.steps() {
        let t = k as f64 * dt;
        let x = plant.state();
        if !x.is_finite() {
            log.outcome = Outcome::Crashed { t, reason: "non-finite plant state".into() };
            break;
        }
        if x.position.z < sc.crash_altitude {
            log.outcome = Outcome::Crashed { t, reason: format!("altitude {:.3} m below {} m", x.position.z, sc.crash_altitude) };
            break;
        }
        let mut phase = traj.phase(t);
        if let Some(l) = landing {
            if landed || (phase == Phase::Landing && x.position.z < l.cutoff) {
                landed = true;
                phase = Phase::Landed;
            }
        }

        let detected_loe = detected_schedule.loe_vector(t + TIME_EPS).map(|l| limits.equivalent_ceiling_loss(l));
        let bounds = update_detected_bounds(&sc.nmpc.input_bounds, &detected_loe);
        if sc.hold_on_detection && stop.is_none() && detected_loe.iter().any(|&l| l > 0.0) {
            stop = Some(Stop::new(t, &x, sc.stop_decel));
        }

        let reference_now = stop.map_or_else(|| traj.sample(t).position, |s| s.sample(t).0);
        let (command, solver) = match (sc.control, phase) {
            (_, Phase::Landed) | (ControlMode::Zero, _) => (ControlInput::zero(), None),
            (ControlMode::Nmpc, _) => {
                let r = horizon_reference(&traj, stop, t, &x, sc);
                let (u, d) = controller.step(&x.to_vector(), &r, &bounds)?;
                (u, Some(d))
            }
        };
        let effective = effective_thrust(&command.thrusts, t + TIME_EPS, &sc.faults, &limits);
        let yaw_torque = net_wrench(&x.joints, &effective, robot).torque.z;
        log.rows.push(LogRow {
            t,
            phase,
            state: x,
            reference: reference_now,
            command,
            effective_thrust: effective,
            detected_max: bounds.thrust_max,
            solver,
            energy: plant.energy(&sc.hf),
            yaw_torque,
        });
        if k == sc.steps() {
            break;
        }
        if landed {
            plant.settle();
            continue;
        }
        for i in 0..spec.substeps {
            let ts = t + i as f64 * h;
            let thrusts = effective_thrust(&command.thrusts, ts + TIME_EPS, &sc.faults, &limits);
            if let Err(e) = plant.step(&thrusts, &command.joint_acc, h, &sc.hf) {
                log.outcome = Outcome::Crashed { t: ts, reason: e.to_string() };
                return Ok(log);
            }
        }
    }
    Ok(log)
}
