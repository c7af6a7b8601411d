//! Scenario files in TOML with four sections:
//!
//! - `[robot]`: physical parameters, every key required;
//! - `[nmpc]`: controller settings, each key defaulting to [`NmpcConfig::default`];
//! - `[scenario]`: plant, reference, fault events and timing;
//! - `[sim]`: integration substeps, seed, output directory and channels.
//!
//! Unknown keys are rejected. Angles are written in degrees.
//!
//! ```
//! let text = morphnmpc::config::Config::example().to_toml().unwrap();
//! let cfg = morphnmpc::config::Config::from_toml_str(&text, &["nmpc.horizon=5"]).unwrap();
//! assert_eq!(cfg.scenario().unwrap().nmpc.horizon, 5);
//! ```

use std::path::Path;

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{RobotParams, RomState};
use crate::faults::{FaultEvent, FaultSchedule, LoeNormalization};
use crate::harness::{ControlMode, Landing, PlantKind, ReferenceSpec, Scenario};
use crate::high_fidelity::{HfParams, MassPoint};
use crate::nmpc::{InputBounds, InputReference, InputWeights, NmpcConfig, StateBounds, StateWeights};
use crate::{Error, Result};

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub robot: RobotSection,
    #[serde(default)]
    pub nmpc: NmpcSection,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RobotSection {
    pub m_b: f64,
    pub m_l: f64,
    pub I_b: [[f64; 3]; 3],
    pub hip_offsets: [[f64; 3]; 4],
    pub L_leg: f64,
    pub nominal_joint_angle_deg: f64,
    pub c_m: f64,
    pub spin_dirs: [f64; 4],
    pub drag_lin: [f64; 3],
    pub drag_ang: [f64; 3],
    pub g: f64,
    pub leg_mass_points: Vec<MassPointEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassPointEntry {
    pub fraction: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmpcSection {
    pub horizon: usize,
    pub dt: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub penalty_weight: f64,
    pub accel_scale: f64,
    pub input_reference: InputReferenceName,
    pub weights: WeightSection,
    pub bounds: BoundSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputReferenceName {
    #[default]
    Hover,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSection {
    pub position_xy: f64,
    pub position_z: f64,
    pub velocity_xy: f64,
    pub velocity_z: f64,
    pub roll_pitch: f64,
    pub yaw: f64,
    pub roll_pitch_rate: f64,
    pub yaw_rate: f64,
    pub joint: f64,
    pub joint_rate: f64,
    pub thrust: f64,
    pub joint_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub joint_acc_min: f64,
    pub joint_acc_max: f64,
    pub roll_pitch_max_deg: f64,
    pub joint_min_deg: f64,
    pub joint_max_deg: f64,
    pub side_sum_max_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    #[serde(default)]
    pub plant: PlantName,
    #[serde(default)]
    pub control: ControlName,
    pub duration: f64,
    #[serde(default = "default_delay")]
    pub detection_delay: f64,
    #[serde(default)]
    pub hold_on_detection: bool,
    #[serde(default = "default_stop_decel")]
    pub stop_decel: f64,
    #[serde(default = "default_ceiling")]
    pub thrust_ceiling: f64,
    #[serde(default)]
    pub loe_normalization: NormalizationName,
    #[serde(default = "default_crash")]
    pub crash_altitude: f64,
    /// Start state; hover at the reference start when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    pub reference: ReferenceSection,
    #[serde(default)]
    pub faults: Vec<FaultEntry>,
}

fn default_delay() -> f64 {
    0.1
}
fn default_stop_decel() -> f64 {
    1.0
}
fn default_ceiling() -> f64 {
    30.0
}
fn default_crash() -> f64 {
    -0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlantName {
    #[default]
    Hf,
    Rom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControlName {
    #[default]
    Nmpc,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationName {
    #[default]
    Ceiling,
    HoverRelative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub position: [f64; 3],
    #[serde(default)]
    pub attitude_deg: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub angular_velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSection {
    Hover {
        position: [f64; 3],
    },
    Cruise {
        start: [f64; 3],
        velocity: [f64; 3],
        accel: f64,
    },
    Waypoints {
        start: [f64; 3],
        waypoints: Vec<[f64; 3]>,
        speed: f64,
        hold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        landing: Option<LandingEntry>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandingEntry {
    pub rate: f64,
    pub cutoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEntry {
    pub start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
    pub rotor: usize,
    pub loe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub substeps: usize,
    pub seed: u64,
    pub out: String,
    /// Columns written as `<channel>.dat` next to the log.
    pub channels: Vec<String>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self { substeps: 10, seed: 0, out: "out".into(), channels: Vec::new() }
    }
}

impl Default for WeightSection {
    fn default() -> Self {
        let (s, r) = (StateWeights::default(), InputWeights::default());
        Self {
            position_xy: s.position_xy,
            position_z: s.position_z,
            velocity_xy: s.velocity_xy,
            velocity_z: s.velocity_z,
            roll_pitch: s.roll_pitch,
            yaw: s.yaw,
            roll_pitch_rate: s.roll_pitch_rate,
            yaw_rate: s.yaw_rate,
            joint: s.joint,
            joint_rate: s.joint_rate,
            thrust: r.thrust,
            joint_acc: r.joint_acc,
        }
    }
}

impl Default for BoundSection {
    fn default() -> Self {
        Self {
            thrust_min: 0.0,
            thrust_max: 30.0,
            joint_acc_min: -50.0,
            joint_acc_max: 50.0,
            roll_pitch_max_deg: 90.0,
            joint_min_deg: 0.0,
            joint_max_deg: 90.0,
            side_sum_max_deg: 110.0,
        }
    }
}

impl Default for NmpcSection {
    fn default() -> Self {
        let d = NmpcConfig::default();
        Self {
            horizon: d.horizon,
            dt: d.dt,
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            penalty_weight: d.penalty_weight,
            accel_scale: d.accel_scale,
            input_reference: InputReferenceName::Hover,
            weights: WeightSection::default(),
            bounds: BoundSection::default(),
        }
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::from(a)
}

impl RobotSection {
    pub fn from_params(p: &HfParams) -> Self {
        let r = &p.robot;
        Self {
            m_b: r.body_mass,
            m_l: r.leg_mass,
            I_b: std::array::from_fn(|i| std::array::from_fn(|j| r.inertia[(i, j)])),
            hip_offsets: r.hip_offsets.map(|h| h.into()),
            L_leg: r.leg_length,
            nominal_joint_angle_deg: r.nominal_joint_angle.to_degrees(),
            c_m: r.thrust_moment_coeff,
            spin_dirs: r.spin_dirs,
            drag_lin: r.drag_lin.into(),
            drag_ang: r.drag_ang.into(),
            g: r.gravity,
            leg_mass_points: p.mass_points.iter().map(|m| MassPointEntry { fraction: m.fraction, share: m.share }).collect(),
        }
    }

    pub fn to_params(&self) -> Result<HfParams> {
        let robot = RobotParams {
            body_mass: self.m_b,
            leg_mass: self.m_l,
            inertia: Matrix3::from_fn(|i, j| self.I_b[i][j]),
            hip_offsets: self.hip_offsets.map(v3),
            leg_length: self.L_leg,
            nominal_joint_angle: self.nominal_joint_angle_deg * DEG,
            thrust_moment_coeff: self.c_m,
            spin_dirs: self.spin_dirs,
            drag_lin: v3(self.drag_lin),
            drag_ang: v3(self.drag_ang),
            gravity: self.g,
        };
        let points: [MassPointEntry; 3] = self.leg_mass_points.clone().try_into().map_err(|v: Vec<MassPointEntry>| {
            Error::Config(format!("[robot].leg_mass_points: expected 3 entries, got {}", v.len()))
        })?;
        let hf = HfParams { robot, mass_points: points.map(|m| MassPoint { fraction: m.fraction, share: m.share }) };
        hf.validate().map_err(|e| match e {
            Error::InvalidParameter { field, reason } => {
                let key = match field.as_str() {
                    "inertia" => "I_b",
                    "leg_length" => "L_leg",
                    "drag" => "drag_lin/drag_ang",
                    other => other,
                };
                Error::Config(format!("[robot].{key}: {reason}"))
            }
            other => other,
        })?;
        Ok(hf)
    }
}

impl NmpcSection {
    pub fn to_config(&self) -> NmpcConfig {
        let w = &self.weights;
        let b = &self.bounds;
        let q = StateWeights {
            position_xy: w.position_xy,
            position_z: w.position_z,
            velocity_xy: w.velocity_xy,
            velocity_z: w.velocity_z,
            roll_pitch: w.roll_pitch,
            yaw: w.yaw,
            roll_pitch_rate: w.roll_pitch_rate,
            yaw_rate: w.yaw_rate,
            joint: w.joint,
            joint_rate: w.joint_rate,
        };
        NmpcConfig {
            horizon: self.horizon,
            dt: self.dt,
            q_diag: q.diagonal(),
            r_diag: InputWeights { thrust: w.thrust, joint_acc: w.joint_acc }.diagonal(),
            input_reference: match self.input_reference {
                InputReferenceName::Hover => InputReference::Hover,
                InputReferenceName::Zero => InputReference::Zero,
            },
            input_bounds: InputBounds {
                thrust_min: Vector4::repeat(b.thrust_min),
                thrust_max: Vector4::repeat(b.thrust_max),
                joint_acc_min: Vector4::repeat(b.joint_acc_min),
                joint_acc_max: Vector4::repeat(b.joint_acc_max),
            },
            state_bounds: StateBounds {
                roll_pitch_max: b.roll_pitch_max_deg * DEG,
                joint_min: b.joint_min_deg * DEG,
                joint_max: b.joint_max_deg * DEG,
                side_sum_max: b.side_sum_max_deg * DEG,
            },
            penalty_weight: self.penalty_weight,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            accel_scale: self.accel_scale,
        }
    }
}

impl ReferenceSection {
    fn to_spec(&self) -> ReferenceSpec {
        match self {
            ReferenceSection::Hover { position } => ReferenceSpec::Hover { position: v3(*position) },
            ReferenceSection::Cruise { start, velocity, accel } => {
                ReferenceSpec::Cruise { start: v3(*start), velocity: v3(*velocity), accel: *accel }
            }
            ReferenceSection::Waypoints { start, waypoints, speed, hold, landing } => ReferenceSpec::Waypoints {
                start: v3(*start),
                waypoints: waypoints.iter().map(|w| v3(*w)).collect(),
                speed: *speed,
                hold: *hold,
                landing: landing.map(|l| Landing { rate: l.rate, cutoff: l.cutoff }),
            },
        }
    }

    fn start(&self) -> [f64; 3] {
        match self {
            ReferenceSection::Hover { position } => *position,
            ReferenceSection::Cruise { start, .. } | ReferenceSection::Waypoints { start, .. } => *start,
        }
    }
}

/// Format a serde path such as `robot.m_b` as `[robot].m_b`.
fn key_path(path: &str) -> String {
    match path.split_once('.') {
        Some((head, rest)) => format!("[{head}].{rest}"),
        None if path.is_empty() || path == "." => "<root>".into(),
        None => format!("[{path}]"),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parse a TOML scalar or array; anything unparsable is taken as a string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Apply one `a.b.c=value` override to a parsed document. Numeric segments
/// index into arrays.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Error::Config(format!("override `{spec}`: expected key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override `{spec}`: empty key segment")));
    }
    let value = parse_value(raw.trim());
    let mut node = table
        .entry(parts[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    for part in &parts[1..] {
        node = match node {
            toml::Value::Table(t) => t.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let i: usize = part.parse().map_err(|_| Error::Config(format!("override `{spec}`: `{part}` is not an array index")))?;
                let n = a.len();
                a.get_mut(i).ok_or_else(|| Error::Config(format!("override `{spec}`: index {i} out of range ({n} entries)")))?
            }
            _ => return Err(Error::Config(format!("override `{spec}`: `{part}` is below a plain value"))),
        };
    }
    *node = value;
    Ok(())
}

impl Config {
    /// Parse `text`, then apply `overrides` left to right.
    pub fn from_toml_str(text: &str, overrides: &[&str]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e.span().map(|s| format!("line {}: ", line_of(text, s.start))).unwrap_or_default();
            Error::Config(format!("{line}{}", e.message()))
        })?;
        let source = if overrides.is_empty() {
            text.to_string()
        } else {
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?
        };
        let de = toml::Deserializer::parse(&source).map_err(|e| Error::Config(e.message().to_string()))?;
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().to_string();
            let key = match msg.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
                Some(field) if path.is_empty() || path == "." => key_path(field),
                Some(field) => key_path(&format!("{path}.{field}")),
                None => key_path(&path),
            };
            let line = match inner.span() {
                Some(s) if overrides.is_empty() => format!("line {}: ", line_of(text, s.start)),
                _ => String::new(),
            };
            Error::Config(format!("{line}{key}: {msg}"))
        })?;
        cfg.scenario()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[&str]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Default robot and controller hovering at 2 m for 10 s.
    pub fn example() -> Self {
        Self {
            robot: RobotSection::from_params(&HfParams::default()),
            nmpc: NmpcSection::default(),
            scenario: ScenarioSection {
                name: "hover".into(),
                plant: PlantName::Hf,
                control: ControlName::Nmpc,
                duration: 10.0,
                detection_delay: default_delay(),
                hold_on_detection: false,
                stop_decel: default_stop_decel(),
                thrust_ceiling: default_ceiling(),
                loe_normalization: NormalizationName::Ceiling,
                crash_altitude: default_crash(),
                initial: None,
                reference: ReferenceSection::Hover { position: [0.0, 0.0, 2.0] },
                faults: Vec::new(),
            },
            sim: SimSection::default(),
        }
    }

    /// Build and validate the runnable scenario.
    pub fn scenario(&self) -> Result<Scenario> {
        let hf = self.robot.to_params()?;
        let s = &self.scenario;
        let faults = FaultSchedule::new(
            s.faults.iter().map(|f| FaultEvent { start: f.start, end: f.end, rotor: f.rotor, loe: f.loe }).collect(),
        )
        .map_err(|e| Error::Config(format!("[scenario].faults: {e}")))?;
        let initial = match &s.initial {
            Some(i) => RomState {
                position: v3(i.position),
                attitude: v3(i.attitude_deg) * DEG,
                velocity: v3(i.velocity),
                angular_velocity: v3(i.angular_velocity),
                ..RomState::hover(&hf.robot, v3(i.position))
            },
            None => RomState::hover(&hf.robot, v3(s.reference.start())),
        };
        let sc = Scenario {
            name: s.name.clone(),
            plant: match s.plant {
                PlantName::Hf => PlantKind::Hf,
                PlantName::Rom => PlantKind::Rom,
            },
            control: match s.control {
                ControlName::Nmpc => ControlMode::Nmpc,
                ControlName::Zero => ControlMode::Zero,
            },
            duration: s.duration,
            reference: s.reference.to_spec(),
            faults,
            initial,
            detection_delay: s.detection_delay,
            hold_on_detection: s.hold_on_detection,
            stop_decel: s.stop_decel,
            thrust_ceiling: s.thrust_ceiling,
            loe_normalization: match s.loe_normalization {
                NormalizationName::Ceiling => LoeNormalization::Ceiling,
                NormalizationName::HoverRelative => LoeNormalization::HoverRelative,
            },
            crash_altitude: s.crash_altitude,
            hf,
            nmpc: self.nmpc.to_config(),
            substeps: self.sim.substeps,
        };
        sc.validate().map_err(|e| match e {
            Error::InvalidParameter { field, reason } => Error::Config(format!("{}: {reason}", section_key(&field))),
            other => other,
        })?;
        Ok(sc)
    }
}

/// Map a validation field name onto its place in the file.
fn section_key(field: &str) -> String {
    if let Some(rest) = field.strip_prefix("scenario.") {
        format!("[scenario].{rest}")
    } else if let Some(rest) = field.strip_prefix("reference.") {
        format!("[scenario].reference.{rest}")
    } else if let Some(rest) = field.strip_prefix("nmpc.") {
        format!("[nmpc].{rest}")
    } else if field == "substeps" || field.starts_with("step") {
        "[sim].substeps".into()
    } else {
        field.to_string()
    }
}
