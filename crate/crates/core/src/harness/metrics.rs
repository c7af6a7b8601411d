use std::fmt;

use nalgebra::Vector3;

use super::reference::Phase;
use super::sim::{LogRow, SimLog};

/// Attitude band that counts as recovered [rad].
pub const RECOVERY_BAND: f64 = 10.0 * std::f64::consts::PI / 180.0;
/// Time the attitude must stay inside the band [s].
pub const RECOVERY_DWELL: f64 = 1.0;
/// Relative band around the final yaw rate that counts as saturated.
pub const SATURATION_BAND: f64 = 0.05;
/// Window at the end of flight averaged for the saturation value [s].
pub const SATURATION_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Seconds from the fault until roll and pitch enter the band for good.
    pub recovery_time: Option<f64>,
    /// Largest |roll| or |pitch| over the run [rad].
    pub max_attitude: f64,
    /// Altitude at the fault minus the lowest altitude before landing [m].
    pub altitude_loss: Option<f64>,
    pub rmse: Vector3<f64>,
    /// Mean body yaw rate over the last second of flight after the fault [rad/s].
    pub yaw_rate_saturation: Option<f64>,
    /// Yaw torque over yaw drag, averaged over the same window [rad/s].
    pub yaw_rate_fixed_point: Option<f64>,
    /// Seconds from the fault until the yaw rate stays within 5% of its final value.
    pub time_to_saturation: Option<f64>,
    pub touchdown_speed: Option<f64>,
    pub final_altitude: f64,
    pub max_solver_iterations: usize,
}

fn tilt(r: &LogRow) -> f64 {
    r.state.attitude.x.abs().max(r.state.attitude.y.abs())
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn compute_metrics(log: &SimLog) -> Metrics {
    let rows = &log.rows;
    let eps = 1e-9;
    let end_t = rows.last().map_or(0.0, |r| r.t);
    let flight_end = log.landing_start.unwrap_or(f64::INFINITY).min(end_t + eps);
    let in_flight = |r: &&LogRow| r.phase == Phase::Flight && r.t <= flight_end;

    let recovery_time = log.fault_time.and_then(|tf| {
        let after: Vec<&LogRow> = rows.iter().filter(|r| r.t >= tf - eps).collect();
        (0..after.len()).find_map(|i| {
            let t0 = after[i].t;
            if t0 + RECOVERY_DWELL > end_t + eps {
                return None;
            }
            let ok = after[i..].iter().take_while(|r| r.t <= t0 + RECOVERY_DWELL + eps).all(|r| tilt(r) < RECOVERY_BAND);
            ok.then_some(t0 - tf)
        })
    });

    let altitude_loss = log.fault_time.and_then(|tf| {
        let z0 = rows.iter().find(|r| r.t >= tf - eps)?.state.position.z;
        let zmin = rows.iter().filter(|r| r.t >= tf - eps).filter(in_flight).map(|r| r.state.position.z).fold(f64::INFINITY, f64::min);
        zmin.is_finite().then_some(z0 - zmin)
    });

    let n = rows.len().max(1) as f64;
    let rmse = rows
        .iter()
        .fold(Vector3::zeros(), |acc, r| acc + (r.state.position - r.reference).component_mul(&(r.state.position - r.reference)))
        .map(|s| (s / n).sqrt());

    let (mut saturation, mut fixed_point, mut time_to_saturation) = (None, None, None);
    if let Some(tf) = log.fault_time {
        let window: Vec<&LogRow> = rows.iter().filter(|r| r.t >= tf - eps).filter(in_flight).collect();
        let last_t = window.last().map(|r| r.t);
        if let Some(last_t) = last_t {
            let tail = || window.iter().filter(move |r| r.t >= last_t - SATURATION_WINDOW + eps);
            saturation = mean(tail().map(|r| r.state.angular_velocity.z));
            if log.yaw_drag > 0.0 {
                fixed_point = mean(tail().map(|r| r.yaw_torque / log.yaw_drag));
            }
            if let Some(w) = saturation.filter(|w| *w != 0.0) {
                let band = SATURATION_BAND * w.abs();
                let last_out = window.iter().rposition(|r| (r.state.angular_velocity.z - w).abs() > band);
                let first_in = match last_out {
                    None => Some(0),
                    Some(i) if i + 1 < window.len() => Some(i + 1),
                    Some(_) => None,
                };
                time_to_saturation = first_in.map(|i| window[i].t - tf);
            }
        }
    }

    let touchdown_speed = rows.iter().find(|r| r.phase == Phase::Landed).map(|r| r.state.velocity.z.abs());

    Metrics {
        recovery_time,
        max_attitude: rows.iter().map(tilt).fold(0.0, f64::max),
        altitude_loss,
        rmse,
        yaw_rate_saturation: saturation,
        yaw_rate_fixed_point: fixed_point,
        time_to_saturation,
        touchdown_speed,
        final_altitude: rows.last().map_or(f64::NAN, |r| r.state.position.z),
        max_solver_iterations: rows.iter().filter_map(|r| r.solver.map(|d| d.iterations)).max().unwrap_or(0),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |x| format!("{x:.9e}"))
}

/// Flat `key = value` listing; absent values print as `none`.
impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "recovery_time = {}", opt(self.recovery_time))?;
        writeln!(f, "max_attitude = {:.9e}", self.max_attitude)?;
        writeln!(f, "altitude_loss = {}", opt(self.altitude_loss))?;
        writeln!(f, "rmse_x = {:.9e}", self.rmse.x)?;
        writeln!(f, "rmse_y = {:.9e}", self.rmse.y)?;
        writeln!(f, "rmse_z = {:.9e}", self.rmse.z)?;
        writeln!(f, "yaw_rate_saturation = {}", opt(self.yaw_rate_saturation))?;
        writeln!(f, "yaw_rate_fixed_point = {}", opt(self.yaw_rate_fixed_point))?;
        writeln!(f, "time_to_saturation = {}", opt(self.time_to_saturation))?;
        writeln!(f, "touchdown_speed = {}", opt(self.touchdown_speed))?;
        writeln!(f, "final_altitude = {:.9e}", self.final_altitude)?;
        writeln!(f, "max_solver_iterations = {}", self.max_solver_iterations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ControlInput, RomState, RobotParams};
    use crate::harness::Outcome;
    use nalgebra::Vector4;

    fn synthetic(n: usize, dt: f64, f: impl Fn(f64) -> RomState) -> SimLog {
        let rows = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                let s = f(t);
                LogRow {
                    t,
                    phase: Phase::Flight,
                    reference: s.position,
                    state: s,
                    command: ControlInput::zero(),
                    effective_thrust: Vector4::zeros(),
                    detected_max: Vector4::repeat(30.0),
                    solver: None,
                    energy: 0.0,
                    yaw_torque: 0.13 * 2.0,
                }
            })
            .collect();
        SimLog { scenario: "synthetic".into(), dt, fault_time: None, landing_start: None, yaw_drag: 0.13, nmpc_fingerprint: 0, rows, outcome: Outcome::Completed }
    }

    #[test]
    fn perfect_hover_has_no_error_and_no_recovery() {
        let p = RobotParams::default();
        let log = synthetic(101, 0.1, |_| RomState::hover(&p, Vector3::new(0.0, 0.0, 1.0)));
        let m = compute_metrics(&log);
        assert_eq!(m.rmse, Vector3::zeros());
        assert_eq!(m.recovery_time, None);
        assert_eq!(m.max_attitude, 0.0);
    }

    #[test]
    fn roll_step_recovers_at_decay_time() {
        let p = RobotParams::default();
        let mut log = synthetic(61, 0.1, |t| {
            let mut s = RomState::hover(&p, Vector3::zeros());
            s.attitude.x = if t < 2.0 - 1e-9 { 0.5 } else { 0.01 };
            s
        });
        log.fault_time = Some(0.0);
        let r = compute_metrics(&log).recovery_time.unwrap();
        assert!((r - 2.0).abs() <= 0.1 + 1e-9, "{r}");
    }

    #[test]
    fn asymptotic_yaw_rate_matches_fixed_point() {
        let p = RobotParams::default();
        let w_star = 2.0;
        let mut log = synthetic(201, 0.1, |t| {
            let mut s = RomState::hover(&p, Vector3::zeros());
            s.angular_velocity.z = w_star * (1.0 - (-t / 2.0).exp());
            s
        });
        log.fault_time = Some(0.0);
        let m = compute_metrics(&log);
        let sat = m.yaw_rate_saturation.unwrap();
        assert!((sat - w_star).abs() < 0.05 * w_star);
        assert!((m.yaw_rate_fixed_point.unwrap() - w_star).abs() < 1e-12);
        let ts = m.time_to_saturation.unwrap();
        assert!(ts > 5.0 && ts < 7.0, "{ts}");
    }

    #[test]
    fn display_lists_absent_values_as_none() {
        let p = RobotParams::default();
        let text = compute_metrics(&synthetic(3, 0.1, |_| RomState::hover(&p, Vector3::zeros()))).to_string();
        assert!(text.contains("recovery_time = none"));
        assert!(text.lines().all(|l| l.contains(" = ")));
    }
}
