use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::metrics::compute_metrics;
use super::sim::{LogRow, SimLog};
use crate::nmpc::SolveStatus;
use crate::{Error, Result};

/// Every logged column, in CSV order.
pub const COLUMNS: &[&str] = &[
    "t", "phase", "x", "y", "z", "roll", "pitch", "yaw", "q1", "q2", "q3", "q4", "vx", "vy", "vz", "wx", "wy", "wz", "qd1", "qd2",
    "qd3", "qd4", "x_ref", "y_ref", "z_ref", "thrust_cmd_1", "thrust_cmd_2", "thrust_cmd_3", "thrust_cmd_4", "joint_acc_1",
    "joint_acc_2", "joint_acc_3", "joint_acc_4", "thrust_1", "thrust_2", "thrust_3", "thrust_4", "thrust_max_1", "thrust_max_2",
    "thrust_max_3", "thrust_max_4", "solver_status", "solver_iterations", "solver_cost", "solver_grad_norm", "energy", "yaw_torque",
];

/// Numeric code of a solver outcome: 0 not run, 1 converged, 2 iteration
/// limit, 3 stalled, 4 failed.
pub fn status_code(status: Option<SolveStatus>) -> u8 {
    match status {
        None => 0,
        Some(SolveStatus::Converged) => 1,
        Some(SolveStatus::MaxIterations) => 2,
        Some(SolveStatus::Stalled) => 3,
        Some(SolveStatus::Failed) => 4,
    }
}

pub fn row_values(r: &LogRow) -> Vec<f64> {
    let s = r.state.to_vector();
    let mut v = Vec::with_capacity(COLUMNS.len());
    v.push(r.t);
    v.push(r.phase.code() as f64);
    v.extend(s.iter());
    v.extend(r.reference.iter());
    v.extend(r.command.thrusts.iter());
    v.extend(r.command.joint_acc.iter());
    v.extend(r.effective_thrust.iter());
    v.extend(r.detected_max.iter());
    v.push(status_code(r.solver.map(|d| d.status)) as f64);
    v.push(r.solver.map_or(0.0, |d| d.iterations as f64));
    v.push(r.solver.map_or(0.0, |d| d.cost));
    v.push(r.solver.map_or(0.0, |d| d.grad_norm));
    v.push(r.energy);
    v.push(r.yaw_torque);
    v
}

/// Nine significant digits, integers printed plainly.
fn number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.8e}")
    }
}

pub fn write_csv(log: &SimLog, mut out: impl Write) -> Result<()> {
    writeln!(out, "{}", COLUMNS.join(","))?;
    for r in &log.rows {
        let line: Vec<String> = row_values(r).into_iter().map(number).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// `(t, value)` pairs of one column.
pub fn series(log: &SimLog, channel: &str) -> Result<Vec<(f64, f64)>> {
    let i = COLUMNS
        .iter()
        .position(|c| *c == channel)
        .ok_or_else(|| Error::Config(format!("unknown channel `{channel}`; available: {}", COLUMNS.join(", "))))?;
    Ok(log.rows.iter().map(|r| (r.t, row_values(r)[i])).collect())
}

/// Write `log.csv` and `metrics.txt` into `dir`, plus one `<channel>.dat`
/// per requested channel. Returns the paths written.
pub fn write_run(log: &SimLog, dir: &Path, channels: &[String]) -> Result<Vec<PathBuf>> {
    let data: Vec<(String, Vec<(f64, f64)>)> = channels.iter().map(|c| Ok((c.clone(), series(log, c)?))).collect::<Result<_>>()?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv = dir.join("log.csv");
    write_csv(log, std::io::BufWriter::new(fs::File::create(&csv)?))?;
    written.push(csv);
    let metrics = dir.join("metrics.txt");
    let mut text = format!("scenario = {}\noutcome = {}\nnmpc_fingerprint = {:016x}\n", log.scenario, outcome_text(log), log.nmpc_fingerprint);
    text.push_str(&compute_metrics(log).to_string());
    fs::write(&metrics, text)?;
    written.push(metrics);
    for (name, points) in data {
        let path = dir.join(format!("{name}.dat"));
        let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
        for (t, v) in points {
            writeln!(f, "{} {}", number(t), number(v))?;
        }
        f.flush()?;
        written.push(path);
    }
    Ok(written)
}

fn outcome_text(log: &SimLog) -> String {
    match &log.outcome {
        super::Outcome::Completed => "completed".into(),
        super::Outcome::Crashed { t, reason } => format!("crashed at t = {t:.3} s: {reason}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_column_has_a_value() {
        let sc = crate::harness::Scenario::hover("h", nalgebra::Vector3::new(0.0, 0.0, 1.0), 0.2);
        let log = crate::harness::run_closed_loop(&sc).unwrap();
        assert_eq!(row_values(&log.rows[0]).len(), COLUMNS.len());
        assert_eq!(series(&log, "z").unwrap().len(), 3);
        assert!(series(&log, "altitude").is_err());
    }

    #[test]
    fn numbers_keep_nine_significant_digits() {
        assert_eq!(number(14.715), "1.47150000e1");
        assert_eq!(number(3.0), "3");
        let x: f64 = 0.123456789123;
        assert_eq!(number(x).parse::<f64>().unwrap(), 0.123456789);
    }
}
