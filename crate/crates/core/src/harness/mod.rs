//! Closed-loop executive: plant, controller, faults and references wired
//! together, plus logging and metrics.

mod matching;
mod metrics;
mod output;
mod reference;
mod sim;

pub use matching::{model_matching, open_loop_failure, replay_log, MatchReport};
pub use metrics::{compute_metrics, Metrics, RECOVERY_BAND, RECOVERY_DWELL, SATURATION_BAND};
pub use output::{row_values, series, status_code, write_csv, write_run, COLUMNS};
pub use reference::{Landing, Phase, RefPoint, ReferenceSpec, Trajectory};
pub use sim::{run_closed_loop, ControlMode, LogRow, Outcome, PlantKind, Scenario, SimLog};
