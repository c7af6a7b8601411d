use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use morphnmpc::config::Config;
use morphnmpc::faults::FaultSchedule;
use morphnmpc::harness::{compute_metrics, open_loop_failure, run_closed_loop, write_run, Scenario, SimLog};
use morphnmpc::{selftest, Error};

/// Stdout writes that ignore a closed pipe.
macro_rules! say {
    ($($a:tt)*) => {{ let _ = writeln!(std::io::stdout(), $($a)*); }};
}
macro_rules! say_raw {
    ($($a:tt)*) => {{ let _ = write!(std::io::stdout(), $($a)*); }};
}

/// Environment variable that replaces the output directory named in the file.
const OUT_ENV: &str = "MORPHNMPC_OUT";

#[derive(Parser, Debug)]
#[command(name = "morphnmpc", version, about = "Fault-recovery NMPC simulations for a morphing quadrotor")]
struct Cli {
    /// Output directory; beats MORPHNMPC_OUT and [sim].out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Plant model used by the simulation.
    #[arg(long, global = true, value_enum)]
    plant: Option<PlantArg>,
    /// `section.key=value`, applied left to right after the file is read.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write log.csv, metrics.txt and channel files.
    Run {
        scenario: PathBuf,
        /// Comma-separated channels to write as `<channel>.dat`; replaces [sim].channels.
        #[arg(long, value_delimiter = ',')]
        channels: Option<Vec<String>>,
    },
    /// Compare the reduced model with the plant after the scenario's fault,
    /// with hover thrust held open loop.
    Match {
        /// Scenario file; without one, hover at 3 m with rotor 4 cut at 0.2 s.
        scenario: Option<PathBuf>,
        /// Seconds compared after the fault.
        #[arg(long, default_value_t = 0.5)]
        window: f64,
    },
    /// Re-run a scenario with its fault schedule moved to each onset time.
    Sweep {
        scenario: PathBuf,
        /// Onset grid `start:end:step` in seconds.
        #[arg(long, value_name = "A:B:STEP")]
        fault_time: String,
    },
    /// Run the numerical invariant battery.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlantArg {
    Hf,
    Rom,
}

enum Failure {
    Config(String),
    Crash(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Crash { .. } | Error::NonFinite { .. } | Error::SolverFailure(_) | Error::GimbalLock { .. } | Error::SingularConfiguration { .. } => {
                Failure::Crash(e.to_string())
            }
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

struct Loaded {
    config: Config,
    scenario: Scenario,
    out: PathBuf,
}

fn load(cli: &Cli, path: Option<&Path>) -> Result<Loaded, Failure> {
    let mut overrides: Vec<String> = cli.overrides.clone();
    if let Some(p) = cli.plant {
        overrides.push(format!("scenario.plant=\"{}\"", if matches!(p, PlantArg::Hf) { "hf" } else { "rom" }));
    }
    let refs: Vec<&str> = overrides.iter().map(String::as_str).collect();
    let config = match path {
        Some(p) => Config::load(p, &refs)?,
        None => {
            let mut c = Config::example();
            c.scenario.name = "hover_failure".into();
            c.scenario.duration = 5.0;
            c.scenario.reference = morphnmpc::config::ReferenceSection::Hover { position: [0.0, 0.0, 3.0] };
            c.scenario.faults = vec![morphnmpc::config::FaultEntry { start: 0.2, end: None, rotor: 4, loe: 1.0 }];
            Config::from_toml_str(&c.to_toml()?, &refs)?
        }
    };
    let scenario = config.scenario()?;
    let out = cli.out.clone().or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(&config.sim.out));
    Ok(Loaded { config, scenario, out })
}

fn outcome_line(log: &SimLog) -> String {
    match &log.outcome {
        morphnmpc::harness::Outcome::Completed => "completed".into(),
        morphnmpc::harness::Outcome::Crashed { t, reason } => format!("crashed at t = {t:.2} s: {reason}"),
    }
}

fn run(cli: &Cli, path: &Path, channels: &Option<Vec<String>>) -> Result<(), Failure> {
    let l = load(cli, Some(path))?;
    let channels = channels.clone().unwrap_or_else(|| l.config.sim.channels.clone());
    let channels: Vec<String> = channels.into_iter().filter(|c| !c.is_empty()).collect();
    for c in &channels {
        if !morphnmpc::harness::COLUMNS.contains(&c.as_str()) {
            return Err(Failure::Config(format!("unknown channel `{c}`; available: {}", morphnmpc::harness::COLUMNS.join(", "))));
        }
    }
    let log = run_closed_loop(&l.scenario)?;
    let written = write_run(&log, &l.out, &channels)?;
    say!("scenario = {}\noutcome = {}", log.scenario, outcome_line(&log));
    say_raw!("{}", compute_metrics(&log));
    for p in written {
        say!("wrote {}", p.display());
    }
    match log.check() {
        Ok(()) => Ok(()),
        Err(e) => Err(Failure::Crash(e.to_string())),
    }
}

fn matching(cli: &Cli, path: Option<&Path>, window: f64) -> Result<(), Failure> {
    if !window.is_finite() || window <= 0.0 {
        return Err(Failure::Config("--window must be positive".into()));
    }
    let l = load(cli, path)?;
    let report = open_loop_failure(&l.scenario, window)?;
    std::fs::create_dir_all(&l.out)?;
    let file = l.out.join("match.csv");
    report.write_csv(std::io::BufWriter::new(std::fs::File::create(&file)?))?;
    say!("scenario = {}", l.scenario.name);
    if let Some(tf) = l.scenario.fault_time() {
        say!("fault_time = {tf:.3} s");
    }
    say!("{report}");
    say!("wrote {}", file.display());
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Config(format!("--fault-time `{spec}`: expected start:end:step with step > 0 and end >= start"));
    let parts: Vec<f64> = spec.split(':').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [a, b, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0 && b >= a && a >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(bad());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| a + k as f64 * step).collect())
}

fn sweep(cli: &Cli, path: &Path, grid: &str) -> Result<(), Failure> {
    let times = parse_grid(grid)?;
    let l = load(cli, Some(path))?;
    let first = l.scenario.faults.events().iter().map(|e| e.start).fold(f64::INFINITY, f64::min);
    if !first.is_finite() {
        return Err(Failure::Config(format!("{}: sweep needs at least one [[scenario.faults]] entry", path.display())));
    }
    let results: Vec<Result<(f64, PathBuf, SimLog), Failure>> = times
        .par_iter()
        .map(|&t| {
            let mut sc = l.scenario.clone();
            let shifted = FaultSchedule::new(l.scenario.faults.shifted(t - first).events().to_vec())?;
            sc.faults = shifted;
            sc.name = format!("{}_fault_{t:.3}", l.scenario.name);
            let dir = l.out.join(format!("fault_{t:.3}"));
            let log = run_closed_loop(&sc)?;
            write_run(&log, &dir, &[])?;
            Ok((t, dir, log))
        })
        .collect();
    let mut crashed = false;
    let mut table = String::from("fault_time,outcome,recovery_time,max_attitude_deg,altitude_loss,rmse_x,rmse_y,rmse_z,yaw_rate_saturation,time_to_saturation\n");
    let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.6}"));
    for r in results {
        let (t, _, log) = r?;
        crashed |= log.crashed();
        let m = compute_metrics(&log);
        table.push_str(&format!(
            "{t:.3},{},{},{:.6},{},{:.6},{:.6},{:.6},{},{}\n",
            if log.crashed() { "crashed" } else { "completed" },
            opt(m.recovery_time),
            m.max_attitude.to_degrees(),
            opt(m.altitude_loss),
            m.rmse.x,
            m.rmse.y,
            m.rmse.z,
            opt(m.yaw_rate_saturation),
            opt(m.time_to_saturation),
        ));
    }
    std::fs::create_dir_all(&l.out)?;
    let file = l.out.join("sweep.csv");
    std::fs::write(&file, &table)?;
    say_raw!("{table}");
    say!("wrote {}", file.display());
    if crashed {
        return Err(Failure::Crash("at least one sweep run crashed".into()));
    }
    Ok(())
}

fn selftest_cmd(seed: u64) -> Result<(), Failure> {
    let checks = selftest::run_all(seed)?;
    for c in &checks {
        say!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    say!("{} checks, {failed} failed", checks.len());
    if failed > 0 {
        return Err(Failure::Crash(format!("{failed} selftest checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, channels } => run(&cli, scenario, channels),
        Command::Match { scenario, window } => matching(&cli, scenario.as_deref(), *window),
        Command::Sweep { scenario, fault_time } => sweep(&cli, scenario, fault_time),
        Command::Selftest { seed } => selftest_cmd(*seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Crash(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
