//! Command-line front end. See `ssid-cls --help`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::estimators::{build_regression, ls_batch, Method};
use crate::harness::{self, report, Execution, MethodSpec, MonteCarloConfig};
use crate::simulator::{scenarios, Scenario, Trajectory};

#[derive(Debug, Parser)]
#[command(
    name = "ssid-cls",
    version,
    about = "Constrained least-squares identification of state-space models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate identification and validation data for a scenario.
    Simulate {
        /// Scenario JSON file or preset name.
        #[arg(long)]
        scenario: String,
        /// Noise seed for the identification record (defaults to the scenario seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Identify a model from a simulated record.
    Identify {
        /// ls | cls | rcls-relaxed | rcls | rwls | rwcls, optionally with `:mu=`, `:lambda=`, `:uncertain`.
        #[arg(long)]
        method: String,
        /// Directory written by `simulate`, or a trajectory CSV.
        #[arg(long)]
        data: PathBuf,
        /// Scenario (defaults to `scenario.json` next to the data).
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, conflicts_with = "lambda")]
        mu: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Use the scenario's uncertain constraint.
        #[arg(long)]
        uncertain: bool,
        /// Seed for a random initial guess (defaults to the scenario seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Estimate JSON to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo study and write summary, per-run and histogram CSVs.
    Montecarlo {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        runs: usize,
        /// Comma-separated method specs, e.g. `ls,cls,rcls-relaxed:mu=5e3:uncertain`.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        /// Identification samples per mode (overrides the scenario).
        #[arg(long)]
        n_id: Option<usize>,
        /// Validation samples (overrides the scenario).
        #[arg(long)]
        n_val: Option<usize>,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        /// Run realizations on one thread.
        #[arg(long)]
        sequential: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Empirical bias of plain least squares.
    Bias {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        /// Override the measurement noise level.
        #[arg(long)]
        sigma_v: Option<f64>,
        /// Bias CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Free-run an estimate on the scenario's validation setup and score it.
    Validate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        scenario: String,
        /// One-based mode whose dynamics are the reference.
        #[arg(long, default_value_t = 1)]
        mode: usize,
        /// RMSE CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a preset scenario as JSON.
    Scenario {
        /// One of the preset names.
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Problems with the invocation itself (exit code 2).
#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Runs the CLI and returns the process exit code. Failures print one JSON
/// line `{"error": {"kind": ..., "message": ...}}` to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let _ = e.print();
            report_error("usage", &e.kind().to_string());
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            report_error("usage", &msg);
            2
        }
        Err(Failure::Run(e)) => {
            report_error(e.kind(), &e.to_string());
            1
        }
    }
}

fn report_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{line}");
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate {
            scenario,
            seed,
            out,
        } => simulate(&scenario, seed, &out),
        Command::Identify {
            method,
            data,
            scenario,
            mu,
            lambda,
            uncertain,
            seed,
            out,
        } => {
            let mut spec: MethodSpec = method
                .parse()
                .map_err(|e: Error| Failure::Usage(e.to_string()))?;
            spec.mu = mu.or(spec.mu);
            spec.lambda = lambda.or(spec.lambda);
            spec.uncertain |= uncertain;
            if spec.mu.is_some() && spec.method != Method::RclsRelaxed {
                return Err(Failure::Usage("--mu only applies to rcls-relaxed".into()));
            }
            if spec.lambda.is_some() && !matches!(spec.method, Method::Rwls | Method::Rwcls) {
                return Err(Failure::Usage(
                    "--lambda only applies to rwls and rwcls".into(),
                ));
            }
            identify(&spec, &data, scenario.as_deref(), seed, &out)
        }
        Command::Montecarlo {
            scenario,
            runs,
            methods,
            base_seed,
            n_id,
            n_val,
            bins,
            sequential,
            out,
        } => {
            let mut sc = load_scenario(&scenario)?;
            sc.n_id = n_id.unwrap_or(sc.n_id);
            sc.n_val = n_val.unwrap_or(sc.n_val);
            let methods = methods
                .iter()
                .map(|m| m.parse())
                .collect::<Result<Vec<MethodSpec>>>()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let mut cfg = MonteCarloConfig::new(sc, runs, methods, base_seed);
            if sequential {
                cfg.execution = Execution::Sequential;
            }
            montecarlo(&cfg, bins, &out)
        }
        Command::Bias {
            scenario,
            runs,
            base_seed,
            sigma_v,
            out,
        } => {
            let mut sc = load_scenario(&scenario)?;
            sc.sigma_v = sigma_v.unwrap_or(sc.sigma_v);
            let report = harness::bias_study(&sc, runs, base_seed, Execution::Parallel)?;
            report::write_bias_csv(&report, create(&out)?)?;
            println!(
                "{} of {} components flagged; max |bias| {:e}",
                report.flagged(),
                report.components.len(),
                report.max_abs_bias()
            );
            Ok(())
        }
        Command::Validate {
            estimate,
            scenario,
            mode,
            out,
        } => {
            let sc = load_scenario(&scenario)?;
            let est = report::read_estimate_json(BufReader::new(open(&estimate)?))?;
            if mode == 0 || mode > sc.modes() {
                return Err(Failure::Usage(format!(
                    "--mode must be in 1..={}",
                    sc.modes()
                )));
            }
            let (scores, _) = harness::validate(&sc, &est, mode - 1)?;
            report::write_rmse_csv(&scores, create(&out)?)?;
            Ok(())
        }
        Command::Scenario { name, out } => {
            let sc = scenarios::preset(&name).ok_or_else(|| {
                Failure::Usage(format!(
                    "unknown preset {name:?} (presets: {})",
                    scenarios::PRESETS.join(", ")
                ))
            })?;
            write_json(&sc.to_file(), &out)
        }
    }
}

fn simulate(scenario: &str, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let sc = load_scenario(scenario)?;
    fs::create_dir_all(out)?;
    write_json(&sc.to_file(), &out.join("scenario.json"))?;
    let traj = sc.identification_data(seed.unwrap_or(sc.seed))?;
    traj.write_csv(create(&out.join("identification.csv"))?)?;
    if sc.is_switching() {
        for m in 0..sc.modes() {
            let name = format!("validation_mode{}.csv", m + 1);
            sc.validation_truth(m)?
                .write_csv(create(&out.join(name))?)?;
        }
    } else {
        sc.validation_truth(0)?
            .write_csv(create(&out.join("validation.csv"))?)?;
    }
    Ok(())
}

fn identify(
    spec: &MethodSpec,
    data: &Path,
    scenario: Option<&str>,
    seed: Option<u64>,
    out: &Path,
) -> CliResult<()> {
    let (csv_path, sibling) = if data.is_dir() {
        (data.join("identification.csv"), data.join("scenario.json"))
    } else {
        let dir = data.parent().unwrap_or(Path::new("."));
        (data.to_path_buf(), dir.join("scenario.json"))
    };
    let traj = Trajectory::read_csv(BufReader::new(open(&csv_path)?))?;
    let sc = match scenario {
        Some(arg) => Some(load_scenario(arg)?),
        None if sibling.exists() => Some(Scenario::load(&sibling)?),
        None => None,
    };
    let estimate = match sc {
        Some(sc) => {
            harness::identify_trajectory(&sc, spec, &traj, seed.unwrap_or(sc.seed))?.estimate
        }
        None if spec.method == Method::Ls => ls_batch(&build_regression(&traj)?)?,
        None => {
            return Err(Failure::Usage(format!(
                "{} needs a scenario for its constraint; pass --scenario",
                spec.method
            )))
        }
    };
    report::write_estimate_json(&estimate, create(out)?)?;
    Ok(())
}

fn montecarlo(cfg: &MonteCarloConfig, bins: usize, out: &Path) -> CliResult<()> {
    let summary = if cfg.scenario.is_switching() {
        harness::monte_carlo_tv(cfg)?
    } else {
        harness::monte_carlo(cfg)?
    };
    fs::create_dir_all(out)?;
    report::write_summary_csv(&summary, create(&out.join("summary.csv"))?)?;
    report::write_runs_csv(&summary, create(&out.join("runs.csv"))?)?;
    report::write_histogram_csv(&summary, bins, create(&out.join("histogram.csv"))?)?;
    report::write_failures_csv(&summary, create(&out.join("failures.csv"))?)?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for e in &summary.entries {
        let cells: Vec<String> = e
            .rmse_mean
            .iter()
            .zip(&e.rmse_std)
            .map(|(m, s)| format!("{m:.4}±{s:.4}"))
            .collect();
        writeln!(
            w,
            "{:<32} {}  failures={}",
            e.label(),
            cells.join("  "),
            e.failures.len()
        )?;
    }
    Ok(())
}

fn load_scenario(arg: &str) -> CliResult<Scenario> {
    let path = Path::new(arg);
    if !path.exists() && scenarios::preset(arg).is_none() {
        return Err(Failure::Usage(format!(
            "{arg}: no such file or preset (presets: {})",
            scenarios::PRESETS.join(", ")
        )));
    }
    Ok(Scenario::resolve(arg)?)
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Failure::Usage(format!("{}: no such file", path.display())),
        _ => e.into(),
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
