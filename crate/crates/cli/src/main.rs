//! `ramanqpt`: simulate tomography datasets for the memory model, reconstruct
//! process matrices, score fidelities, and run storage-time sweeps.
//!
//! Exit codes: 0 success, 1 output failure, 2 a reconstruction did not
//! converge, 3 bad input (arguments, config or data files).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use ramanqpt_core::sweep::{self, SweepConfig, SweepError};
use ramanqpt_core::tomography::ReconstructionRecord;
use ramanqpt_core::{
    linear_inversion, mle_reconstruct, monte_carlo_errors, process_fidelity, CountTable, FidelityEstimate,
    ProcessMatrix, ReconstructionResult, TomographyDataset, TomographyError,
};

const DEFAULTS_NOTE: &str = "model defaults, not measured data";

#[derive(Debug, Parser)]
#[command(
    name = "ramanqpt",
    version,
    about = "Simulated process tomography of a polarization quantum memory"
)]
struct Cli {
    /// Print the default sweep configuration as JSON and exit.
    #[arg(long, global = true)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON sweep configuration; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Linear,
    Mle,
}

impl MethodArg {
    fn suffix(self) -> &'static str {
        match self {
            MethodArg::Linear => "linear",
            MethodArg::Mle => "mle",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write memory_on.json, memory_off.json and transmitted.json for one storage time.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Storage time in ns; defaults to the first grid point.
        #[arg(long)]
        storage_time: Option<f64>,
    },
    /// Reconstruct χ from a dataset; writes <stem>.<method>.json.
    Reconstruct {
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "mle")]
        method: MethodArg,
    },
    /// Process fidelity between two channels, each a dataset or a reconstruction.
    /// A dataset as the first argument also gets a Monte-Carlo error bar.
    Fidelity {
        on: PathBuf,
        off: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Monte-Carlo trials; defaults to the configured mc_trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the storage-time sweep; writes sweep.csv and point_NNN.json.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
    #[error("{path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    fn input(path: &Path, message: impl ToString) -> Self {
        CliError::Input {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Output { .. } => 1,
            _ => 3,
        }
    }
}

/// Outcome of a successful command: whether every fit converged.
struct Converged(bool);

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(path, e))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let output = |source| CliError::Output {
        path: dir.join(name).display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(output)?;
    fs::write(dir.join(name), contents).map_err(output)
}

fn load_config(common: &Common) -> Result<SweepConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => SweepConfig::from_json(&read(path)?).map_err(|e| CliError::input(path, e))?,
        None => SweepConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.shots.seed = seed;
    }
    Ok(config)
}

enum ChannelInput {
    Dataset(CountTable),
    Result(ProcessMatrix),
}

/// Reads either a reconstruction record or a tomography dataset.
fn load_channel(path: &Path) -> Result<ChannelInput, CliError> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?;
    if value.get("chi_real").is_some() {
        let record: ReconstructionRecord = serde_json::from_value(value).map_err(|e| CliError::input(path, e))?;
        let chi = record.chi().map_err(|e| CliError::input(path, e))?;
        Ok(ChannelInput::Result(chi))
    } else {
        let dataset = TomographyDataset::from_json(&text).map_err(|e| CliError::input(path, e))?;
        Ok(ChannelInput::Dataset(CountTable::from(&dataset)))
    }
}

fn simulate(common: &Common, storage_time: Option<f64>) -> Result<Converged, CliError> {
    let config = load_config(common)?;
    let t = storage_time.unwrap_or(config.storage_times[0]);
    if !(t.is_finite() && t >= 0.0) {
        return Err(CliError::Usage(format!(
            "storage time must be finite and non-negative, got {t}"
        )));
    }
    let datasets =
        sweep::simulate_channels(&config.channel, t, &config.shots).map_err(|e| CliError::Usage(e.to_string()))?;
    for (name, ds) in ["memory_on.json", "memory_off.json", "transmitted.json"]
        .iter()
        .zip(&datasets)
    {
        write(&common.out, name, &ds.to_json())?;
    }
    Ok(Converged(true))
}

fn reconstruct(dataset: &Path, common: &Common, method: MethodArg) -> Result<Converged, CliError> {
    let config = load_config(common)?;
    let ds = TomographyDataset::from_json(&read(dataset)?).map_err(|e| CliError::input(dataset, e))?;
    let mut table = CountTable::from(&ds);
    if let Some(seed) = common.seed {
        table.seed = seed;
    }
    let result: ReconstructionResult = match method {
        MethodArg::Linear => linear_inversion(&table)?,
        MethodArg::Mle => mle_reconstruct(&table, &config.mle)?,
    };
    let stem = dataset.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    write(
        &common.out,
        &format!("{stem}.{}.json", method.suffix()),
        &result.to_json(),
    )?;
    Ok(Converged(result.converged))
}

fn fidelity(on: &Path, off: &Path, common: &Common, trials: Option<usize>) -> Result<Converged, CliError> {
    let config = load_config(common)?;
    let trials = trials.unwrap_or(config.mc_trials);
    let fit = |table: &CountTable| mle_reconstruct(table, &config.mle);
    let (off_chi, mut converged) = match load_channel(off)? {
        ChannelInput::Result(chi) => (chi, true),
        ChannelInput::Dataset(table) => {
            let r = fit(&table)?;
            (r.chi, r.converged)
        }
    };
    let estimate = match load_channel(on)? {
        ChannelInput::Dataset(mut table) => {
            if let Some(seed) = common.seed {
                table.seed = seed;
            }
            match monte_carlo_errors(&table, &off_chi, trials, &config.mle) {
                Ok(est) => est,
                Err(TomographyError::TooManyFailures { .. }) => {
                    converged = false;
                    FidelityEstimate {
                        value: process_fidelity(&fit(&table)?.chi, &off_chi)?,
                        std_err: f64::NAN,
                        trials: 0,
                        dropped: trials,
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        ChannelInput::Result(on_chi) => FidelityEstimate {
            value: process_fidelity(&on_chi, &off_chi)?,
            std_err: 0.0,
            trials: 0,
            dropped: 0,
        },
    };
    println!("F = {:.6} ± {:.6}", estimate.value, estimate.std_err);
    let json = serde_json::to_string_pretty(&estimate).expect("estimate serializes");
    write(&common.out, "fidelity.json", &json)?;
    Ok(Converged(converged))
}

fn run_sweep(common: &Common) -> Result<Converged, CliError> {
    let config = load_config(common)?;
    let report = sweep::run_sweep(&config).map_err(|e| match e {
        SweepError::Tomography(e) => CliError::Tomography(e),
        e => CliError::Usage(e.to_string()),
    })?;
    let csv = report.to_csv().map_err(|e| CliError::Usage(e.to_string()))?;
    write(&common.out, "sweep.csv", &csv)?;
    for (i, point) in report.points.iter().enumerate() {
        let json = serde_json::to_string_pretty(point).expect("point serializes");
        write(&common.out, &format!("point_{i:03}.json"), &json)?;
    }
    Ok(Converged(report.rows().iter().all(|r| r.converged)))
}

fn print_defaults() {
    let config = SweepConfig {
        note: Some(DEFAULTS_NOTE.into()),
        ..SweepConfig::default()
    };
    let json = serde_json::to_string_pretty(&config).expect("config serializes");
    // a closed pipe (e.g. `| head`) is not an error here
    let _ = writeln!(std::io::stdout(), "{json}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(3);
        }
    };
    if cli.print_defaults {
        print_defaults();
        return ExitCode::SUCCESS;
    }
    let outcome = match &cli.command {
        Some(Command::Simulate { common, storage_time }) => simulate(common, *storage_time),
        Some(Command::Reconstruct {
            dataset,
            common,
            method,
        }) => reconstruct(dataset, common, *method),
        Some(Command::Fidelity {
            on,
            off,
            common,
            trials,
        }) => fidelity(on, off, common, *trials),
        Some(Command::Sweep { common }) => run_sweep(common),
        None => Err(CliError::Usage("no command given; see --help".into())),
    };
    match outcome {
        Ok(Converged(true)) => ExitCode::SUCCESS,
        Ok(Converged(false)) => {
            eprintln!("ramanqpt: reconstruction did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("ramanqpt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
