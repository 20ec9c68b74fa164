use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error(transparent)]
    Core(#[from] busdev_core::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::MissingInput(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) | CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "busdev",
    version,
    about = "Bus departure-time deviation prediction pipeline"
)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory holding stage inputs and outputs.
    #[arg(long, global = true, value_name = "DIR")]
    workdir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct InputArgs {
    #[arg(long, value_name = "FILE")]
    departures: Option<String>,
    #[arg(long, value_name = "FILE")]
    weather: Option<String>,
    #[arg(long, value_name = "FILE")]
    stops: Option<String>,
    /// Field delimiter of the input tables (`tab` for tabs).
    #[arg(long)]
    delimiter: Option<String>,
}

#[derive(Debug, Args, Default)]
struct TrainArgs {
    /// Hidden layer widths, e.g. `512,128,64`; `linear` for none.
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    /// Train/val/test fractions, e.g. `0.7,0.2,0.1`.
    #[arg(long)]
    split: Option<String>,
    /// Keep every segment of a trip in one split part.
    #[arg(long)]
    split_by_trip: bool,
    #[arg(long)]
    far_threshold_m: Option<String>,
    #[arg(long)]
    coordinate_mode: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, filter outliers and write trip segments.
    Preprocess {
        #[command(flatten)]
        inputs: InputArgs,
        /// Outlier multiplier: keep deviations within mean ± k·σ.
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        schema_version: Option<String>,
    },
    /// Train one network and save the model artifact.
    Train {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train and compare several architectures.
    Ablate {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Semicolon-separated hidden layer lists; defaults to the
        /// seven-architecture preset.
        #[arg(long)]
        specs: Option<String>,
    },
    /// Predict next-stop departures for a query file.
    Predict {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        queries: PathBuf,
    },
    /// Generate a synthetic dataset bundle.
    Synth {
        #[arg(long)]
        routes: Option<String>,
        #[arg(long)]
        trips: Option<String>,
        #[arg(long)]
        stops_min: Option<String>,
        #[arg(long)]
        stops_max: Option<String>,
        /// Standard deviation of the per-segment noise, seconds.
        #[arg(long)]
        noise: Option<String>,
        /// `linear` or `nonlinear`.
        #[arg(long)]
        process: Option<String>,
        #[arg(long)]
        start_date: Option<String>,
        #[arg(long)]
        days: Option<String>,
    },
    /// Evaluate a trained model and write the report bundle.
    Report {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Output directory (defaults to `<workdir>/report`).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn set_all(cfg: &mut RunConfig, pairs: &[(&str, &Option<String>)]) -> Result<(), CliError> {
    for (key, value) in pairs {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(())
}

impl InputArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        set_all(
            cfg,
            &[
                ("departures", &self.departures),
                ("weather", &self.weather),
                ("stops", &self.stops),
                ("delimiter", &self.delimiter),
            ],
        )
    }
}

impl TrainArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        set_all(
            cfg,
            &[
                ("spec", &self.spec),
                ("epochs", &self.epochs),
                ("learning_rate", &self.lr),
                ("batch_size", &self.batch_size),
                ("split", &self.split),
                ("far_threshold_m", &self.far_threshold_m),
                ("coordinate_mode", &self.coordinate_mode),
            ],
        )?;
        if self.split_by_trip {
            cfg.split_by_trip = true;
        }
        Ok(())
    }
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(threads) = cli.threads {
        cfg.set("threads", &threads.to_string())?;
    }
    if let Some(dir) = &cli.workdir {
        cfg.workdir = dir.clone();
    }
    match &cli.command {
        Command::Preprocess {
            inputs,
            k,
            schema_version,
        } => {
            inputs.apply(&mut cfg)?;
            set_all(&mut cfg, &[("k", k), ("schema_version", schema_version)])?;
        }
        Command::Train { inputs, train }
        | Command::Ablate { inputs, train, .. }
        | Command::Report { inputs, train, .. } => {
            inputs.apply(&mut cfg)?;
            train.apply(&mut cfg)?;
        }
        Command::Predict { inputs, .. } => inputs.apply(&mut cfg)?,
        Command::Synth {
            routes,
            trips,
            stops_min,
            stops_max,
            noise,
            process,
            start_date,
            days,
        } => set_all(
            &mut cfg,
            &[
                ("routes", routes),
                ("trips", trips),
                ("stops_min", stops_min),
                ("stops_max", stops_max),
                ("noise", noise),
                ("process", process),
                ("start_date", start_date),
                ("days", days),
            ],
        )?,
    }
    Ok(cfg)
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("cannot start thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = configure(&cli)?;
    init_threads(cfg.threads)?;
    match cli.command {
        Command::Preprocess { .. } => commands::preprocess(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Ablate { specs, .. } => commands::ablate(&cfg, specs.as_deref()),
        Command::Predict { model, queries, .. } => {
            commands::predict(&cfg, &model.unwrap_or_else(|| cfg.model_path()), &queries)
        }
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Report { model, out, .. } => commands::report(
            &cfg,
            &model.unwrap_or_else(|| cfg.model_path()),
            &out.unwrap_or_else(|| cfg.workdir.join("report")),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
