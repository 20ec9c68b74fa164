//! Flat `key = value` run configuration.
//!
//! Values are applied in order: built-in defaults, then the `--config`
//! file, then command-line flags.

use std::path::{Path, PathBuf};

use busdev_core::features::{
    CoordinateMode, FeatureSchema, DEFAULT_FAR_THRESHOLD_M, SCHEMA_VERSION,
};
use busdev_core::nn::NetworkSpec;
use busdev_core::synth::{Process, SynthConfig};
use busdev_core::train_eval::{SplitFractions, TrainConfig};
use busdev_core::{ingest, Exec};
use chrono::NaiveDate;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub workdir: PathBuf,
    pub departures: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub stops: Option<PathBuf>,
    pub delimiter: u8,
    pub seed: u64,
    pub threads: Option<usize>,
    pub k: f64,
    pub far_threshold_m: f64,
    pub coordinate_mode: CoordinateMode,
    pub schema_version: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub split: SplitFractions,
    pub split_by_trip: bool,
    pub hidden: Vec<usize>,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            workdir: PathBuf::from("."),
            departures: None,
            weather: None,
            stops: None,
            delimiter: b',',
            seed: 0,
            threads: None,
            k: 2.0,
            far_threshold_m: DEFAULT_FAR_THRESHOLD_M,
            coordinate_mode: CoordinateMode::Geodetic,
            schema_version: SCHEMA_VERSION.to_string(),
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            split: train.split,
            split_by_trip: false,
            hidden: vec![512, 128, 64],
            synth: SynthConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!(
            "invalid value `{value}` for `{key}`"
        ))),
    }
}

impl RunConfig {
    /// Sets one key. Keys are case-insensitive; `-` and `_` are equivalent.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "workdir" => self.workdir = PathBuf::from(value),
            "departures" => self.departures = Some(PathBuf::from(value)),
            "weather" => self.weather = Some(PathBuf::from(value)),
            "stops" => self.stops = Some(PathBuf::from(value)),
            "delimiter" => {
                self.delimiter = match value {
                    "\\t" | "tab" => b'\t',
                    v if v.len() == 1 => v.as_bytes()[0],
                    _ => {
                        return Err(CliError::Usage(format!(
                            "delimiter must be one byte, got `{value}`"
                        )))
                    }
                }
            }
            "seed" => {
                self.seed = parse(k, value)?;
                self.synth.seed = self.seed;
            }
            "threads" => {
                let n: usize = parse(k, value)?;
                if n == 0 {
                    return Err(CliError::Usage("threads must be at least 1".into()));
                }
                self.threads = Some(n);
            }
            "k" => self.k = parse(k, value)?,
            "far_threshold_m" => self.far_threshold_m = parse(k, value)?,
            "coordinate_mode" => {
                self.coordinate_mode = CoordinateMode::parse(value).ok_or_else(|| {
                    CliError::Usage(format!(
                        "coordinate_mode must be geodetic or projected, got `{value}`"
                    ))
                })?
            }
            "schema_version" => self.schema_version = value.to_string(),
            "epochs" => self.epochs = parse(k, value)?,
            "learning_rate" | "lr" => self.learning_rate = parse(k, value)?,
            "batch_size" => self.batch_size = parse(k, value)?,
            "split" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| parse(k, p.trim()))
                    .collect::<Result<_, _>>()?;
                let [train, val, test] = parts[..] else {
                    return Err(CliError::Usage(format!(
                        "split needs three fractions, got `{value}`"
                    )));
                };
                self.split = SplitFractions { train, val, test };
            }
            "split_by_trip" => self.split_by_trip = parse_bool(k, value)?,
            "spec" | "hidden" => {
                self.hidden =
                    NetworkSpec::parse_hidden(value).map_err(|e| CliError::Usage(e.to_string()))?
            }
            "routes" | "n_routes" => self.synth.n_routes = parse(k, value)?,
            "trips" | "n_trips" => self.synth.n_trips = parse(k, value)?,
            "stops_min" => self.synth.stops_min = parse(k, value)?,
            "stops_max" => self.synth.stops_max = parse(k, value)?,
            "noise" | "noise_std" => self.synth.noise_std = parse(k, value)?,
            "process" => {
                self.synth.process = Process::parse(value).ok_or_else(|| {
                    CliError::Usage(format!(
                        "process must be linear or nonlinear, got `{value}`"
                    ))
                })?
            }
            "start_date" => {
                self.synth.start_date = NaiveDate::parse_from_str(value, "%Y-%m-%d")
                    .map_err(|_| CliError::Usage(format!("invalid start_date `{value}`")))?
            }
            "days" => self.synth.days = parse(k, value)?,
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown configuration key `{key}`"
                )))
            }
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{}: expected `key = value`",
                    origin.display(),
                    i + 1
                ))
            })?;
            self.set(key, value)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", origin.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        self.apply_text(&text, path)
    }

    pub fn departures_path(&self) -> PathBuf {
        self.departures
            .clone()
            .unwrap_or_else(|| self.workdir.join("departures.csv"))
    }

    pub fn weather_path(&self) -> PathBuf {
        self.weather
            .clone()
            .unwrap_or_else(|| self.workdir.join("weather.csv"))
    }

    pub fn stops_path(&self) -> PathBuf {
        self.stops
            .clone()
            .unwrap_or_else(|| self.workdir.join("stops.csv"))
    }

    pub fn segments_path(&self) -> PathBuf {
        self.workdir.join("segments.csv")
    }

    pub fn model_path(&self) -> PathBuf {
        self.workdir.join("model.txt")
    }

    pub fn history_path(&self) -> PathBuf {
        self.workdir.join("history.csv")
    }

    pub fn ablation_path(&self) -> PathBuf {
        self.workdir.join("ablation.csv")
    }

    pub fn parse_config(&self) -> ingest::ParseConfig {
        ingest::ParseConfig {
            delimiter: self.delimiter,
            exec: Exec::Parallel,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed: self.seed,
            split: self.split,
            split_by_trip: self.split_by_trip,
            exec: Exec::Parallel,
        }
    }

    /// Schema over the routes of `segments`, with this run's settings.
    pub fn schema(
        &self,
        version: String,
        segments: &[busdev_core::preprocess::TripSegment],
    ) -> FeatureSchema {
        let mut schema = FeatureSchema::from_segments(segments);
        schema.version = version;
        schema.far_threshold_m = self.far_threshold_m;
        schema.coordinate_mode = self.coordinate_mode;
        schema
    }
}
