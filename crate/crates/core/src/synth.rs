//! Synthetic datasets with a known deviation process.
//!
//! Each route is a random walk of stops inside the Boston bounding box.
//! Trips start at a random stop-0 deviation and propagate it stop by stop:
//!
//! * linear: `d' = 0.8·d + 0.02·dist + 60·rush + ε`
//! * nonlinear: linear plus `offset[route] + 0.1·rush·dist`
//!
//! `rush` is evaluated at the current stop's scheduled time with the
//! default rush windows, and `dist` is the haversine distance between the
//! coordinates exactly as written to the stops file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{default_rush_windows, rush_hour, stop_distance, CoordinateMode};
use crate::ingest::{Direction, PointType, StandardType, StopLocation};
use crate::par::{self, Exec};
use crate::preprocess::TIMESTAMP_FORMAT;
use crate::seed;

pub const LAT_RANGE: (f64, f64) = (42.23, 42.40);
pub const LON_RANGE: (f64, f64) = (-71.19, -70.99);
pub const MIN_STOPS: usize = 2;
pub const MAX_STOPS: usize = 14;
const SPACING_M: (f64, f64) = (400.0, 2500.0);
const CRUISE_MPS: f64 = 7.0;
const DWELL_S: f64 = 20.0;
const METERS_PER_DEGREE: f64 = 111_194.93;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Process {
    Linear,
    Nonlinear,
}

impl Process {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Some(Process::Linear),
            "nonlinear" => Some(Process::Nonlinear),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Process::Linear => "linear",
            Process::Nonlinear => "nonlinear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_routes: usize,
    pub stops_min: usize,
    pub stops_max: usize,
    pub n_trips: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub process: Process,
    pub start_date: NaiveDate,
    pub days: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_routes: 8,
            stops_min: MIN_STOPS,
            stops_max: MAX_STOPS,
            n_trips: 500,
            noise_std: 30.0,
            seed: 0,
            process: Process::Nonlinear,
            start_date: NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date"),
            days: 90,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_routes == 0 {
            return bad("n_routes must be at least 1".into());
        }
        if self.n_trips == 0 {
            return bad("n_trips must be at least 1".into());
        }
        if self.stops_min < MIN_STOPS
            || self.stops_max > MAX_STOPS
            || self.stops_min > self.stops_max
        {
            return bad(format!(
                "stops per trip [{}, {}] must lie within [{MIN_STOPS}, {MAX_STOPS}]",
                self.stops_min, self.stops_max
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!(
                "noise_std {} must be finite and non-negative",
                self.noise_std
            ));
        }
        if self.days == 0 {
            return bad("days must be at least 1".into());
        }
        Ok(())
    }
}

/// Noise-free next-stop deviation of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub half_trip_id: String,
    pub timepoint_order: u32,
    pub deviation_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDeparture {
    pub service_date: NaiveDate,
    pub route_id: String,
    pub direction: Direction,
    pub half_trip_id: String,
    pub stop_id: String,
    pub timepoint_order: u32,
    pub point_type: PointType,
    pub standard_type: StandardType,
    pub scheduled_time: NaiveDateTime,
    pub actual_time: NaiveDateTime,
    pub scheduled_headway: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWeather {
    pub timestamp: NaiveDateTime,
    pub conditions: &'static str,
    pub temperature: f64,
    pub humidity: f64,
    pub wind_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub departures: Vec<SynthDeparture>,
    pub weather: Vec<SynthWeather>,
    pub stops: Vec<StopLocation>,
    pub truth: Vec<GroundTruth>,
}

struct Route {
    id: String,
    stops: Vec<StopLocation>,
    /// Distance from stop `k` to stop `k + 1`, meters.
    legs: Vec<f64>,
    offset: f64,
    headway: Option<f64>,
}

/// Rounds a coordinate the way it will be read back, so that generated
/// distances match the ones the feature encoder computes.
fn coordinate(v: f64) -> f64 {
    format!("{:.6}", v).parse().expect("formatted float parses")
}

fn build_route(index: usize, rng: &mut ChaCha8Rng) -> Result<Route> {
    let number = index + 1;
    let mut lat = rng.random_range(LAT_RANGE.0..LAT_RANGE.1);
    let mut lon = rng.random_range(LON_RANGE.0..LON_RANGE.1);
    let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
    let mut stops = Vec::with_capacity(MAX_STOPS);
    for k in 0..MAX_STOPS {
        if k > 0 {
            let step = rng.random_range(SPACING_M.0..SPACING_M.1);
            heading += rng.random_range(-0.6..0.6);
            let mut next = None;
            for _ in 0..16 {
                let (nlat, nlon) = (
                    lat + step * heading.cos() / METERS_PER_DEGREE,
                    lon + step * heading.sin() / (METERS_PER_DEGREE * lat.to_radians().cos()),
                );
                if (LAT_RANGE.0..LAT_RANGE.1).contains(&nlat)
                    && (LON_RANGE.0..LON_RANGE.1).contains(&nlon)
                {
                    next = Some((nlat, nlon));
                    break;
                }
                heading = rng.random_range(0.0..std::f64::consts::TAU);
            }
            // Fall back to a step of the same length towards the box centre.
            (lat, lon) = next.unwrap_or_else(|| {
                let centre = (
                    (LAT_RANGE.0 + LAT_RANGE.1) / 2.0,
                    (LON_RANGE.0 + LON_RANGE.1) / 2.0,
                );
                let north = (centre.0 - lat) * METERS_PER_DEGREE;
                let east = (centre.1 - lon) * METERS_PER_DEGREE * lat.to_radians().cos();
                heading = east.atan2(north);
                let frac = (step / north.hypot(east)).min(1.0);
                (lat + frac * (centre.0 - lat), lon + frac * (centre.1 - lon))
            });
        }
        stops.push(StopLocation {
            stop_id: (number * 100 + k + 1).to_string(),
            x: coordinate(lon),
            y: coordinate(lat),
            name: format!("Route {number} stop {}", k + 1),
        });
    }
    let legs = stops
        .windows(2)
        .map(|w| stop_distance((w[0].x, w[0].y), (w[1].x, w[1].y), CoordinateMode::Geodetic))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Route {
        id: number.to_string(),
        stops,
        legs,
        offset: rng.random_range(-45.0..45.0),
        headway: number
            .is_multiple_of(2)
            .then(|| f64::from(rng.random_range(10u32..=30) * 60)),
    })
}

fn shift(t: NaiveDateTime, seconds: f64) -> NaiveDateTime {
    t + TimeDelta::nanoseconds((seconds * 1e9).round() as i64)
}

struct Trip {
    departures: Vec<SynthDeparture>,
    truth: Vec<GroundTruth>,
}

fn simulate_trip(config: &SynthConfig, routes: &[Route], index: usize) -> Result<Trip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(
        config.seed,
        "synth.trip",
        index as u64,
    ));
    let route = &routes[rng.random_range(0..routes.len())];
    let direction = if rng.random_bool(0.5) {
        Direction::Outbound
    } else {
        Direction::Inbound
    };
    let n_stops = rng.random_range(config.stops_min..=config.stops_max);
    let service_date =
        config.start_date + TimeDelta::days(i64::from(rng.random_range(0..config.days)));
    let start = service_date.and_hms_opt(5, 0, 0).expect("valid time")
        + TimeDelta::minutes(rng.random_range(0..17 * 60));
    let first = Normal::new(150.0, 150.0).expect("valid normal");
    let noise =
        Normal::new(0.0, config.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let windows = default_rush_windows();

    // Outbound runs stop 1 → 14, inbound runs the same stops backwards.
    let order: Vec<usize> = match direction {
        Direction::Outbound => (0..n_stops).collect(),
        Direction::Inbound => (MAX_STOPS - n_stops..MAX_STOPS).rev().collect(),
    };
    let half_trip_id = (60_000_000 + index).to_string();
    let mut departures = Vec::with_capacity(n_stops);
    let mut truth = Vec::with_capacity(n_stops - 1);
    let mut scheduled = start;
    let mut deviation: f64 = first.sample(&mut rng);
    for (pos, &stop) in order.iter().enumerate() {
        if pos > 0 {
            let prev = order[pos - 1];
            let dist = route.legs[prev.min(stop)];
            let rush = f64::from(rush_hour(scheduled, &windows));
            scheduled += TimeDelta::seconds((dist / CRUISE_MPS + DWELL_S).round() as i64);
            let mut expected = 0.8 * deviation + 0.02 * dist + 60.0 * rush;
            if config.process == Process::Nonlinear {
                expected += route.offset + 0.1 * rush * dist;
            }
            truth.push(GroundTruth {
                half_trip_id: half_trip_id.clone(),
                timepoint_order: pos as u32 + 1,
                deviation_s: expected,
            });
            deviation = expected
                + if config.noise_std > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
        }
        let actual = shift(scheduled, deviation);
        // Carry the deviation that will be read back, not the unrounded one.
        deviation = (actual - scheduled).num_nanoseconds().expect("bounded") as f64 / 1e9;
        departures.push(SynthDeparture {
            service_date,
            route_id: route.id.clone(),
            direction,
            half_trip_id: half_trip_id.clone(),
            stop_id: route.stops[stop].stop_id.clone(),
            timepoint_order: pos as u32 + 1,
            point_type: match pos {
                0 => PointType::Startpoint,
                p if p + 1 == n_stops => PointType::Endpoint,
                _ => PointType::Midpoint,
            },
            standard_type: if route.headway.is_some() {
                StandardType::Headway
            } else {
                StandardType::Schedule
            },
            scheduled_time: scheduled,
            actual_time: actual,
            scheduled_headway: route.headway,
        });
    }
    Ok(Trip { departures, truth })
}

const CONDITIONS: [&str; 8] = [
    "Clear",
    "Partially cloudy",
    "Overcast",
    "Rain, Overcast",
    "Rain, Partially cloudy",
    "Snow, Overcast",
    "Wind, Partially cloudy",
    "Clear",
];

fn hourly_weather(config: &SynthConfig) -> Vec<SynthWeather> {
    let mut rng = seed::rng(config.seed, "synth.weather");
    let begin = config.start_date.and_hms_opt(0, 0, 0).expect("valid time");
    // One extra day covers trips running past midnight.
    let hours = (i64::from(config.days) + 1) * 24;
    let mut condition = 0usize;
    (0..hours)
        .map(|h| {
            if rng.random_bool(0.2) {
                condition = rng.random_range(0..CONDITIONS.len());
            }
            SynthWeather {
                timestamp: begin + TimeDelta::hours(h),
                conditions: CONDITIONS[condition],
                temperature: f64::from(rng.random_range(-100..=150)) / 10.0,
                humidity: f64::from(rng.random_range(300..=1000)) / 10.0,
                wind_speed: f64::from(rng.random_range(0..=400)) / 10.0,
            }
        })
        .collect()
}

/// Generates a dataset; identical configs give identical data under either
/// execution mode.
pub fn generate(config: &SynthConfig, exec: Exec) -> Result<SynthData> {
    config.validate()?;
    let mut route_rng = seed::rng(config.seed, "synth.routes");
    let routes = (0..config.n_routes)
        .map(|i| build_route(i, &mut route_rng))
        .collect::<Result<Vec<_>>>()?;
    let trips = par::map_range(exec, config.n_trips, |i| simulate_trip(config, &routes, i));
    let mut departures = Vec::new();
    let mut truth = Vec::new();
    for trip in trips {
        let trip = trip?;
        departures.extend(trip.departures);
        truth.extend(trip.truth);
    }
    Ok(SynthData {
        departures,
        weather: hourly_weather(config),
        stops: routes.into_iter().flat_map(|r| r.stops).collect(),
        truth,
    })
}

fn num(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

impl SynthData {
    pub fn write_departures<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "service_date",
            "route_id",
            "direction",
            "half_trip_id",
            "stop_id",
            "timepoint_id",
            "timepoint_order",
            "point_type",
            "standard_type",
            "scheduled_time",
            "actual_time",
            "scheduled_headway",
            "headway",
        ])?;
        for d in &self.departures {
            out.write_record([
                d.service_date.to_string(),
                d.route_id.clone(),
                d.direction.as_str().to_string(),
                d.half_trip_id.clone(),
                d.stop_id.clone(),
                format!("tp{}", d.stop_id),
                d.timepoint_order.to_string(),
                d.point_type.as_str().to_string(),
                d.standard_type.as_str().to_string(),
                d.scheduled_time.format(TIMESTAMP_FORMAT).to_string(),
                d.actual_time.format(TIMESTAMP_FORMAT).to_string(),
                num(d.scheduled_headway),
                String::new(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_weather<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["datetime", "conditions", "temp", "humidity", "windspeed"])?;
        for o in &self.weather {
            out.write_record([
                o.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
                o.conditions.to_string(),
                format!("{:?}", o.temperature),
                format!("{:?}", o.humidity),
                format!("{:?}", o.wind_speed),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_stops<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["stop_id", "stop_lon", "stop_lat", "stop_name"])?;
        for s in &self.stops {
            out.write_record([
                s.stop_id.clone(),
                format!("{:.6}", s.x),
                format!("{:.6}", s.y),
                s.name.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_truth<W: Write>(&self, w: W) -> Result<()> {
        write_ground_truth(w, &self.truth)
    }

    /// Writes `departures.csv`, `weather.csv`, `stops.csv` and
    /// `ground_truth.csv` into `dir` and returns their paths.
    pub fn write_bundle(&self, dir: &Path) -> Result<SynthPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths::in_dir(dir);
        let create = |p: &Path| {
            std::fs::File::create(p)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(p, e))
        };
        self.write_departures(create(&paths.departures)?)?;
        self.write_weather(create(&paths.weather)?)?;
        self.write_stops(create(&paths.stops)?)?;
        self.write_truth(create(&paths.ground_truth)?)?;
        Ok(paths)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPaths {
    pub departures: PathBuf,
    pub weather: PathBuf,
    pub stops: PathBuf,
    pub ground_truth: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        SynthPaths {
            departures: dir.join("departures.csv"),
            weather: dir.join("weather.csv"),
            stops: dir.join("stops.csv"),
            ground_truth: dir.join("ground_truth.csv"),
        }
    }
}

pub fn write_ground_truth<W: Write>(w: W, truth: &[GroundTruth]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["half_trip_id", "timepoint_order", "true_deviation_s"])?;
    for t in truth {
        out.write_record([
            t.half_trip_id.clone(),
            t.timepoint_order.to_string(),
            format!("{:?}", t.deviation_s),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ground_truth<R: std::io::Read>(r: R) -> Result<Vec<GroundTruth>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |detail: String| Error::Malformed {
            what: "ground truth row",
            line,
            detail,
        };
        if row.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", row.len())));
        }
        out.push(GroundTruth {
            half_trip_id: row[0].to_string(),
            timepoint_order: row[1]
                .parse()
                .map_err(|_| bad(format!("order `{}`", &row[1])))?,
            deviation_s: row[2]
                .parse()
                .map_err(|_| bad(format!("deviation `{}`", &row[2])))?,
        });
    }
    Ok(out)
}

/// Root-mean-square difference between ground truth and predictions keyed
/// by `(half_trip_id, timepoint_order)`. Every truth key must have exactly
/// one prediction and vice versa.
pub fn oracle_rmse(truth: &[GroundTruth], predictions: &[GroundTruth]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Empty("ground truth"));
    }
    let mut by_key: BTreeMap<(&str, u32), f64> = BTreeMap::new();
    for p in predictions {
        if by_key
            .insert((&p.half_trip_id, p.timepoint_order), p.deviation_s)
            .is_some()
        {
            return Err(Error::Misaligned(format!(
                "duplicate prediction for {}#{}",
                p.half_trip_id, p.timepoint_order
            )));
        }
    }
    if by_key.len() != truth.len() {
        return Err(Error::Misaligned(format!(
            "{} predictions for {} ground-truth segments",
            by_key.len(),
            truth.len()
        )));
    }
    let mut total = 0.0f64;
    for t in truth {
        let p = by_key
            .get(&(t.half_trip_id.as_str(), t.timepoint_order))
            .ok_or_else(|| {
                Error::Misaligned(format!(
                    "no prediction for {}#{}",
                    t.half_trip_id, t.timepoint_order
                ))
            })?;
        let e = p - t.deviation_s;
        total += e * e;
    }
    Ok((total / truth.len() as f64).sqrt())
}
