//! Parsing of the three source tables: departure events, hourly weather and
//! stop locations.
//!
//! Departure rows that fail validation are not fatal; each one becomes a
//! [`Reject`] carrying its physical line number, so that
//! `records + rejects == data rows` always holds.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, TimeDelta};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

const PARSE_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Inbound,
    Outbound,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inbound" => Some(Direction::Inbound),
            "outbound" => Some(Direction::Outbound),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Inbound => "inbound",
            Direction::Outbound => "outbound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointType {
    Startpoint,
    Midpoint,
    Endpoint,
}

impl PointType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "startpoint" => Some(PointType::Startpoint),
            "midpoint" => Some(PointType::Midpoint),
            "endpoint" => Some(PointType::Endpoint),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PointType::Startpoint => "startpoint",
            PointType::Midpoint => "midpoint",
            PointType::Endpoint => "endpoint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StandardType {
    Schedule,
    Headway,
}

impl StandardType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "schedule" => Some(StandardType::Schedule),
            "headway" => Some(StandardType::Headway),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StandardType::Schedule => "schedule",
            StandardType::Headway => "headway",
        }
    }
}

/// One departure event at one timepoint of one half-trip.
#[derive(Debug, Clone, PartialEq)]
pub struct DepartureRecord {
    pub service_date: NaiveDate,
    pub route_id: String,
    pub direction: Direction,
    pub half_trip_id: String,
    pub stop_id: String,
    pub timepoint_id: String,
    pub timepoint_order: u32,
    pub point_type: PointType,
    pub standard_type: StandardType,
    pub scheduled_time: NaiveDateTime,
    pub actual_time: NaiveDateTime,
    pub scheduled_headway: Option<f64>,
    pub headway: Option<f64>,
}

/// Weather categories in feature-slot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeatherCondition {
    Cloudy,
    Rainy,
    Clear,
    Snowy,
    Windy,
}

impl WeatherCondition {
    pub const ALL: [WeatherCondition; 5] = [
        WeatherCondition::Cloudy,
        WeatherCondition::Rainy,
        WeatherCondition::Clear,
        WeatherCondition::Snowy,
        WeatherCondition::Windy,
    ];

    /// Keyword table in precedence order: the first category with a keyword
    /// contained in the raw string wins.
    const PRECEDENCE: [(WeatherCondition, &'static [&'static str]); 5] = [
        (
            WeatherCondition::Snowy,
            &["snow", "sleet", "ice", "freezing", "hail", "blizzard"],
        ),
        (
            WeatherCondition::Rainy,
            &["rain", "drizzle", "shower", "thunder", "precipitation"],
        ),
        (WeatherCondition::Windy, &["wind", "gust"]),
        (
            WeatherCondition::Cloudy,
            &["cloud", "overcast", "fog", "mist", "haze"],
        ),
        (WeatherCondition::Clear, &["clear", "sunny", "fair"]),
    ];

    /// Maps a raw provider condition string onto a category.
    pub fn from_raw(raw: &str) -> Option<Self> {
        let lower = raw.to_ascii_lowercase();
        Self::PRECEDENCE
            .iter()
            .find(|(_, keys)| keys.iter().any(|k| lower.contains(k)))
            .map(|(c, _)| *c)
    }

    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WeatherCondition::Cloudy => "cloudy",
            WeatherCondition::Rainy => "rainy",
            WeatherCondition::Clear => "clear",
            WeatherCondition::Snowy => "snowy",
            WeatherCondition::Windy => "windy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherObservation {
    pub timestamp: NaiveDateTime,
    pub condition: WeatherCondition,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    pub wind_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopLocation {
    pub stop_id: String,
    pub x: f64,
    pub y: f64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    FieldCount,
    BadServiceDate,
    MissingScheduledTime,
    BadScheduledTime,
    MissingActualTime,
    BadActualTime,
    BadTimepointOrder,
    EmptyStopId,
    BadDirection,
    BadPointType,
    BadStandardType,
    BadHeadway,
    BadTimestamp,
    UnmappedCondition(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::FieldCount => "field_count",
            RejectReason::BadServiceDate => "bad_service_date",
            RejectReason::MissingScheduledTime => "missing_scheduled_time",
            RejectReason::BadScheduledTime => "bad_scheduled_time",
            RejectReason::MissingActualTime => "missing_actual_time",
            RejectReason::BadActualTime => "bad_actual_time",
            RejectReason::BadTimepointOrder => "bad_timepoint_order",
            RejectReason::EmptyStopId => "empty_stop_id",
            RejectReason::BadDirection => "bad_direction",
            RejectReason::BadPointType => "bad_point_type",
            RejectReason::BadStandardType => "bad_standard_type",
            RejectReason::BadHeadway => "bad_headway",
            RejectReason::BadTimestamp => "bad_timestamp",
            RejectReason::UnmappedCondition(raw) => return write!(f, "unmapped_condition:{raw}"),
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line_no: u64,
    pub reason: RejectReason,
    pub raw_row: String,
}

#[derive(Debug, Clone, Copy)]
pub struct ParseConfig {
    pub delimiter: u8,
    pub exec: Exec,
}

impl Default for ParseConfig {
    fn default() -> Self {
        ParseConfig {
            delimiter: b',',
            exec: Exec::Parallel,
        }
    }
}

fn normalize_header(h: &str) -> String {
    h.trim_start_matches('\u{feff}')
        .trim()
        .to_ascii_lowercase()
        .replace([' ', '-'], "_")
}

/// Resolves each canonical column (with accepted aliases) to its index.
fn locate_columns(
    headers: &csv::StringRecord,
    wanted: &[(&str, &[&str])],
    optional: &[&str],
) -> Result<Vec<Option<usize>>> {
    let names: Vec<String> = headers.iter().map(normalize_header).collect();
    wanted
        .iter()
        .map(|(canonical, aliases)| {
            let idx = names
                .iter()
                .position(|n| n == canonical || aliases.contains(&n.as_str()));
            match idx {
                Some(i) => Ok(Some(i)),
                None if optional.contains(canonical) => Ok(None),
                None => Err(Error::MissingColumn((*canonical).to_string())),
            }
        })
        .collect()
}

fn reader<R: Read>(stream: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(stream)
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let head = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(head, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
        .ok()
}

/// Parses a local wall-clock timestamp.
///
/// Accepts ISO-like date-times (optionally with fractional seconds and a
/// trailing `Z`, which is ignored). Date-times on 1900-01-01/02 follow the
/// MBTA convention of time-of-day offsets and are rebased onto the service
/// date. A bare `H:MM:SS` (hours may exceed 23) is taken relative to the
/// service date.
pub fn parse_timestamp(s: &str, service_date: Option<NaiveDate>) -> Option<NaiveDateTime> {
    let s = s.trim().trim_end_matches('Z');
    if s.is_empty() {
        return None;
    }
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    if let Some(dt) = FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
    {
        let epoch = NaiveDate::from_ymd_opt(1900, 1, 1)?.and_time(NaiveTime::MIN);
        return match service_date {
            Some(day) if dt.date().year_ce().1 == 1900 && dt.date().ordinal() <= 2 => {
                Some(day.and_time(NaiveTime::MIN) + (dt - epoch))
            }
            _ => Some(dt),
        };
    }
    let day = service_date?;
    let mut parts = s.split(':');
    let h: i64 = parts.next()?.parse().ok()?;
    let m: i64 = parts.next()?.parse().ok()?;
    let sec: f64 = parts.next().unwrap_or("0").parse().ok()?;
    if parts.next().is_some() || !(0..60).contains(&m) || !(0.0..60.0).contains(&sec) || h < 0 {
        return None;
    }
    let nanos = (sec * 1e9).round() as i64;
    Some(
        day.and_time(NaiveTime::MIN)
            + TimeDelta::seconds(h * 3600 + m * 60)
            + TimeDelta::nanoseconds(nanos),
    )
}

fn optional_number(s: &str) -> std::result::Result<Option<f64>, ()> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or(())
}

const DEPARTURE_COLUMNS: [(&str, &[&str]); 13] = [
    ("service_date", &[]),
    ("route_id", &[]),
    ("direction", &["direction_id"]),
    ("half_trip_id", &[]),
    ("stop_id", &[]),
    ("timepoint_id", &["time_point_id"]),
    ("timepoint_order", &["time_point_order"]),
    ("point_type", &[]),
    ("standard_type", &[]),
    ("scheduled_time", &["scheduled"]),
    ("actual_time", &["actual"]),
    ("scheduled_headway", &[]),
    ("headway", &[]),
];

fn raw_row(record: &csv::StringRecord, delimiter: u8) -> String {
    let sep = (delimiter as char).to_string();
    record.iter().collect::<Vec<_>>().join(&sep)
}

fn parse_departure_row(
    cols: &[usize; 13],
    width: usize,
    record: &csv::StringRecord,
) -> std::result::Result<DepartureRecord, RejectReason> {
    if record.len() != width {
        return Err(RejectReason::FieldCount);
    }
    let f = |i: usize| record.get(cols[i]).unwrap_or("");

    let service_date = parse_date(f(0)).ok_or(RejectReason::BadServiceDate)?;
    let direction = Direction::parse(f(2)).ok_or(RejectReason::BadDirection)?;
    let stop_id = f(4);
    if stop_id.is_empty() {
        return Err(RejectReason::EmptyStopId);
    }
    let timepoint_order = f(6)
        .parse::<u32>()
        .ok()
        .filter(|&o| o >= 1)
        .ok_or(RejectReason::BadTimepointOrder)?;
    let point_type = PointType::parse(f(7)).ok_or(RejectReason::BadPointType)?;
    let standard_type = StandardType::parse(f(8)).ok_or(RejectReason::BadStandardType)?;
    let scheduled_time = match f(9) {
        "" => return Err(RejectReason::MissingScheduledTime),
        s => parse_timestamp(s, Some(service_date)).ok_or(RejectReason::BadScheduledTime)?,
    };
    let actual_time = match f(10) {
        "" => return Err(RejectReason::MissingActualTime),
        s => parse_timestamp(s, Some(service_date)).ok_or(RejectReason::BadActualTime)?,
    };
    let scheduled_headway = optional_number(f(11)).map_err(|_| RejectReason::BadHeadway)?;
    let headway = optional_number(f(12)).map_err(|_| RejectReason::BadHeadway)?;

    Ok(DepartureRecord {
        service_date,
        route_id: f(1).to_string(),
        direction,
        half_trip_id: f(3).to_string(),
        stop_id: stop_id.to_string(),
        timepoint_id: f(5).to_string(),
        timepoint_order,
        point_type,
        standard_type,
        scheduled_time,
        actual_time,
        scheduled_headway,
        headway,
    })
}

/// Parses the departure-events table. Header columns are matched
/// case-insensitively against the canonical names (MBTA aliases such as
/// `direction_id`, `time_point_order`, `scheduled` and `actual` also match).
pub fn parse_departures<R: Read>(
    stream: R,
    config: &ParseConfig,
) -> Result<(Vec<DepartureRecord>, Vec<Reject>)> {
    let mut rdr = reader(stream, config.delimiter);
    let headers = rdr.headers()?.clone();
    let located = locate_columns(&headers, &DEPARTURE_COLUMNS, &[])?;
    let mut cols = [0usize; 13];
    for (c, l) in cols.iter_mut().zip(&located) {
        *c = l.expect("all departure columns are required");
    }
    let width = headers.len();

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut pending: Vec<csv::StringRecord> = Vec::with_capacity(PARSE_CHUNK);
    let mut flush = |pending: &mut Vec<csv::StringRecord>| {
        let parsed = par::map(config.exec, pending, |r| {
            parse_departure_row(&cols, width, r)
        });
        for (raw, outcome) in pending.drain(..).zip(parsed) {
            match outcome {
                Ok(rec) => records.push(rec),
                Err(reason) => rejects.push(Reject {
                    line_no: raw.position().map_or(0, |p| p.line()),
                    reason,
                    raw_row: raw_row(&raw, config.delimiter),
                }),
            }
        }
    };
    for row in rdr.records() {
        pending.push(row?);
        if pending.len() == PARSE_CHUNK {
            flush(&mut pending);
        }
    }
    flush(&mut pending);
    Ok((records, rejects))
}

const WEATHER_COLUMNS: [(&str, &[&str]); 5] = [
    ("timestamp", &["datetime", "date_time", "time"]),
    ("condition", &["conditions"]),
    ("temperature", &["temp"]),
    ("humidity", &[]),
    ("wind_speed", &["windspeed"]),
];

/// Parses hourly weather, mapping raw condition text onto
/// [`WeatherCondition`]. Unmappable conditions and bad timestamps are
/// rejected row by row.
pub fn parse_weather<R: Read>(
    stream: R,
    config: &ParseConfig,
) -> Result<(Vec<WeatherObservation>, Vec<Reject>)> {
    let mut rdr = reader(stream, config.delimiter);
    let headers = rdr.headers()?.clone();
    let cols = locate_columns(
        &headers,
        &WEATHER_COLUMNS,
        &["temperature", "humidity", "wind_speed"],
    )?;
    let mut obs = Vec::new();
    let mut rejects = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| cols[i].and_then(|c| row.get(c)).unwrap_or("");
        let line_no = row.position().map_or(0, |p| p.line());
        let reject = |reason| Reject {
            line_no,
            reason,
            raw_row: raw_row(&row, config.delimiter),
        };
        let Some(timestamp) = parse_timestamp(get(0), None) else {
            rejects.push(reject(RejectReason::BadTimestamp));
            continue;
        };
        let Some(condition) = WeatherCondition::from_raw(get(1)) else {
            rejects.push(reject(RejectReason::UnmappedCondition(get(1).to_string())));
            continue;
        };
        let num = |i| optional_number(get(i)).ok().flatten();
        obs.push(WeatherObservation {
            timestamp,
            condition,
            temperature: num(2),
            humidity: num(3),
            wind_speed: num(4),
        });
    }
    Ok((obs, rejects))
}

const STOP_COLUMNS: [(&str, &[&str]); 4] = [
    ("stop_id", &[]),
    ("x", &["stop_lon", "lon", "longitude"]),
    ("y", &["stop_lat", "lat", "latitude"]),
    ("name", &["stop_name"]),
];

/// Parses stop locations keyed by `stop_id`. Exact duplicates collapse;
/// a duplicate id with different coordinates is a fatal error.
pub fn parse_stops<R: Read>(
    stream: R,
    config: &ParseConfig,
) -> Result<BTreeMap<String, StopLocation>> {
    let mut rdr = reader(stream, config.delimiter);
    let headers = rdr.headers()?.clone();
    let cols = locate_columns(&headers, &STOP_COLUMNS, &["name"])?;
    let mut stops: BTreeMap<String, (u64, StopLocation)> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |i: usize| cols[i].and_then(|c| row.get(c)).unwrap_or("");
        let coord = |i: usize| {
            get(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Malformed {
                    what: "stop coordinate",
                    line,
                    detail: format!("`{}`", get(i)),
                })
        };
        let stop = StopLocation {
            stop_id: get(0).to_string(),
            x: coord(1)?,
            y: coord(2)?,
            name: get(3).to_string(),
        };
        if stop.stop_id.is_empty() {
            return Err(Error::Malformed {
                what: "stop row",
                line,
                detail: "empty stop_id".into(),
            });
        }
        match stops.get(&stop.stop_id) {
            Some((first_line, prev)) => {
                if prev.x != stop.x || prev.y != stop.y {
                    return Err(Error::StopConflict {
                        stop_id: stop.stop_id,
                        first_line: *first_line,
                        first: (prev.x, prev.y),
                        second_line: line,
                        second: (stop.x, stop.y),
                    });
                }
            }
            None => {
                stops.insert(stop.stop_id.clone(), (line, stop));
            }
        }
    }
    Ok(stops.into_iter().map(|(k, (_, v))| (k, v)).collect())
}

pub fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes the reject report: `line_no,reason,raw_row`.
pub fn write_rejects<W: Write>(w: W, rejects: &[Reject]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["line_no", "reason", "raw_row"])?;
    for r in rejects {
        out.write_record([
            r.line_no.to_string(),
            r.reason.to_string(),
            r.raw_row.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
