//! Feature encoding and Min-Max input scaling.
//!
//! Layout of an encoded vector (`22 + |routes|` values):
//!
//! | slots      | content                                             |
//! |------------|-----------------------------------------------------|
//! | 0          | day type (1 = weekend)                              |
//! | 1          | rush hour                                           |
//! | 2          | lateness status (1 iff current deviation > 0)       |
//! | 3          | current deviation, seconds                          |
//! | 4          | stop-to-stop distance, meters                       |
//! | 5          | far status (1 iff distance > far threshold)         |
//! | 6..=10     | weather one-hot: cloudy, rainy, clear, snowy, windy |
//! | 11..=12    | direction one-hot: inbound, outbound                |
//! | 13..=16    | current x, current y, next x, next y                |
//! | 17         | scheduled headway, seconds (0 when absent)          |
//! | 18         | timepoint order                                     |
//! | 19..=21    | point type one-hot: start, mid, end                 |
//! | 22..       | route one-hot, lexicographic route order            |

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Weekday};

use crate::error::{Error, Result};
use crate::ingest::{Direction, PointType, StopLocation, WeatherObservation};
use crate::par::{self, Exec};
use crate::preprocess::{SegmentContext, TripSegment};

pub const SCHEMA_VERSION: &str = "segment-features-v1";
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const FIXED_DIMS: usize = 22;
pub const DEFAULT_FAR_THRESHOLD_M: f64 = 1488.0;

pub mod slot {
    pub const DAY_TYPE: usize = 0;
    pub const RUSH_HOUR: usize = 1;
    pub const LATENESS: usize = 2;
    pub const CURRENT_DEVIATION: usize = 3;
    pub const DISTANCE: usize = 4;
    pub const FAR: usize = 5;
    pub const WEATHER: usize = 6;
    pub const DIRECTION: usize = 11;
    pub const CUR_X: usize = 13;
    pub const CUR_Y: usize = 14;
    pub const NEXT_X: usize = 15;
    pub const NEXT_Y: usize = 16;
    pub const SCHEDULED_HEADWAY: usize = 17;
    pub const TIMEPOINT_ORDER: usize = 18;
    pub const POINT_TYPE: usize = 19;
    pub const ROUTE: usize = 22;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoordinateMode {
    /// `x` = longitude, `y` = latitude, degrees.
    #[default]
    Geodetic,
    /// Planar coordinates in meters.
    Projected,
}

impl CoordinateMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "geodetic" => Some(CoordinateMode::Geodetic),
            "projected" => Some(CoordinateMode::Projected),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CoordinateMode::Geodetic => "geodetic",
            CoordinateMode::Projected => "projected",
        }
    }
}

pub fn stop_distance(a: (f64, f64), b: (f64, f64), mode: CoordinateMode) -> Result<f64> {
    if ![a.0, a.1, b.0, b.1].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(match mode {
        CoordinateMode::Projected => (a.0 - b.0).hypot(a.1 - b.1),
        CoordinateMode::Geodetic => {
            let (lat1, lat2) = (a.1.to_radians(), b.1.to_radians());
            let dlat = lat2 - lat1;
            let dlon = (b.0 - a.0).to_radians();
            let h =
                (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
            2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
        }
    })
}

pub fn day_type(service_date: NaiveDate) -> u8 {
    u8::from(matches!(
        service_date.weekday(),
        Weekday::Sat | Weekday::Sun
    ))
}

pub fn default_rush_windows() -> Vec<(NaiveTime, NaiveTime)> {
    let t = |h| NaiveTime::from_hms_opt(h, 0, 0).unwrap();
    vec![(t(7), t(9)), (t(16), t(18))]
}

/// 1 iff the wall-clock time lies in one of the half-open windows.
pub fn rush_hour(at: NaiveDateTime, windows: &[(NaiveTime, NaiveTime)]) -> u8 {
    let t = at.time();
    u8::from(windows.iter().any(|&(from, to)| from <= t && t < to))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub version: String,
    routes: Vec<String>,
    pub far_threshold_m: f64,
    pub rush_windows: Vec<(NaiveTime, NaiveTime)>,
    pub coordinate_mode: CoordinateMode,
    pub weather_max_gap_s: i64,
}

impl FeatureSchema {
    /// Builds the canonical schema over a route vocabulary; routes are
    /// sorted and deduplicated.
    pub fn new<I, S>(routes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut routes: Vec<String> = routes.into_iter().map(Into::into).collect();
        routes.sort();
        routes.dedup();
        FeatureSchema {
            version: SCHEMA_VERSION.to_string(),
            routes,
            far_threshold_m: DEFAULT_FAR_THRESHOLD_M,
            rush_windows: default_rush_windows(),
            coordinate_mode: CoordinateMode::Geodetic,
            weather_max_gap_s: 3600,
        }
    }

    pub fn from_segments(segments: &[TripSegment]) -> Self {
        Self::new(segments.iter().map(|s| s.route_id.as_str()))
    }

    pub fn routes(&self) -> &[String] {
        &self.routes
    }

    pub fn total_dims(&self) -> usize {
        FIXED_DIMS + self.routes.len()
    }

    pub fn route_index(&self, route_id: &str) -> Option<usize> {
        self.routes
            .binary_search_by(|r| r.as_str().cmp(route_id))
            .ok()
    }
}

/// Hourly observations sorted by time, queried for the nearest reading.
#[derive(Debug, Clone, Default)]
pub struct WeatherIndex {
    obs: Vec<WeatherObservation>,
}

impl WeatherIndex {
    pub fn new(mut obs: Vec<WeatherObservation>) -> Self {
        obs.sort_by_key(|o| o.timestamp);
        WeatherIndex { obs }
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Nearest observation within `max_gap_s`; ties go to the earlier one.
    pub fn nearest(&self, at: NaiveDateTime, max_gap_s: i64) -> Option<&WeatherObservation> {
        let i = self.obs.partition_point(|o| o.timestamp < at);
        let gap = |o: &WeatherObservation| (o.timestamp - at).num_seconds().abs();
        let before = i.checked_sub(1).map(|j| &self.obs[j]);
        let after = self.obs.get(i);
        let best = match (before, after) {
            (Some(b), Some(a)) => Some(if gap(a) < gap(b) { a } else { b }),
            (b, a) => b.or(a),
        }?;
        (gap(best) <= max_gap_s).then_some(best)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Next-stop deviation in seconds; never scaled.
    pub target: f64,
}

fn lookup<'a>(stops: &'a BTreeMap<String, StopLocation>, id: &str) -> Result<&'a StopLocation> {
    stops
        .get(id)
        .ok_or_else(|| Error::UnknownStop(id.to_string()))
}

/// Writes the input features of one segment into `out` (length
/// `schema.total_dims()`); returns the route index.
pub fn encode_into(
    ctx: &SegmentContext<'_>,
    weather: &WeatherIndex,
    stops: &BTreeMap<String, StopLocation>,
    schema: &FeatureSchema,
    out: &mut [f64],
) -> Result<usize> {
    if out.len() != schema.total_dims() {
        return Err(Error::DimensionMismatch {
            expected: schema.total_dims(),
            actual: out.len(),
        });
    }
    let cur = lookup(stops, &ctx.current.stop_id)?;
    let next = lookup(stops, &ctx.next.stop_id)?;
    let route = schema
        .route_index(ctx.route_id)
        .ok_or_else(|| Error::UnknownRoute(ctx.route_id.to_string()))?;
    let at = ctx.current.scheduled_time;
    let obs = weather
        .nearest(at, schema.weather_max_gap_s)
        .ok_or(Error::NoWeather {
            at,
            max_gap_s: schema.weather_max_gap_s,
        })?;
    let distance = stop_distance((cur.x, cur.y), (next.x, next.y), schema.coordinate_mode)?;

    out.fill(0.0);
    out[slot::DAY_TYPE] = f64::from(day_type(ctx.service_date));
    out[slot::RUSH_HOUR] = f64::from(rush_hour(at, &schema.rush_windows));
    out[slot::LATENESS] = f64::from(u8::from(ctx.current_deviation > 0.0));
    out[slot::CURRENT_DEVIATION] = ctx.current_deviation;
    out[slot::DISTANCE] = distance;
    out[slot::FAR] = f64::from(u8::from(distance > schema.far_threshold_m));
    out[slot::WEATHER + obs.condition.slot()] = 1.0;
    out[slot::DIRECTION
        + match ctx.direction {
            Direction::Inbound => 0,
            Direction::Outbound => 1,
        }] = 1.0;
    out[slot::CUR_X] = cur.x;
    out[slot::CUR_Y] = cur.y;
    out[slot::NEXT_X] = next.x;
    out[slot::NEXT_Y] = next.y;
    out[slot::SCHEDULED_HEADWAY] = ctx.current.scheduled_headway.unwrap_or(0.0);
    out[slot::TIMEPOINT_ORDER] = f64::from(ctx.current.timepoint_order);
    out[slot::POINT_TYPE
        + match ctx.current.point_type {
            PointType::Startpoint => 0,
            PointType::Midpoint => 1,
            PointType::Endpoint => 2,
        }] = 1.0;
    out[slot::ROUTE + route] = 1.0;
    Ok(route)
}

pub fn encode(
    segment: &TripSegment,
    weather: &WeatherIndex,
    stops: &BTreeMap<String, StopLocation>,
    schema: &FeatureSchema,
) -> Result<FeatureVector> {
    let mut values = vec![0.0; schema.total_dims()];
    encode_into(&segment.context(), weather, stops, schema, &mut values)?;
    Ok(FeatureVector {
        values,
        target: segment.next_deviation,
    })
}

/// Identity of the next-stop event a row predicts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentKey {
    pub service_date: NaiveDate,
    pub half_trip_id: String,
    pub next_order: u32,
}

impl SegmentKey {
    pub fn of(segment: &TripSegment) -> Self {
        SegmentKey {
            service_date: segment.service_date,
            half_trip_id: segment.half_trip_id.clone(),
            next_order: segment.next.timepoint_order,
        }
    }
}

/// Row-major matrix of encoded inputs with targets, route indices and keys.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    dims: usize,
    inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub routes: Vec<usize>,
    pub keys: Vec<SegmentKey>,
}

impl Dataset {
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        targets: Vec<f64>,
        routes: Vec<usize>,
        keys: Vec<SegmentKey>,
    ) -> Result<Self> {
        let n = rows.len();
        for len in [targets.len(), routes.len(), keys.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: len,
                });
            }
        }
        let dims = rows.first().map_or(0, Vec::len);
        let mut inputs = Vec::with_capacity(n * dims);
        for r in rows {
            if r.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: r.len(),
                });
            }
            inputs.extend(r);
        }
        Ok(Dataset {
            dims,
            inputs,
            targets,
            routes,
            keys,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.inputs.chunks_exact(self.dims.max(1))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
        }
        Dataset {
            dims: self.dims,
            inputs,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            routes: indices.iter().map(|&i| self.routes[i]).collect(),
            keys: indices.iter().map(|&i| self.keys[i].clone()).collect(),
        }
    }

    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            self.inputs.truncate(n * self.dims);
            self.targets.truncate(n);
            self.routes.truncate(n);
            self.keys.truncate(n);
        }
    }
}

/// Encodes every segment; fails on the first segment (in input order) that
/// cannot be encoded.
pub fn encode_dataset(
    segments: &[TripSegment],
    weather: &WeatherIndex,
    stops: &BTreeMap<String, StopLocation>,
    schema: &FeatureSchema,
    exec: Exec,
) -> Result<Dataset> {
    let dims = schema.total_dims();
    let encoded = par::map(exec, segments, |s| {
        let mut v = vec![0.0; dims];
        encode_into(&s.context(), weather, stops, schema, &mut v).map(|route| (v, route))
    });
    let mut inputs = Vec::with_capacity(segments.len() * dims);
    let mut routes = Vec::with_capacity(segments.len());
    for e in encoded {
        let (v, route) = e?;
        inputs.extend(v);
        routes.push(route);
    }
    Ok(Dataset {
        dims,
        inputs,
        targets: segments.iter().map(|s| s.next_deviation).collect(),
        routes,
        keys: segments.iter().map(SegmentKey::of).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    pub fn dims(&self) -> usize {
        self.min.len()
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.min).zip(&self.max) {
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
        }
    }
}

/// Per-dimension min and max over the training rows.
pub fn fit_scaler(train: &Dataset, exec: Exec) -> Result<ScalerParams> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let dims = train.dims();
    let partial = par::map_chunks(exec, &train.inputs, dims * 4096, |chunk| {
        let mut min = vec![f64::INFINITY; dims];
        let mut max = vec![f64::NEG_INFINITY; dims];
        for row in chunk.chunks_exact(dims) {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        (min, max)
    });
    let mut min = vec![f64::INFINITY; dims];
    let mut max = vec![f64::NEG_INFINITY; dims];
    for (pmin, pmax) in partial {
        for j in 0..dims {
            min[j] = min[j].min(pmin[j]);
            max[j] = max[j].max(pmax[j]);
        }
    }
    Ok(ScalerParams { min, max })
}

/// `(x - min) / (max - min)`, 0 for constant dimensions, no clipping.
pub fn apply_scaler(x: &[f64], params: &ScalerParams) -> Vec<f64> {
    let mut out = x.to_vec();
    params.apply(&mut out);
    out
}

pub fn scale_dataset(data: &mut Dataset, params: &ScalerParams, exec: Exec) -> Result<()> {
    if data.dims() != params.dims() {
        return Err(Error::DimensionMismatch {
            expected: params.dims(),
            actual: data.dims(),
        });
    }
    let dims = data.dims();
    if data.is_empty() {
        return Ok(());
    }
    let scaled = par::map_chunks(exec, &data.inputs, dims * 4096, |chunk| {
        let mut c = chunk.to_vec();
        for row in c.chunks_exact_mut(dims) {
            params.apply(row);
        }
        c
    });
    data.inputs = scaled.concat();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::WeatherCondition;
    use crate::preprocess::StopVisit;

    /// Great-circle distance through the chord between unit vectors; an
    /// independent route to the same quantity as the haversine.
    fn chord_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
        let unit = |(lon, lat): (f64, f64)| {
            let (lo, la) = (lon.to_radians(), lat.to_radians());
            [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
        };
        let (u, v) = (unit(a), unit(b));
        let c = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
        2.0 * EARTH_RADIUS_M * (c / 2.0).asin()
    }

    #[test]
    fn haversine_matches_chord_oracle() {
        let g = CoordinateMode::Geodetic;
        let a = (-71.0589, 42.3601);
        assert_eq!(stop_distance(a, a, g).unwrap(), 0.0);

        let north = (-71.0589, 42.3701);
        let d = stop_distance(a, north, g).unwrap();
        assert!((d - chord_distance(a, north)).abs() < 1e-6);
        assert!((d - 1111.949).abs() < 0.01, "{d}");

        let east = (-71.0489, 42.3601);
        let d = stop_distance(a, east, g).unwrap();
        assert!((d - chord_distance(a, east)).abs() < 1e-6);
        assert!((d - 821.647).abs() < 0.01, "{d}");
    }

    #[test]
    fn projected_is_euclidean() {
        let d = stop_distance((0.0, 0.0), (3.0, 4.0), CoordinateMode::Projected).unwrap();
        assert_eq!(d, 5.0);
        assert!(stop_distance((f64::NAN, 0.0), (0.0, 0.0), CoordinateMode::Projected).is_err());
    }

    #[test]
    fn calendar_and_clock_flags() {
        let d = |m, day| NaiveDate::from_ymd_opt(2023, m, day).unwrap();
        assert_eq!(day_type(d(1, 7)), 1);
        assert_eq!(day_type(d(1, 9)), 0);
        assert_eq!(day_type(d(2, 20)), 0);
        let w = default_rush_windows();
        let at = |h, m| d(1, 9).and_hms_opt(h, m, 0).unwrap();
        assert_eq!(rush_hour(at(8, 30), &w), 1);
        assert_eq!(rush_hour(at(12, 0), &w), 0);
        assert_eq!(rush_hour(at(9, 0), &w), 0);
        assert_eq!(rush_hour(at(7, 0), &w), 1);
        assert_eq!(rush_hour(at(17, 59), &w), 1);
    }

    #[test]
    fn canonical_schema_has_173_dims() {
        let schema = FeatureSchema::new((1..=151).map(|r| r.to_string()));
        assert_eq!(schema.total_dims(), 173);
        let dup = FeatureSchema::new(["b", "a", "b"]);
        assert_eq!(dup.routes(), ["a", "b"]);
    }

    #[test]
    fn nearest_weather_window() {
        let day = NaiveDate::from_ymd_opt(2023, 1, 9).unwrap();
        let obs = |h| WeatherObservation {
            timestamp: day.and_hms_opt(h, 0, 0).unwrap(),
            condition: WeatherCondition::Clear,
            temperature: None,
            humidity: None,
            wind_speed: None,
        };
        let idx = WeatherIndex::new(vec![obs(12), obs(10)]);
        let at = |h, m| day.and_hms_opt(h, m, 0).unwrap();
        assert_eq!(idx.nearest(at(10, 40), 3600).unwrap().timestamp, at(10, 0));
        assert_eq!(idx.nearest(at(11, 20), 3600).unwrap().timestamp, at(12, 0));
        assert_eq!(
            idx.nearest(at(11, 0), 3600).unwrap().timestamp,
            at(10, 0),
            "tie goes to earlier"
        );
        assert!(idx.nearest(at(14, 0), 3600).is_none());
        assert!(idx.nearest(at(13, 0), 3600).is_some());
    }

    pub(crate) struct Fixture {
        pub stops: BTreeMap<String, StopLocation>,
        pub weather: WeatherIndex,
        pub schema: FeatureSchema,
    }

    pub(crate) fn fixture(condition: WeatherCondition) -> Fixture {
        let stop = |id: &str, x, y| {
            (
                id.to_string(),
                StopLocation {
                    stop_id: id.into(),
                    x,
                    y,
                    name: String::new(),
                },
            )
        };
        let day = NaiveDate::from_ymd_opt(2023, 1, 7).unwrap();
        Fixture {
            stops: [
                stop("a", -71.0589, 42.3601),
                stop("b", -71.0589, 42.3651),
                stop("far", -71.0589, 42.3801),
            ]
            .into_iter()
            .collect(),
            weather: WeatherIndex::new(
                (0..24)
                    .map(|h| WeatherObservation {
                        timestamp: day.and_hms_opt(h, 0, 0).unwrap(),
                        condition,
                        temperature: None,
                        humidity: None,
                        wind_speed: None,
                    })
                    .collect(),
            ),
            schema: FeatureSchema::new(["10", "11", "12", "13", "14", "15", "16"]),
        }
    }

    pub(crate) fn segment(route: &str, next_stop: &str, dev: f64, hms: (u32, u32)) -> TripSegment {
        let day = NaiveDate::from_ymd_opt(2023, 1, 7).unwrap();
        let t = day.and_hms_opt(hms.0, hms.1, 0).unwrap();
        let visit = |id: &str, order, pt| StopVisit {
            stop_id: id.into(),
            timepoint_order: order,
            point_type: pt,
            scheduled_time: t,
            scheduled_headway: None,
        };
        TripSegment {
            half_trip_id: "h".into(),
            route_id: route.into(),
            direction: Direction::Inbound,
            service_date: day,
            current: visit("a", 2, PointType::Midpoint),
            next: visit(next_stop, 3, PointType::Midpoint),
            current_actual: t,
            next_actual: t,
            current_deviation: dev,
            next_deviation: 42.0,
            order_gap: false,
        }
    }

    const BINARY_SLOTS: [usize; 13] = [0, 1, 2, 5, 6, 7, 8, 9, 10, 11, 12, 19, 20];

    #[test]
    fn binary_slot_arithmetic() {
        let f = fixture(WeatherCondition::Rainy);
        // Saturday, 08:00, rainy, inbound, route "15" is index 5, midpoint.
        let v = encode(
            &segment("15", "b", -30.0, (8, 0)),
            &f.weather,
            &f.stops,
            &f.schema,
        )
        .unwrap();
        let binary: Vec<usize> = BINARY_SLOTS
            .iter()
            .copied()
            .chain(21..v.values.len())
            .filter(|&i| v.values[i] == 1.0)
            .collect();
        assert_eq!(binary, [0, 1, 7, 11, 20, 27]);
        assert_eq!(v.values[slot::LATENESS], 0.0);
        assert_eq!(v.values[slot::CURRENT_DEVIATION], -30.0);
        assert_eq!(v.values[slot::SCHEDULED_HEADWAY], 0.0);
        assert_eq!(v.target, 42.0);
    }

    #[test]
    fn far_status_and_lateness() {
        let f = fixture(WeatherCondition::Clear);
        let v = encode(
            &segment("10", "far", 0.0, (12, 0)),
            &f.weather,
            &f.stops,
            &f.schema,
        )
        .unwrap();
        assert!(v.values[slot::DISTANCE] > 1488.0);
        assert_eq!(v.values[slot::FAR], 1.0);
        assert_eq!(v.values[slot::LATENESS], 0.0, "zero deviation is not late");
        let v = encode(
            &segment("10", "b", 1.0, (12, 0)),
            &f.weather,
            &f.stops,
            &f.schema,
        )
        .unwrap();
        assert_eq!(v.values[slot::FAR], 0.0);
        assert_eq!(v.values[slot::LATENESS], 1.0);
    }

    #[test]
    fn encode_errors() {
        let f = fixture(WeatherCondition::Clear);
        let e = encode(
            &segment("99", "b", 0.0, (12, 0)),
            &f.weather,
            &f.stops,
            &f.schema,
        );
        assert!(matches!(e, Err(Error::UnknownRoute(r)) if r == "99"));
        let e = encode(
            &segment("10", "zz", 0.0, (12, 0)),
            &f.weather,
            &f.stops,
            &f.schema,
        );
        assert!(matches!(e, Err(Error::UnknownStop(s)) if s == "zz"));
        let empty = WeatherIndex::default();
        let e = encode(
            &segment("10", "b", 0.0, (12, 0)),
            &empty,
            &f.stops,
            &f.schema,
        );
        assert!(matches!(e, Err(Error::NoWeather { .. })));
    }

    #[test]
    fn scaler_rules() {
        let ds = Dataset::from_rows(
            vec![
                vec![0.0, 4.0, 1.0],
                vec![5.0, 4.0, 0.0],
                vec![10.0, 4.0, 1.0],
            ],
            vec![0.0; 3],
            vec![0; 3],
            vec![SegmentKey::of(&segment("10", "b", 0.0, (1, 0))); 3],
        )
        .unwrap();
        let p = fit_scaler(&ds, Exec::Sequential).unwrap();
        assert_eq!(p.min, [0.0, 4.0, 0.0]);
        assert_eq!(p.max, [10.0, 4.0, 1.0]);
        assert_eq!(apply_scaler(&[5.0, 4.0, 1.0], &p), [0.5, 0.0, 1.0]);
        assert_eq!(apply_scaler(&[12.0, 4.0, 0.0], &p), [1.2, 0.0, 0.0]);
        assert!(fit_scaler(&Dataset::default(), Exec::Sequential).is_err());
    }
}
