//! Deviation statistics, outlier removal, trip assembly and segmentation.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::ingest::{parse_date, parse_timestamp, DepartureRecord, Direction, PointType};
use crate::par::{self, Exec};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.f";

/// Signed departure deviation in seconds; positive means late.
pub fn deviation(record: &DepartureRecord) -> f64 {
    seconds_between(record.scheduled_time, record.actual_time)
}

pub(crate) fn seconds_between(from: NaiveDateTime, to: NaiveDateTime) -> f64 {
    let d = to - from;
    match d.num_nanoseconds() {
        Some(ns) => ns as f64 / 1e9,
        None => d.num_milliseconds() as f64 / 1e3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationStats {
    pub mean: f64,
    pub std_dev: f64,
    pub k: f64,
    pub low: f64,
    pub high: f64,
    pub n: usize,
}

impl DeviationStats {
    pub fn from_moments(mean: f64, std_dev: f64, k: f64, n: usize) -> Self {
        DeviationStats {
            mean,
            std_dev,
            k,
            low: if k.is_infinite() {
                f64::NEG_INFINITY
            } else {
                mean - k * std_dev
            },
            high: if k.is_infinite() {
                f64::INFINITY
            } else {
                mean + k * std_dev
            },
            n,
        }
    }

    pub fn contains(&self, deviation: f64) -> bool {
        self.low <= deviation && deviation <= self.high
    }
}

/// Mean and population standard deviation of `values`, summed in sorted
/// order so the result is identical for every permutation of the input.
pub(crate) fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    par::sort_f64(&mut sorted);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Outlier thresholds `mean ± k·σ` with population σ.
pub fn outlier_thresholds(deviations: &[f64], k: f64) -> Result<DeviationStats> {
    let (mean, std) = mean_std(deviations).ok_or(Error::Empty("deviation list"))?;
    Ok(DeviationStats::from_moments(mean, std, k, deviations.len()))
}

/// Keeps records whose deviation lies in `[low, high]` (inclusive).
pub fn filter_outliers(
    records: Vec<DepartureRecord>,
    stats: &DeviationStats,
) -> (Vec<DepartureRecord>, usize) {
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| stats.contains(deviation(r)))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub half_trip_id: String,
    pub route_id: String,
    pub direction: Direction,
    pub service_date: NaiveDate,
    pub records: Vec<DepartureRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct Assembly {
    pub trips: Vec<Trip>,
    /// Records dropped because their (trip, timepoint_order) was already seen.
    pub duplicate_orders: usize,
}

type TripKey = (String, NaiveDate, String, Direction);

/// Groups records into half-trips, in order of first appearance. Records
/// within a trip are sorted by `timepoint_order`; for a repeated order the
/// first occurrence wins.
///
/// Trips are keyed by half-trip id together with service date, route and
/// direction, since operators reuse half-trip ids across service days.
pub fn assemble_trips(records: Vec<DepartureRecord>) -> Assembly {
    let mut index: HashMap<TripKey, usize> = HashMap::new();
    let mut trips: Vec<Trip> = Vec::new();
    for r in records {
        let key = (
            r.half_trip_id.clone(),
            r.service_date,
            r.route_id.clone(),
            r.direction,
        );
        let slot = *index.entry(key).or_insert_with(|| {
            trips.push(Trip {
                half_trip_id: r.half_trip_id.clone(),
                route_id: r.route_id.clone(),
                direction: r.direction,
                service_date: r.service_date,
                records: Vec::new(),
            });
            trips.len() - 1
        });
        trips[slot].records.push(r);
    }
    let mut duplicate_orders = 0;
    for trip in &mut trips {
        trip.records.sort_by_key(|r| r.timepoint_order);
        let before = trip.records.len();
        trip.records.dedup_by_key(|r| r.timepoint_order);
        duplicate_orders += before - trip.records.len();
    }
    Assembly {
        trips,
        duplicate_orders,
    }
}

/// The per-stop fields a segment carries for one end.
#[derive(Debug, Clone, PartialEq)]
pub struct StopVisit {
    pub stop_id: String,
    pub timepoint_order: u32,
    pub point_type: PointType,
    pub scheduled_time: NaiveDateTime,
    pub scheduled_headway: Option<f64>,
}

impl From<&DepartureRecord> for StopVisit {
    fn from(r: &DepartureRecord) -> Self {
        StopVisit {
            stop_id: r.stop_id.clone(),
            timepoint_order: r.timepoint_order,
            point_type: r.point_type,
            scheduled_time: r.scheduled_time,
            scheduled_headway: r.scheduled_headway,
        }
    }
}

/// A consecutive (current stop, next stop) pair within one half-trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TripSegment {
    pub half_trip_id: String,
    pub route_id: String,
    pub direction: Direction,
    pub service_date: NaiveDate,
    pub current: StopVisit,
    pub next: StopVisit,
    pub current_actual: NaiveDateTime,
    pub next_actual: NaiveDateTime,
    pub current_deviation: f64,
    /// Learning target.
    pub next_deviation: f64,
    /// Set when the sorted neighbours are not consecutive timepoint orders.
    pub order_gap: bool,
}

/// The inputs of a prediction request: a segment without the outcome at
/// the next stop.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentQuery {
    pub half_trip_id: String,
    pub route_id: String,
    pub direction: Direction,
    pub service_date: NaiveDate,
    pub current: StopVisit,
    pub next: StopVisit,
    pub current_deviation: f64,
}

/// Borrowed view of everything the feature encoder reads.
#[derive(Debug, Clone, Copy)]
pub struct SegmentContext<'a> {
    pub route_id: &'a str,
    pub direction: Direction,
    pub service_date: NaiveDate,
    pub current: &'a StopVisit,
    pub next: &'a StopVisit,
    pub current_deviation: f64,
}

impl TripSegment {
    pub fn context(&self) -> SegmentContext<'_> {
        SegmentContext {
            route_id: &self.route_id,
            direction: self.direction,
            service_date: self.service_date,
            current: &self.current,
            next: &self.next,
            current_deviation: self.current_deviation,
        }
    }

    pub fn query(&self) -> SegmentQuery {
        SegmentQuery {
            half_trip_id: self.half_trip_id.clone(),
            route_id: self.route_id.clone(),
            direction: self.direction,
            service_date: self.service_date,
            current: self.current.clone(),
            next: self.next.clone(),
            current_deviation: self.current_deviation,
        }
    }
}

impl SegmentQuery {
    pub fn context(&self) -> SegmentContext<'_> {
        SegmentContext {
            route_id: &self.route_id,
            direction: self.direction,
            service_date: self.service_date,
            current: &self.current,
            next: &self.next,
            current_deviation: self.current_deviation,
        }
    }
}

fn trip_segments(trip: &Trip) -> Vec<TripSegment> {
    trip.records
        .windows(2)
        .map(|pair| {
            let (cur, next) = (&pair[0], &pair[1]);
            TripSegment {
                half_trip_id: trip.half_trip_id.clone(),
                route_id: trip.route_id.clone(),
                direction: trip.direction,
                service_date: trip.service_date,
                current: cur.into(),
                next: next.into(),
                current_actual: cur.actual_time,
                next_actual: next.actual_time,
                current_deviation: deviation(cur),
                next_deviation: deviation(next),
                order_gap: next.timepoint_order != cur.timepoint_order + 1,
            }
        })
        .collect()
}

/// Splits each trip of `L` stops into `L - 1` consecutive segments; single
/// stop trips contribute none.
pub fn segment_trips(trips: &[Trip], exec: Exec) -> Vec<TripSegment> {
    par::map(exec, trips, trip_segments)
        .into_iter()
        .flatten()
        .collect()
}

/// Outcome of [`clean`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cleaned {
    pub stats: DeviationStats,
    pub outliers_removed: usize,
    pub duplicate_orders: usize,
    pub trips: usize,
    pub single_stop_trips: usize,
    pub segments: Vec<TripSegment>,
}

/// Outlier filter, trip assembly and segmentation in one pass. An infinite
/// `k` keeps every record.
pub fn clean(records: Vec<DepartureRecord>, k: f64, exec: Exec) -> Result<Cleaned> {
    let devs: Vec<f64> = records.iter().map(deviation).collect();
    let stats = outlier_thresholds(&devs, k)?;
    let (kept, outliers_removed) = filter_outliers(records, &stats);
    let assembly = assemble_trips(kept);
    let segments = segment_trips(&assembly.trips, exec);
    Ok(Cleaned {
        stats,
        outliers_removed,
        duplicate_orders: assembly.duplicate_orders,
        trips: assembly.trips.len(),
        single_stop_trips: assembly
            .trips
            .iter()
            .filter(|t| t.records.len() < 2)
            .count(),
        segments,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub n: usize,
    pub trips: usize,
    pub routes: usize,
    pub stops: usize,
    pub mean_deviation: f64,
    pub std_deviation: f64,
    pub delayed_fraction: f64,
}

pub fn dataset_stats(records: &[DepartureRecord]) -> Result<DatasetSummary> {
    let devs: Vec<f64> = records.iter().map(deviation).collect();
    let (mean, std) = mean_std(&devs).ok_or(Error::Empty("record set"))?;
    let trips: BTreeSet<_> = records
        .iter()
        .map(|r| (&r.half_trip_id, r.service_date, &r.route_id, r.direction))
        .collect();
    let routes: BTreeSet<_> = records.iter().map(|r| &r.route_id).collect();
    let stops: BTreeSet<_> = records.iter().map(|r| &r.stop_id).collect();
    let delayed = devs.iter().filter(|&&d| d > 0.0).count();
    Ok(DatasetSummary {
        n: records.len(),
        trips: trips.len(),
        routes: routes.len(),
        stops: stops.len(),
        mean_deviation: mean,
        std_deviation: std,
        delayed_fraction: delayed as f64 / records.len() as f64,
    })
}

const SEGMENT_COLUMNS: [&str; 20] = [
    "schema_version",
    "half_trip_id",
    "route_id",
    "direction",
    "service_date",
    "cur_stop_id",
    "cur_timepoint_order",
    "cur_point_type",
    "cur_scheduled",
    "cur_actual",
    "cur_scheduled_headway",
    "next_stop_id",
    "next_timepoint_order",
    "next_point_type",
    "next_scheduled",
    "next_actual",
    "next_scheduled_headway",
    "current_deviation_s",
    "next_deviation_s",
    "order_gap",
];

fn fmt_ts(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Writes the segments file, the hand-off between the preprocess and
/// feature stages.
pub fn write_segments<W: Write>(
    w: W,
    schema_version: &str,
    segments: &[TripSegment],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SEGMENT_COLUMNS)?;
    for s in segments {
        out.write_record([
            schema_version.to_string(),
            s.half_trip_id.clone(),
            s.route_id.clone(),
            s.direction.as_str().to_string(),
            s.service_date.format("%Y-%m-%d").to_string(),
            s.current.stop_id.clone(),
            s.current.timepoint_order.to_string(),
            s.current.point_type.as_str().to_string(),
            fmt_ts(s.current.scheduled_time),
            fmt_ts(s.current_actual),
            fmt_opt(s.current.scheduled_headway),
            s.next.stop_id.clone(),
            s.next.timepoint_order.to_string(),
            s.next.point_type.as_str().to_string(),
            fmt_ts(s.next.scheduled_time),
            fmt_ts(s.next_actual),
            fmt_opt(s.next.scheduled_headway),
            format!("{:?}", s.current_deviation),
            format!("{:?}", s.next_deviation),
            u8::from(s.order_gap).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

struct SegmentRow {
    schema_version: String,
    query: SegmentQuery,
    current_actual: NaiveDateTime,
    next_actual: Option<NaiveDateTime>,
    order_gap: bool,
}

fn parse_segment_row(record: &csv::StringRecord, cols: &[usize]) -> Result<SegmentRow> {
    let line = record.position().map_or(0, |p| p.line());
    let get = |i: usize| record.get(cols[i]).unwrap_or("");
    let bad = |field: &str| Error::Malformed {
        what: "segment row",
        line,
        detail: format!("field `{field}`"),
    };
    let service_date = parse_date(get(4)).ok_or_else(|| bad("service_date"))?;
    let ts = |i: usize| {
        parse_timestamp(get(i), Some(service_date)).ok_or_else(|| bad(SEGMENT_COLUMNS[i]))
    };
    let headway = |i: usize| -> Result<Option<f64>> {
        match get(i) {
            "" => Ok(None),
            s => s.parse().map(Some).map_err(|_| bad(SEGMENT_COLUMNS[i])),
        }
    };
    let order = |i: usize| {
        get(i)
            .parse::<u32>()
            .ok()
            .filter(|&o| o >= 1)
            .ok_or_else(|| bad(SEGMENT_COLUMNS[i]))
    };
    let point = |i: usize| PointType::parse(get(i)).ok_or_else(|| bad(SEGMENT_COLUMNS[i]));

    let current = StopVisit {
        stop_id: get(5).to_string(),
        timepoint_order: order(6)?,
        point_type: point(7)?,
        scheduled_time: ts(8)?,
        scheduled_headway: headway(10)?,
    };
    let current_actual = ts(9)?;
    let next = StopVisit {
        stop_id: get(11).to_string(),
        timepoint_order: order(12)?,
        point_type: point(13)?,
        scheduled_time: ts(14)?,
        scheduled_headway: headway(16)?,
    };
    let next_actual = match get(15) {
        "" => None,
        _ => Some(ts(15)?),
    };
    let gap = match get(19) {
        "1" => true,
        "0" | "" => false,
        _ => return Err(bad("order_gap")),
    };
    Ok(SegmentRow {
        schema_version: get(0).to_string(),
        query: SegmentQuery {
            half_trip_id: get(1).to_string(),
            route_id: get(2).to_string(),
            direction: Direction::parse(get(3)).ok_or_else(|| bad("direction"))?,
            service_date,
            current_deviation: seconds_between(current.scheduled_time, current_actual),
            current,
            next,
        },
        current_actual,
        next_actual,
        order_gap: gap,
    })
}

fn read_rows<R: Read>(r: R, need_target: bool) -> Result<Vec<SegmentRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers()?.clone();
    let cols = SEGMENT_COLUMNS
        .iter()
        .map(|c| {
            let found = headers.iter().position(|h| h.eq_ignore_ascii_case(c));
            let optional = matches!(
                *c,
                "next_actual" | "next_deviation_s" | "order_gap" | "current_deviation_s"
            );
            match found {
                Some(i) => Ok(i),
                None if optional && !(need_target && *c == "next_actual") => Ok(usize::MAX),
                None => Err(Error::MissingColumn((*c).to_string())),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    rdr.records()
        .map(|rec| parse_segment_row(&rec?, &cols))
        .collect()
}

/// Reads a segments file, returning its schema version and the segments.
pub fn read_segments<R: Read>(r: R) -> Result<(Option<String>, Vec<TripSegment>)> {
    let rows = read_rows(r, true)?;
    let version = rows.first().map(|row| row.schema_version.clone());
    let segments = rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let next_actual = row.next_actual.ok_or_else(|| Error::Malformed {
                what: "segment row",
                line: i as u64 + 2,
                detail: "missing next_actual".into(),
            })?;
            let q = row.query;
            Ok(TripSegment {
                next_deviation: seconds_between(q.next.scheduled_time, next_actual),
                current_actual: row.current_actual,
                next_actual,
                order_gap: row.order_gap,
                half_trip_id: q.half_trip_id,
                route_id: q.route_id,
                direction: q.direction,
                service_date: q.service_date,
                current: q.current,
                next: q.next,
                current_deviation: q.current_deviation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((version, segments))
}

/// Reads prediction queries: the segments format where `next_actual` and
/// `next_deviation_s` may be empty or absent. Each query is paired with
/// the schema version its row declares.
pub fn read_queries<R: Read>(r: R) -> Result<Vec<(String, SegmentQuery)>> {
    Ok(read_rows(r, false)?
        .into_iter()
        .map(|row| (row.schema_version, row.query))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::StandardType;

    pub(crate) fn record(
        trip: &str,
        order: u32,
        sched: (u32, u32, u32),
        dev_s: i64,
    ) -> DepartureRecord {
        let day = NaiveDate::from_ymd_opt(2023, 1, 9).unwrap();
        let scheduled_time = day.and_hms_opt(sched.0, sched.1, sched.2).unwrap();
        DepartureRecord {
            service_date: day,
            route_id: "1".into(),
            direction: Direction::Inbound,
            half_trip_id: trip.into(),
            stop_id: format!("s{order}"),
            timepoint_id: format!("tp{order}"),
            timepoint_order: order,
            point_type: PointType::Midpoint,
            standard_type: StandardType::Schedule,
            scheduled_time,
            actual_time: scheduled_time + chrono::TimeDelta::seconds(dev_s),
            scheduled_headway: Some(600.0),
            headway: None,
        }
    }

    #[test]
    fn deviation_sign() {
        assert_eq!(deviation(&record("a", 1, (10, 0, 0), 0)), 0.0);
        assert_eq!(deviation(&record("a", 1, (10, 0, 0), 150)), 150.0);
        assert_eq!(deviation(&record("a", 1, (10, 0, 0), -45)), -45.0);
    }

    #[test]
    fn published_thresholds() {
        let s = DeviationStats::from_moments(261.84, 309.996, 2.0, 0);
        assert!((s.high - 881.832).abs() < 1e-9);
        assert!((s.low + 358.152).abs() < 1e-9);
    }

    #[test]
    fn thresholds_small_cases() {
        let s = outlier_thresholds(&[5.0, 5.0, 5.0], 2.0).unwrap();
        assert_eq!((s.mean, s.std_dev, s.low, s.high), (5.0, 0.0, 5.0, 5.0));

        let s = outlier_thresholds(&[0.0, 10.0, 20.0], 2.0).unwrap();
        assert!((s.mean - 10.0).abs() < 1e-12);
        assert!((s.std_dev - 8.16497).abs() < 1e-5);
        assert!((s.low + 6.32993).abs() < 1e-5);
        assert!((s.high - 26.32993).abs() < 1e-5);

        assert!(matches!(outlier_thresholds(&[], 2.0), Err(Error::Empty(_))));
    }

    #[test]
    fn boundary_is_inclusive() {
        let s = DeviationStats::from_moments(0.0, 10.0, 2.0, 1);
        let (kept, dropped) = filter_outliers(vec![record("a", 1, (10, 0, 0), 20)], &s);
        assert_eq!((kept.len(), dropped), (1, 0));
    }

    #[test]
    fn planted_extremes_are_dropped() {
        let devs = [60, 62, 58, 61, 59, 63, 57, 60, 5000, -4000];
        let recs: Vec<_> = devs
            .iter()
            .enumerate()
            .map(|(i, &d)| record("t", i as u32 + 1, (10, 0, 0), d))
            .collect();
        // Recompute the inlier set by brute force from the eight regular values.
        let regular: Vec<f64> = devs[..8].iter().map(|&d| d as f64).collect();
        let mean = regular.iter().sum::<f64>() / 8.0;
        let sd = (regular.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0).sqrt();
        assert!(devs[8] as f64 > mean + 2.0 * sd && (devs[9] as f64) < mean - 2.0 * sd);

        let all: Vec<f64> = recs.iter().map(deviation).collect();
        let stats = outlier_thresholds(&all, 1.0).unwrap();
        let (kept, dropped) = filter_outliers(recs, &stats);
        assert_eq!(dropped, 2);
        assert!(kept.iter().all(|r| deviation(r).abs() < 100.0));
    }

    #[test]
    fn assembly_sorts_and_dedups() {
        let recs = vec![
            record("a", 2, (10, 5, 0), 0),
            record("a", 1, (10, 0, 0), 0),
            record("b", 1, (11, 0, 0), 0),
            record("a", 3, (10, 9, 0), 0),
            record("a", 2, (10, 5, 0), 99),
        ];
        let asm = assemble_trips(recs);
        assert_eq!(asm.trips.len(), 2);
        let orders: Vec<u32> = asm.trips[0]
            .records
            .iter()
            .map(|r| r.timepoint_order)
            .collect();
        assert_eq!(orders, [1, 2, 3]);
        assert_eq!(asm.duplicate_orders, 1);
        assert_eq!(
            deviation(&asm.trips[0].records[1]),
            0.0,
            "first occurrence kept"
        );
    }

    #[test]
    fn segment_counts() {
        for (len, expected) in [(1u32, 0usize), (3, 2), (14, 13)] {
            let recs = (1..=len).map(|o| record("t", o, (10, o, 0), 0)).collect();
            let asm = assemble_trips(recs);
            assert_eq!(segment_trips(&asm.trips, Exec::Sequential).len(), expected);
        }
    }

    #[test]
    fn gaps_pair_sorted_neighbours() {
        let recs = vec![
            record("t", 1, (10, 0, 0), 0),
            record("t", 3, (10, 5, 0), 30),
        ];
        let segs = segment_trips(&assemble_trips(recs).trips, Exec::Sequential);
        assert_eq!(segs.len(), 1);
        assert!(segs[0].order_gap);
        assert_eq!(segs[0].next_deviation, 30.0);
    }

    #[test]
    fn delayed_fraction() {
        let recs: Vec<_> = [10, 20, 30, -5]
            .iter()
            .enumerate()
            .map(|(i, &d)| record("t", i as u32 + 1, (10, i as u32, 0), d))
            .collect();
        assert_eq!(dataset_stats(&recs).unwrap().delayed_fraction, 0.75);
        let zeros: Vec<_> = (1..4).map(|o| record("t", o, (10, o, 0), 0)).collect();
        assert_eq!(dataset_stats(&zeros).unwrap().delayed_fraction, 0.0);
        assert!(dataset_stats(&[]).is_err());
    }

    #[test]
    fn segments_file_round_trip() {
        let recs = (1..=4)
            .map(|o| record("t", o, (10, o, 0), o as i64 * 7))
            .collect();
        let segs = segment_trips(&assemble_trips(recs).trips, Exec::Sequential);
        let mut buf = Vec::new();
        write_segments(&mut buf, "v-test", &segs).unwrap();
        let (version, back) = read_segments(buf.as_slice()).unwrap();
        assert_eq!(version.as_deref(), Some("v-test"));
        assert_eq!(back, segs);
        let queries = read_queries(buf.as_slice()).unwrap();
        assert_eq!(queries[1].1, segs[1].query());
    }
}
