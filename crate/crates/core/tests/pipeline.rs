mod common;

use std::path::PathBuf;

use busdev_core::features::{encode, FeatureSchema};
use busdev_core::ingest::{self, ParseConfig};
use busdev_core::preprocess::{self, assemble_trips};
use busdev_core::synth::{Process, SynthConfig};
use busdev_core::Exec;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn data_rows(name: &str) -> usize {
    std::fs::read_to_string(fixture(name))
        .unwrap()
        .lines()
        .count()
        - 1
}

#[test]
fn fixture_rows_are_conserved() {
    let cfg = ParseConfig::default();
    let (records, rejects) =
        ingest::parse_departures(ingest::open(&fixture("departures.csv")).unwrap(), &cfg).unwrap();
    assert_eq!(records.len() + rejects.len(), data_rows("departures.csv"));
    assert_eq!(rejects.len(), 3);
    let lines: Vec<u64> = rejects.iter().map(|r| r.line_no).collect();
    assert_eq!(lines, [7, 12, 13]);
    assert_eq!(rejects[0].reason.to_string(), "missing_actual_time");

    let (obs, weather_rejects) =
        ingest::parse_weather(ingest::open(&fixture("weather.csv")).unwrap(), &cfg).unwrap();
    assert_eq!(obs.len() + weather_rejects.len(), data_rows("weather.csv"));
    assert_eq!(
        weather_rejects[0].reason.to_string(),
        "unmapped_condition:Volcanic ash"
    );

    let stops = ingest::parse_stops(ingest::open(&fixture("stops.csv")).unwrap(), &cfg).unwrap();
    assert_eq!(stops.len(), 7);
}

#[test]
fn fixture_segments_follow_trip_lengths() {
    let cfg = ParseConfig::default();
    let (records, _) =
        ingest::parse_departures(ingest::open(&fixture("departures.csv")).unwrap(), &cfg).unwrap();
    let assembly = assemble_trips(records.clone());
    let lengths: Vec<usize> = assembly.trips.iter().map(|t| t.records.len()).collect();
    // Trip 101 runs on two service dates and stays two trips.
    assert_eq!(lengths, [3, 1, 3, 2, 2]);
    let expected: usize = lengths.iter().map(|&l| l.saturating_sub(1)).sum();

    let cleaned = preprocess::clean(records, f64::INFINITY, Exec::Sequential).unwrap();
    assert_eq!(cleaned.segments.len(), expected);
    assert_eq!(cleaned.single_stop_trips, 1);
    assert!(cleaned.segments.iter().all(|s| s.half_trip_id != "102"));
    assert_eq!(cleaned.segments.iter().filter(|s| s.order_gap).count(), 1);

    let overnight = cleaned
        .segments
        .iter()
        .find(|s| s.half_trip_id == "106")
        .unwrap();
    assert_eq!(overnight.current_deviation, 120.0);
    assert_eq!(overnight.next_deviation, -30.0);
    assert_eq!(
        overnight.next.scheduled_time.to_string(),
        "2023-01-11 00:05:00"
    );
}

#[test]
fn fixture_segments_encode() {
    let cfg = ParseConfig::default();
    let (records, _) =
        ingest::parse_departures(ingest::open(&fixture("departures.csv")).unwrap(), &cfg).unwrap();
    let (obs, _) =
        ingest::parse_weather(ingest::open(&fixture("weather.csv")).unwrap(), &cfg).unwrap();
    let stops = ingest::parse_stops(ingest::open(&fixture("stops.csv")).unwrap(), &cfg).unwrap();
    let weather = busdev_core::features::WeatherIndex::new(obs);
    let segments = preprocess::clean(records, 2.0, Exec::Sequential)
        .unwrap()
        .segments;
    let schema = FeatureSchema::from_segments(&segments);
    assert_eq!(schema.routes(), ["1", "2"]);
    for s in &segments {
        let v = encode(s, &weather, &stops, &schema).unwrap();
        assert_eq!(v.values.len(), 24);
        assert_eq!(v.target, s.next_deviation);
    }
}

#[test]
fn synthetic_bundle_survives_the_pipeline() {
    let cfg = SynthConfig {
        n_trips: 300,
        seed: 11,
        process: Process::Linear,
        ..Default::default()
    };
    let p = common::synth_pipeline(&cfg, f64::INFINITY, Exec::Parallel);
    assert_eq!(p.departure_rejects, 0);
    assert_eq!(p.weather_rejects, 0);
    assert_eq!(p.cleaned.trips, 300);
    assert_eq!(p.cleaned.segments.len(), p.data.truth.len());
    assert_eq!(p.cleaned.segments.len(), p.data.departures.len() - 300);

    let schema = FeatureSchema::from_segments(&p.cleaned.segments);
    assert_eq!(schema.total_dims(), 22 + 8);
    for s in &p.cleaned.segments {
        encode(s, &p.weather, &p.stops, &schema).unwrap();
    }
}
