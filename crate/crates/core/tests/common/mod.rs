#![allow(dead_code)]

use std::collections::BTreeMap;

use busdev_core::features::WeatherIndex;
use busdev_core::ingest::{self, ParseConfig, StopLocation};
use busdev_core::preprocess::{self, Cleaned};
use busdev_core::synth::{self, SynthConfig, SynthData};
use busdev_core::Exec;

pub struct Pipeline {
    pub data: SynthData,
    pub cleaned: Cleaned,
    pub weather: WeatherIndex,
    pub stops: BTreeMap<String, StopLocation>,
    pub departure_rejects: usize,
    pub weather_rejects: usize,
}

/// Generates a synthetic bundle, writes it to CSV in memory and runs it
/// back through ingest and preprocess.
pub fn synth_pipeline(config: &SynthConfig, k: f64, exec: Exec) -> Pipeline {
    let data = synth::generate(config, exec).unwrap();
    let parse = ParseConfig {
        exec,
        ..Default::default()
    };
    let mut buf = Vec::new();
    data.write_departures(&mut buf).unwrap();
    let (records, rejects) = ingest::parse_departures(&buf[..], &parse).unwrap();
    buf.clear();
    data.write_weather(&mut buf).unwrap();
    let (obs, weather_rejects) = ingest::parse_weather(&buf[..], &parse).unwrap();
    buf.clear();
    data.write_stops(&mut buf).unwrap();
    let stops = ingest::parse_stops(&buf[..], &parse).unwrap();
    let cleaned = preprocess::clean(records, k, exec).unwrap();
    Pipeline {
        data,
        cleaned,
        weather: WeatherIndex::new(obs),
        stops,
        departure_rejects: rejects.len(),
        weather_rejects: weather_rejects.len(),
    }
}
