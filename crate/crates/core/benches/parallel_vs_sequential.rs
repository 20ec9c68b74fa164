use busdev_core::features::{
    encode_dataset, fit_scaler, scale_dataset, Dataset, FeatureSchema, WeatherIndex,
};
use busdev_core::ingest::{self, ParseConfig};
use busdev_core::nn::{Network, NetworkSpec};
use busdev_core::preprocess::{self, TripSegment};
use busdev_core::synth::{self, SynthConfig};
use busdev_core::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [
    ("parallel", Exec::Parallel),
    ("sequential", Exec::Sequential),
];

struct Fixture {
    departures: Vec<u8>,
    segments: Vec<TripSegment>,
    weather: WeatherIndex,
    stops: std::collections::BTreeMap<String, ingest::StopLocation>,
    schema: FeatureSchema,
    data: Dataset,
}

fn fixture() -> Fixture {
    let data = synth::generate(
        &SynthConfig {
            n_routes: 151,
            n_trips: 2000,
            seed: 1,
            ..Default::default()
        },
        Exec::Parallel,
    )
    .unwrap();
    let mut departures = Vec::new();
    data.write_departures(&mut departures).unwrap();
    let (mut weather, mut stops) = (Vec::new(), Vec::new());
    data.write_weather(&mut weather).unwrap();
    data.write_stops(&mut stops).unwrap();
    let cfg = ParseConfig::default();
    let (records, _) = ingest::parse_departures(&departures[..], &cfg).unwrap();
    let weather = WeatherIndex::new(ingest::parse_weather(&weather[..], &cfg).unwrap().0);
    let stops = ingest::parse_stops(&stops[..], &cfg).unwrap();
    let segments = preprocess::clean(records, 2.0, Exec::Parallel)
        .unwrap()
        .segments;
    let schema = FeatureSchema::from_segments(&segments);
    let mut data = encode_dataset(&segments, &weather, &stops, &schema, Exec::Parallel).unwrap();
    let scaler = fit_scaler(&data, Exec::Parallel).unwrap();
    scale_dataset(&mut data, &scaler, Exec::Parallel).unwrap();
    Fixture {
        departures,
        segments,
        weather,
        stops,
        schema,
        data,
    }
}

fn benches(c: &mut Criterion) {
    let f = fixture();
    let net = Network::init(
        &NetworkSpec::new(f.schema.total_dims(), vec![512, 128, 64], 1),
        1,
    )
    .unwrap();
    let batch: Vec<usize> = (0..1000.min(f.data.len())).collect();

    let mut g = c.benchmark_group("parse_departures");
    for (name, exec) in MODES {
        let cfg = ParseConfig {
            exec,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ingest::parse_departures(black_box(&f.departures[..]), &cfg).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("encode_dataset");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                encode_dataset(
                    black_box(&f.segments),
                    &f.weather,
                    &f.stops,
                    &f.schema,
                    exec,
                )
                .unwrap()
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("batch_gradient_1000");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                net.batch_gradient(&f.data, black_box(&batch), exec)
                    .unwrap()
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("predict_dataset");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| net.predict_dataset(black_box(&f.data), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);
