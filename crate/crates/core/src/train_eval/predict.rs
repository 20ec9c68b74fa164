use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use chrono::{NaiveDateTime, TimeDelta};

use crate::error::Result;
use crate::features::{encode_into, Dataset, WeatherIndex};
use crate::ingest::StopLocation;
use crate::nn::{ForwardCache, Model, Network};
use crate::preprocess::SegmentContext;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeparturePrediction {
    /// Predicted deviation at the next stop, seconds.
    pub deviation_s: f64,
    /// Next scheduled departure plus the deviation rounded to whole seconds.
    pub departure: NaiveDateTime,
}

impl DeparturePrediction {
    pub fn from_schedule(scheduled: NaiveDateTime, deviation_s: f64) -> Self {
        DeparturePrediction {
            deviation_s,
            departure: scheduled + TimeDelta::seconds(deviation_s.round() as i64),
        }
    }
}

/// `t_pred = t_sched(next) + d_pred`, with `d_pred` from the model.
pub fn predict_departure(
    model: &Model,
    ctx: &SegmentContext<'_>,
    weather: &WeatherIndex,
    stops: &BTreeMap<String, StopLocation>,
) -> Result<DeparturePrediction> {
    let mut x = vec![0.0; model.schema.total_dims()];
    encode_into(ctx, weather, stops, &model.schema, &mut x)?;
    model.scaler.apply(&mut x);
    let d = model.network.predict(&x)?;
    Ok(DeparturePrediction::from_schedule(
        ctx.next.scheduled_time,
        d,
    ))
}

/// Mean single-sample forward latency over `rounds` passes through `data`.
pub fn measure_latency(net: &Network, data: &Dataset, rounds: usize) -> Result<Duration> {
    if data.is_empty() || rounds == 0 {
        return Ok(Duration::ZERO);
    }
    let mut cache = ForwardCache::default();
    let mut sink = 0.0;
    let start = Instant::now();
    for _ in 0..rounds {
        for row in data.rows() {
            sink += net.forward_into(row, &mut cache)?;
        }
    }
    let elapsed = start.elapsed();
    std::hint::black_box(sink);
    Ok(elapsed / (rounds * data.len()) as u32)
}
