//! With zero noise the linear synthetic process is an exact linear function
//! of the encoded features, so ordinary least squares recovers it.

mod common;

use busdev_core::features::{encode_dataset, fit_scaler, scale_dataset, Dataset, FeatureSchema};
use busdev_core::synth::{oracle_rmse, GroundTruth, Process, SynthConfig};
use busdev_core::train_eval::{rmse, split_indices, SplitFractions};
use busdev_core::Exec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

fn design(data: &Dataset) -> DMatrix<f64> {
    let d = data.dims();
    DMatrix::from_fn(
        data.len(),
        d + 1,
        |i, j| if j == d { 1.0 } else { data.row(i)[j] },
    )
}

#[test]
fn noiseless_linear_process_is_recovered_exactly() {
    let cfg = SynthConfig {
        n_trips: 400,
        noise_std: 0.0,
        seed: 21,
        process: Process::Linear,
        ..Default::default()
    };
    let p = common::synth_pipeline(&cfg, f64::INFINITY, Exec::Parallel);
    let schema = FeatureSchema::from_segments(&p.cleaned.segments);
    let mut data = encode_dataset(
        &p.cleaned.segments,
        &p.weather,
        &p.stops,
        &schema,
        Exec::Parallel,
    )
    .unwrap();
    let split = split_indices(data.len(), &SplitFractions::default(), 3).unwrap();
    let train = data.subset(&split.train);
    let scaler = fit_scaler(&train, Exec::Parallel).unwrap();
    scale_dataset(&mut data, &scaler, Exec::Parallel).unwrap();
    let (train, test) = (data.subset(&split.train), data.subset(&split.test));

    let w = design(&train)
        .svd(true, true)
        .solve(&DVector::from_column_slice(&train.targets), 1e-10)
        .unwrap();
    let pred = design(&test) * w;
    let err = rmse(pred.as_slice(), &test.targets).unwrap();
    assert!(err < 1e-6, "held-out RMSE {err:e}");

    // The fitted predictions also match the noise-free ground truth.
    let truth: Vec<GroundTruth> = split
        .test
        .iter()
        .map(|&i| {
            let s = &p.cleaned.segments[i];
            GroundTruth {
                half_trip_id: s.half_trip_id.clone(),
                timepoint_order: s.next.timepoint_order,
                deviation_s: p
                    .data
                    .truth
                    .iter()
                    .find(|t| {
                        t.half_trip_id == s.half_trip_id
                            && t.timepoint_order == s.next.timepoint_order
                    })
                    .unwrap()
                    .deviation_s,
            }
        })
        .collect();
    let predictions: Vec<GroundTruth> = truth
        .iter()
        .zip(pred.iter())
        .map(|(t, &d)| GroundTruth {
            deviation_s: d,
            ..t.clone()
        })
        .collect();
    assert!(oracle_rmse(&truth, &predictions).unwrap() < 1e-6);
}

#[test]
fn oracle_rmse_agrees_with_metric_rmse() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let truth: Vec<GroundTruth> = (0..1000)
        .map(|i| GroundTruth {
            half_trip_id: format!("t{}", i / 10),
            timepoint_order: (i % 10) as u32 + 2,
            deviation_s: rng.random_range(-600.0..900.0),
        })
        .collect();
    let predictions: Vec<GroundTruth> = truth
        .iter()
        .map(|t| GroundTruth {
            deviation_s: t.deviation_s + rng.random_range(-120.0..120.0),
            ..t.clone()
        })
        .collect();
    let a = oracle_rmse(&truth, &predictions).unwrap();
    let p: Vec<f64> = predictions.iter().map(|g| g.deviation_s).collect();
    let t: Vec<f64> = truth.iter().map(|g| g.deviation_s).collect();
    let b = rmse(&p, &t).unwrap();
    assert!(((a - b) / b).abs() < 1e-9, "{a} vs {b}");
}
