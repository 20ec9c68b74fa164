use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::split::{split_by_trip, split_indices, SplitFractions};
use crate::error::{Error, Result};
use crate::features::{
    encode_dataset, fit_scaler, scale_dataset, Dataset, FeatureSchema, ScalerParams, WeatherIndex,
};
use crate::ingest::StopLocation;
use crate::nn::{adam_step, mse, AdamState, Network, NetworkSpec};
use crate::par::Exec;
use crate::preprocess::TripSegment;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub split: SplitFractions,
    /// Keep all segments of a trip in the same split part.
    pub split_by_trip: bool,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.01,
            batch_size: 1000,
            seed: 0,
            split: SplitFractions::default(),
            split_by_trip: false,
            exec: Exec::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        self.split.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    /// NaN when the validation set is empty.
    pub val_mse: f64,
}

/// Mini-batch Adam on mean squared error. Returns the final-epoch network
/// and per-epoch losses, each measured with a full pass after the epoch.
pub fn train(
    spec: &NetworkSpec,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
) -> Result<(Network, Vec<EpochLoss>)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut net = Network::init(spec, seed::derive(config.seed, "init"))?;
    let mut adam = AdamState::new(&net, config.learning_rate);
    let mut rng = seed::rng(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let full_mse = |net: &Network, data: &Dataset| -> Result<f64> {
        if data.is_empty() {
            return Ok(f64::NAN);
        }
        mse(&net.predict_dataset(data, config.exec)?, &data.targets)
    };
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let (grads, _) = net.batch_gradient(train_set, batch, config.exec)?;
            adam_step(&mut net, &grads, &mut adam)?;
        }
        history.push(EpochLoss {
            epoch,
            train_mse: full_mse(&net, train_set)?,
            val_mse: full_mse(&net, val_set)?,
        });
    }
    Ok((net, history))
}

/// Encoded and scaled splits ready for training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: FeatureSchema,
    pub scaler: ScalerParams,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Encodes segments, splits them under `config.seed`, fits the scaler on
/// the training part only and applies it to all three parts.
pub fn prepare(
    segments: &[TripSegment],
    weather: &WeatherIndex,
    stops: &BTreeMap<String, StopLocation>,
    schema: FeatureSchema,
    config: &TrainConfig,
) -> Result<Prepared> {
    config.validate()?;
    let all = encode_dataset(segments, weather, stops, &schema, config.exec)?;
    let split = if config.split_by_trip {
        split_by_trip(&all.keys, &config.split, config.seed)?
    } else {
        split_indices(all.len(), &config.split, config.seed)?
    };
    let mut train = all.subset(&split.train);
    let mut val = all.subset(&split.val);
    let mut test = all.subset(&split.test);
    let scaler = fit_scaler(&train, config.exec)?;
    for part in [&mut train, &mut val, &mut test] {
        scale_dataset(part, &scaler, config.exec)?;
    }
    Ok(Prepared {
        schema,
        scaler,
        train,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SegmentKey;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn key() -> SegmentKey {
        SegmentKey {
            service_date: chrono::NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(),
            half_trip_id: "t".into(),
            next_order: 2,
        }
    }

    /// `target = 3·x₃ + N(0, 1)` with `x ~ U(0,1)^dims`.
    fn linear_task(n: usize, dims: usize, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
            .collect();
        let targets = rows
            .iter()
            .map(|r| 3.0 * r[3] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dataset::from_rows(rows, targets, vec![0; n], vec![key(); n]).unwrap()
    }

    #[test]
    fn linear_task_is_learned() {
        let data = linear_task(4000, 173, 1);
        let cfg = TrainConfig {
            batch_size: 32,
            seed: 5,
            ..Default::default()
        };
        let (_, hist) = train(
            &NetworkSpec::new(173, vec![], 1),
            &data,
            &Dataset::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(hist.len(), 10);
        let last = hist.last().unwrap();
        assert!(last.train_mse < 2.0, "final train MSE {}", last.train_mse);
        assert!(last.val_mse.is_nan());
    }

    #[test]
    fn zero_epochs_rejected() {
        let data = linear_task(20, 4, 1);
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(
            train(&NetworkSpec::new(4, vec![], 1), &data, &data, &cfg),
            Err(Error::InvalidConfig(_))
        ));
        assert!(train(
            &NetworkSpec::new(4, vec![], 1),
            &Dataset::default(),
            &data,
            &TrainConfig::default()
        )
        .is_err());
    }

    #[test]
    fn training_is_deterministic_across_exec_modes() {
        let data = linear_task(300, 6, 2);
        let spec = NetworkSpec::new(6, vec![8, 4], 1);
        let run = |exec| {
            let cfg = TrainConfig {
                epochs: 3,
                batch_size: 100,
                seed: 9,
                exec,
                ..Default::default()
            };
            train(&spec, &data, &data, &cfg).unwrap()
        };
        let (a, ha) = run(Exec::Parallel);
        let (b, hb) = run(Exec::Sequential);
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }
}
