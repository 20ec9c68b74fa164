use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::features::SegmentKey;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            val: 0.2,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig(format!(
                "split fractions {}/{}/{} must be in [0,1] and sum to 1",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }

    /// `(⌊train·n⌋, ⌊val·n⌋)`; the test part takes the remainder. The small
    /// offset absorbs representation error such as `0.7 * 30 = 20.999…`.
    fn sizes(&self, n: usize) -> (usize, usize) {
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        (floor(self.train), floor(self.val))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

const MIN_EXAMPLES: usize = 10;

/// Seeded random partition of `0..n` at example granularity.
pub fn split_indices(n: usize, fractions: &SplitFractions, seed: u64) -> Result<Split> {
    fractions.validate()?;
    if n < MIN_EXAMPLES {
        return Err(Error::InvalidConfig(format!(
            "need at least {MIN_EXAMPLES} examples to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, "split"));
    let (n_train, n_val) = fractions.sizes(n);
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok(Split {
        train: order,
        val,
        test,
    })
}

/// Partition that keeps every segment of a trip in the same part. Trips
/// are shuffled and assigned in turn until each part reaches its floor
/// size, so part sizes can overshoot by at most one trip.
pub fn split_by_trip(keys: &[SegmentKey], fractions: &SplitFractions, seed: u64) -> Result<Split> {
    fractions.validate()?;
    let n = keys.len();
    if n < MIN_EXAMPLES {
        return Err(Error::InvalidConfig(format!(
            "need at least {MIN_EXAMPLES} examples to split, got {n}"
        )));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<(&chrono::NaiveDate, &str), usize> = HashMap::new();
    for (i, k) in keys.iter().enumerate() {
        let g = *index
            .entry((&k.service_date, k.half_trip_id.as_str()))
            .or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
        groups[g].push(i);
    }
    groups.shuffle(&mut seed::rng(seed, "split"));
    let (n_train, n_val) = fractions.sizes(n);
    let mut split = Split::default();
    for g in groups {
        let part = if split.train.len() < n_train {
            &mut split.train
        } else if split.val.len() < n_val {
            &mut split.val
        } else {
            &mut split.test
        };
        part.extend(g);
    }
    Ok(split)
}
