use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureSchema};
use crate::nn::Network;
use crate::par::Exec;

fn check(predictions: &[f64], actuals: &[f64]) -> Result<()> {
    if predictions.len() != actuals.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: actuals.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(())
}

/// `sqrt(Σ (actual - predicted)² / m)`
pub fn rmse(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    check(predictions, actuals)?;
    let sse: f64 = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (a - p) * (a - p))
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

pub fn mae(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    check(predictions, actuals)?;
    let sae: f64 = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (a - p).abs())
        .sum();
    Ok(sae / predictions.len() as f64)
}

/// Mean absolute percentage error over pairs with a non-zero actual, and
/// the number of pairs skipped because the actual was zero.
pub fn mape(predictions: &[f64], actuals: &[f64]) -> Result<(f64, usize)> {
    if predictions.len() != actuals.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: actuals.len(),
        });
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, a) in predictions.iter().zip(actuals) {
        if *a != 0.0 {
            sum += ((p - a) / a).abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::AllTargetsZero);
    }
    Ok((100.0 * sum / used as f64, actuals.len() - used))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteError {
    pub n: usize,
    pub rmse: f64,
}

/// RMSE restricted to each route present in the evaluation set.
pub fn per_route_rmse(
    predictions: &[f64],
    actuals: &[f64],
    routes: &[usize],
    schema: &FeatureSchema,
) -> Result<BTreeMap<String, RouteError>> {
    check(predictions, actuals)?;
    if routes.len() != actuals.len() {
        return Err(Error::LengthMismatch {
            left: routes.len(),
            right: actuals.len(),
        });
    }
    let mut acc: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for ((p, a), &r) in predictions.iter().zip(actuals).zip(routes) {
        let e = acc.entry(r).or_default();
        e.0 += 1;
        e.1 += (a - p) * (a - p);
    }
    acc.into_iter()
        .map(|(r, (n, sse))| {
            let name = schema
                .routes()
                .get(r)
                .cloned()
                .ok_or_else(|| Error::UnknownRoute(format!("index {r}")))?;
            Ok((
                name,
                RouteError {
                    n,
                    rmse: (sse / n as f64).sqrt(),
                },
            ))
        })
        .collect()
}

pub const HISTOGRAM_BIN_S: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_test: usize,
    pub rmse: f64,
    pub mae: f64,
    /// `None` when every target is zero.
    pub mape: Option<f64>,
    pub mape_excluded: usize,
    pub baseline_rmse: f64,
    pub per_route: BTreeMap<String, RouteError>,
    /// `(bin_lo_s, count)` over the evaluated targets.
    pub target_histogram: Vec<(f64, usize)>,
}

fn histogram(values: &[f64], width: f64) -> Vec<(f64, usize)> {
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for v in values {
        *bins.entry((v / width).floor() as i64).or_default() += 1;
    }
    bins.into_iter()
        .map(|(b, c)| (b as f64 * width, c))
        .collect()
}

pub fn evaluate(
    net: &Network,
    data: &Dataset,
    schema: &FeatureSchema,
    exec: Exec,
) -> Result<EvalReport> {
    let preds = net.predict_dataset(data, exec)?;
    let (mape, mape_excluded) = match mape(&preds, &data.targets) {
        Ok((m, ex)) => (Some(m), ex),
        Err(Error::AllTargetsZero) => (None, data.len()),
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        n_test: data.len(),
        rmse: rmse(&preds, &data.targets)?,
        mae: mae(&preds, &data.targets)?,
        mape,
        mape_excluded,
        baseline_rmse: rmse(&vec![0.0; data.len()], &data.targets)?,
        per_route: per_route_rmse(&preds, &data.targets, &data.routes, schema)?,
        target_histogram: histogram(&data.targets, HISTOGRAM_BIN_S),
    })
}
