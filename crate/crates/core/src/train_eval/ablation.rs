use super::metrics::rmse;
use super::train::{train, Prepared, TrainConfig};
use crate::error::Result;
use crate::nn::{mac_count, param_count, NetworkSpec};

/// Architectures within this fraction of the best validation RMSE count as
/// equivalent; the smallest of them is selected.
pub const SELECTION_TOLERANCE: f64 = 0.015;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub spec: NetworkSpec,
    pub val_rmse: f64,
    pub test_rmse: f64,
    pub params: usize,
    pub macs: usize,
    /// `macs × 1000`, the FLOPs convention of the reference architecture table.
    pub paper_flops_convention: usize,
}

/// Trains and evaluates every spec on the same splits with the same seed.
pub fn ablate(
    specs: &[NetworkSpec],
    data: &Prepared,
    config: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    specs
        .iter()
        .map(|spec| {
            let (net, _) = train(spec, &data.train, &data.val, config)?;
            let val_rmse = if data.val.is_empty() {
                f64::NAN
            } else {
                rmse(
                    &net.predict_dataset(&data.val, config.exec)?,
                    &data.val.targets,
                )?
            };
            let test_rmse = rmse(
                &net.predict_dataset(&data.test, config.exec)?,
                &data.test.targets,
            )?;
            let macs = mac_count(spec);
            Ok(AblationRow {
                spec: spec.clone(),
                val_rmse,
                test_rmse,
                params: param_count(spec),
                macs,
                paper_flops_convention: macs * 1000,
            })
        })
        .collect()
}

/// Index of the row with the fewest parameters among those whose
/// validation RMSE is within [`SELECTION_TOLERANCE`] of the best.
pub fn select_optimal(rows: &[AblationRow]) -> Option<usize> {
    let best = rows
        .iter()
        .map(|r| r.val_rmse)
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    rows.iter()
        .enumerate()
        .filter(|(_, r)| r.val_rmse <= best * (1.0 + SELECTION_TOLERANCE))
        .min_by_key(|(_, r)| r.params)
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(hidden: Vec<usize>, val: f64) -> AblationRow {
        let spec = NetworkSpec::new(10, hidden, 1);
        AblationRow {
            params: param_count(&spec),
            macs: mac_count(&spec),
            paper_flops_convention: mac_count(&spec) * 1000,
            spec,
            val_rmse: val,
            test_rmse: val,
        }
    }

    #[test]
    fn selection_prefers_small_models_near_the_best() {
        let rows = vec![
            row(vec![256], 87.2),
            row(vec![512, 128, 64], 77.8),
            row(vec![1024, 512, 128, 64, 32], 76.9),
        ];
        assert_eq!(select_optimal(&rows), Some(1));
        let rows = vec![row(vec![256], 77.0), row(vec![512], 76.0)];
        assert_eq!(select_optimal(&rows), Some(0));
        assert_eq!(select_optimal(&[]), None);
    }
}
