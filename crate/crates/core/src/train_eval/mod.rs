//! Splitting, training, evaluation, ablation and the departure-time
//! predictor.

mod ablation;
mod metrics;
mod predict;
mod report;
mod split;
mod train;

pub use ablation::{ablate, select_optimal, AblationRow, SELECTION_TOLERANCE};
pub use metrics::{
    evaluate, mae, mape, per_route_rmse, rmse, EvalReport, RouteError, HISTOGRAM_BIN_S,
};
pub use predict::{measure_latency, predict_departure, DeparturePrediction};
pub use report::{read_history, write_ablation, write_history, write_report, ReportBundle};
pub use split::{split_by_trip, split_indices, Split, SplitFractions};
pub use train::{prepare, train, EpochLoss, Prepared, TrainConfig};
