//! Bus departure-time deviation prediction: parsing, trip segmentation,
//! feature encoding, a small fully connected network with Adam, evaluation
//! and synthetic data generation.
//!
//! Data-parallel work goes through [`par`], which runs on rayon when the
//! `parallel` feature is enabled and sequentially otherwise. Reductions use
//! fixed chunking, so results do not depend on the thread count.

pub mod error;
pub mod features;
pub mod ingest;
pub mod nn;
pub mod par;
pub mod preprocess;
pub mod seed;
pub mod synth;
pub mod train_eval;

pub use error::{Error, Result};
pub use par::Exec;
