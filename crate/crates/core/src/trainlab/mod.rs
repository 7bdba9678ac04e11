//! Mix-and-separate training, evaluation on a frozen test set, the fusion x
//! alignment ablation grid, and probing of the learned bottleneck.

mod ablate;
mod bench;
mod config;
mod eval;
mod probe;
mod train;

pub use ablate::{ablate, AblationCell, AblationReport};
pub use bench::{BenchItem, Benchmark, Frontend};
pub use config::{AcousticConfig, EvalConfig, ExperimentConfig, FeatureConfig, Objective, TrainSection};
pub use eval::{Estimator, EvalRow, EvalTable};
pub use probe::{ProbeGapReport, ALIGNED_ROW, CLAP_ROW, UNALIGNED_ROW};
pub use train::{load_model, write_loss_csv, ExperimentRun, Lab, LossRecord};

use std::path::Path;

use crate::error::Result;

/// Train with `cfg` (writing the run to `out` when given).
pub fn train(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentRun> {
    Lab::new(cfg.clone())?.train(out)
}
