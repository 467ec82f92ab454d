//! Classification metrics, over-smoothing diagnostics and the experiment
//! drivers built on top of cross-validated training.

pub mod experiments;
mod metrics;
mod smoothing;

use thiserror::Error;

pub use metrics::{classification_metrics, confusion, evaluate, roc_auc, ConfusionCounts, MetricsReport, TnrForm};
pub use smoothing::{mean_pairwise_distance, smoothing_profile, SmoothingProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("AUC is undefined when all labels belong to one class")]
    DegenerateLabels,
    #[error("score is NaN or infinite")]
    NonFiniteScore,
}
