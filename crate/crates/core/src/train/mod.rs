//! Training loops, the reversal-weight schedule and evaluation metrics.

pub mod config;
pub mod metrics;
pub mod probe;
pub mod schedule;
pub mod trainer;

pub use config::{EarlyStop, TrainConfig};
pub use metrics::{accuracy, evaluate, improvement, Improvement, MetricsReport};
pub use probe::{class_matched_rows, domain_probe, feature_dca};
pub use schedule::{lambda_at, LambdaSchedule};
pub use trainer::{
    dann_step, DannOptimizer, train_baseline, train_classifier, train_dann, train_dann_model, EpochRecord,
    History, StepRecord, TrainData,
};
