//! Synthetic tasks, training, evaluation and diagnostics.

pub mod curves;
pub mod evaluate;
pub mod experiment;
pub mod metrics;
pub mod optim;
pub mod synth;
pub mod train;

pub use curves::{export_curves, triangular_fit, symmetry_axis_summary, ProbeGrid, CurveRow};
pub use experiment::Experiment;
pub use evaluate::{evaluate, metrics_for, predict_dataset};
pub use metrics::{angular_stats, quantile, regression_metrics, AngularStats, Metrics};
pub use optim::{adam_step, cosine_lr, AdamState, TrainConfig};
pub use synth::{synth_generate, SynthGenerator, SynthTaskSpec};
pub use train::{train, write_history_csv, EpochRecord, TrainOptions, TrainOutcome};
