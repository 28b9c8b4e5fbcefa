//! Training loop with per-epoch validation and checkpoint selection, the
//! feature store feeding it, and the multi-split, multi-run protocol.

mod config;
mod run;
mod store;

pub use config::{Backbone, LossWeighting, SelectionMetric, TrainConfig};
pub use run::{
    checkpoint_backbone, epoch_order, evaluate_fold, predict_recordings, run_protocol, score_predictions, train_one,
    EpochMetric, ProtocolResult, RunResult,
};
pub use store::{build_training_set, logmel_embeddings, FeatureSource, FeatureStore, RecordingFeatures, SourceKind, TrainInput, TrainingExample};
