//! Segment → recording → patient aggregation, weighted accuracy and UAR,
//! two-model ensembling and report files.

mod aggregate;
mod ensemble;
mod metrics;
mod predictions;
mod report;

pub use aggregate::{
    argmax, patient_label_rule, patient_prob_average, recording_probs, softmax, ClassScores, PatientRule, ScoreKind,
};
pub use ensemble::ensemble_two;
pub use metrics::{score_patients, unweighted_average_recall, weighted_accuracy, ConfusionCounts, MetricsReport, WACC_WEIGHTS};
pub use predictions::{patient_predictions, read_predictions, write_predictions, PredictionRecord};
pub use report::{Recalls, ReportFile};
