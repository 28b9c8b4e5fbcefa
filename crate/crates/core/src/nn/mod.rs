//! Dense tensors with reverse-mode gradients, the batch-norm + linear head,
//! the MLP backbone, AdamW and the warm-up cosine schedule.

mod checkpoint;
pub mod gradcheck;
mod loss;
mod model;
mod optim;
mod schedule;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointHeader, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{gradcheck, gradcheck_with_step, GradCheckCase, GradCheckReport};
pub use loss::{softmax_rows, weighted_cross_entropy, weighted_cross_entropy_value};
pub use model::{Classifier, Forward, HeadModel, MlpBackbone, ModelSpec, Mode, BN_EPS, BN_MOMENTUM, NUM_CLASSES};
pub use optim::{AdamW, AdamWConfig};
pub use schedule::{lr_at, CosineSchedule};
pub use tape::{log_softmax_row, Gradients, Tape, Var};
pub use tensor::{Param, Scalar, Tensor};
