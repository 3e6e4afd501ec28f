//! Small convolutional network, softmax cross-entropy, Adam and a
//! deterministic trainer. Training runs in `f32`; every kernel is generic so
//! gradient checks can run in `f64`.

mod adam;
mod checkpoint;
mod layers;
mod loss;
mod model;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, TrainState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool_backward, maxpool_forward, relu_backward,
    relu_forward, ConvGrads, DenseGrads,
};
pub use loss::{argmax_rows, softmax, softmax_xent};
pub use model::{LayerSpec, ModelConfig};
pub use tensor::{Scalar, Tensor};
pub use train::{
    epoch_csv, predict_set, train, train_with, EpochMetrics, EpochView, ImageSet, TrainOptions, TrainOutcome, CHUNK,
    DEFAULT_BATCH_SIZE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape: {0}")]
    Shape(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("non-finite gradient for {param}")]
    NonFinite { param: String },
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("model config: {0}")]
    Config(String),
    #[error("train and test sets must be nonempty")]
    EmptySet,
    #[error("batch input outside [0, 1]")]
    Normalization,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
