//! Trainable frame-wise model: residual bottleneck convolutions, voicing and
//! evidential heads, reverse-mode differentiation, Adam, checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;

pub use adam::{Adam, AdamHyper};
pub use checkpoint::Checkpoint;
pub use model::{ForwardOutput, Model, ModelConfig, Task};
pub use tensor::{Batch3, Batch4, Param, Tensor};
pub use train::{
    batch_backward, batch_loss, evaluate_model, predict, predict_batch, train, train_loop,
    EpochLog, FramePrediction, PredictUncertainty, TrainOutput, TrainParams, TrainStatus,
    REGRESSION_TARGET_SCALE,
};
