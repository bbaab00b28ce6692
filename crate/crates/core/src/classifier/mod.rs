//! A small convolutional network over 64×64 RGB inputs, trained with
//! mini-batch SGD and momentum on the cross-entropy loss.
//!
//! Training runs on one thread with a fixed reduction order, so a given
//! configuration and seed always yields the same parameters.

pub mod checkpoint;
mod model;
mod scalar;
mod train;

pub use model::{softmax, CnnModel, Layer, Trace, Variant, INPUT_LEN, INPUT_SIZE, N_CLASSES};
pub use scalar::Scalar;
pub use train::{
    accuracy, aggregate_probabilities, argmax, batch_gradient, batch_loss, fit,
    frame_probabilities, grad_check, gradient_pairs, history_csv, predict_film, prepare_input,
    relative_error, sample_parameters, train, train_with_rng, EpochStats, GradCheckReport, Sample,
    TrainConfig, TrainOutcome,
};
