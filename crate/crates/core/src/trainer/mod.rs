//! Patch sampling, augmentation, and the Adam training loop.

pub mod adam;
pub mod config;
pub mod sample;
pub mod train;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use config::TrainConfig;
pub use sample::{augment, augment_with, crop_image, crop_patches, fit_to_stride, TrainSample};
pub use train::{
    count_mae, initial_params, loss_and_grads, prepare_dataset, train, train_with_progress, LogLine, TrainLog,
    TrainOutcome,
};
