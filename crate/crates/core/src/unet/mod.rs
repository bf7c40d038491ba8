//! U-Net generator on log-spectrogram images: configuration, model, MSE
//! training and utterance-level enhancement.

mod config;
mod enhance;
mod model;
mod train;

pub use config::{doubling_output_padding, halving_padding, UNetConfig};
pub use enhance::enhance_utterance;
pub use model::{images_to_tensor, tensor_to_images, Block, BlockKind, UNetModel, INIT_STD};
pub(crate) use train::{epoch_order, prepare};
pub use train::{evaluate_mse, train_mse, training_pairs, LogRecord, TrainConfig, TrainingLog};
