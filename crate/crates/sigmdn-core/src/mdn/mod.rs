//! The Gaussian mixture density network: forward pass, exact NLL with
//! LogSumExp stabilization, analytic backpropagation, AdamW optimization and
//! plateau-based learning-rate scheduling.

mod adamw;
mod config;
mod mixture;
mod network;
mod serialize;
mod train;

pub use adamw::{adamw_step, AdamwState};
pub use config::{MdnConfig, MuActivation, TrainConfig};
pub use mixture::{mixture_logpdf, MixtureParams};
pub use network::{forward, gradients, nll_batch, Dense, MdnGradients, MdnParams, TrainingBatch};
pub use serialize::{load_checkpoint, save_checkpoint, ModelArtifact, MODEL_MAGIC, MODEL_VERSION};
pub use train::{resume, train, EpochStats, TrainOutcome, TrainerCheckpoint, TrainingData};
