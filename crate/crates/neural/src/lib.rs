//! Shallow dense networks that refine the classic DDST receiver: a channel
//! refiner applied to the LS estimate and a detection refiner applied to the
//! ZF-equalized symbols.

pub mod dataset;
pub mod error;
pub mod io;
pub mod mlp;
pub mod optim;
pub mod refiner;
pub mod train;

pub use dataset::{build_ce_dataset, build_sd_dataset, build_sd_dataset_with, CsiSource, Dataset, DatasetKind, SnrPolicy};
pub use error::{NeuralError, Result};
pub use io::{load_checkpoint, load_checkpoint_for, load_dataset, save_checkpoint, save_dataset, Checkpoint};
pub use mlp::{Activation, Gradients, MlpArchitecture, MlpModel, Mode};
pub use optim::{adam_update, Adam, AdamConfig};
pub use refiner::{CeNetEstimator, SdNetDetector};
pub use train::{evaluate, train, train_step, EpochLoss, TrainingConfig, TrainingReport};

/// Glorot-initialized model, deterministic in `seed`.
pub fn glorot_init(architecture: MlpArchitecture, seed: u64) -> Result<MlpModel> {
    let mut rng = ddst_core::rng::stream(ddst_core::rng::derive_seed(seed, "glorot"), 0);
    MlpModel::glorot(architecture, &mut rng)
}
