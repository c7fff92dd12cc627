//! Reconstruction networks (AE, 3D-VAE) and the quality predictor variants.

mod arch;
mod checkpoint;
mod predictor;
mod recon;
mod train;

pub use arch::{default_strides, ArchSpec, ReconKind};
pub use predictor::{
    build_predictor, train_predictor, validation_loss, Example, LossTerms, ModelVariant, PartInput, Predictor,
    PredictorHistory, PredictorSpec, DEFAULT_HIDDEN,
};
pub use checkpoint::{Checkpoint, CheckpointModel};
pub use recon::{build_recon_model, LatentVars, ReconModel};
pub use train::{pretrain_recon, pretrain_recon_with, recon_adp, EncoderMode, ReconHistory, TrainConfig};
