use super::arch::ArchSpec;
use super::predictor::{Predictor, PredictorSpec};
use super::recon::ReconModel;

/// A trained network plus what is needed to rebuild and trust it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    /// Hash of the dataset manifest whose statistics the model was trained on.
    pub stats_ref: String,
    pub model: CheckpointModel,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CheckpointModel {
    Recon(ReconModel),
    Predictor(Predictor),
}

impl Checkpoint {
    pub fn recon(model: ReconModel, seed: u64, stats_ref: impl Into<String>) -> Self {
        Self {
            seed,
            stats_ref: stats_ref.into(),
            model: CheckpointModel::Recon(model),
        }
    }

    pub fn predictor(model: Predictor, seed: u64) -> Self {
        Self {
            seed,
            stats_ref: model.stats_ref.clone(),
            model: CheckpointModel::Predictor(model),
        }
    }

    /// Architecture of the reconstruction network or of the predictor's encoder.
    pub fn arch(&self) -> Option<&ArchSpec> {
        match &self.model {
            CheckpointModel::Recon(m) => Some(&m.arch),
            CheckpointModel::Predictor(p) => p.encoder.as_ref().map(|e| &e.arch),
        }
    }

    pub fn predictor_spec(&self) -> Option<&PredictorSpec> {
        match &self.model {
            CheckpointModel::Predictor(p) => Some(&p.spec),
            CheckpointModel::Recon(_) => None,
        }
    }

    pub fn into_recon(self) -> Option<ReconModel> {
        match self.model {
            CheckpointModel::Recon(m) => Some(m),
            CheckpointModel::Predictor(_) => None,
        }
    }

    pub fn into_predictor(self) -> Option<Predictor> {
        match self.model {
            CheckpointModel::Predictor(p) => Some(p),
            CheckpointModel::Recon(_) => None,
        }
    }
}
