use std::path::Path;

use serde::{Deserialize, Serialize};

use super::formats::read_bytes;
use crate::models::{EncoderMode, ModelVariant, ReconKind, TrainConfig, DEFAULT_HIDDEN};
use crate::preprocess::{FrameChoice, PreprocessOptions, SplitRatios};
use crate::synthbed::SynthConfig;
use crate::{Error, Result};

/// One experiment: every stage reads its section, and the whole file is
/// echoed into the outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; every random draw descends from it.
    pub seed: u64,
    pub synth: SynthConfig,
    pub preprocess: PreprocessSection,
    pub recon: ReconSection,
    pub predictor: PredictorSection,
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub frame: FrameChoice,
    pub undistort: bool,
    /// Edge of the geometry cube; absent skips the geometry path.
    pub roi_edge: Option<usize>,
    pub ratios: SplitRatios,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let o = PreprocessOptions::default();
        Self {
            frame: o.frame,
            undistort: o.undistort,
            roi_edge: o.roi_edge,
            ratios: o.ratios,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconSection {
    pub kinds: Vec<ReconKind>,
    pub latent: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub w1: f64,
    pub w2: f64,
}

impl Default for ReconSection {
    fn default() -> Self {
        let t = TrainConfig::recon();
        Self {
            kinds: vec![ReconKind::Ae, ReconKind::Vae3d],
            latent: t.latent,
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
            w1: t.w1,
            w2: t.w2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorSection {
    pub variants: Vec<ModelVariant>,
    /// Reconstruction model whose encoder the latent variants use.
    pub encoder_kind: ReconKind,
    pub encoder_mode: EncoderMode,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub w1: f64,
    pub w2: f64,
}

impl Default for PredictorSection {
    fn default() -> Self {
        let t = TrainConfig::predictor();
        Self {
            variants: vec![
                ModelVariant::NoThermal,
                ModelVariant::SequentialThermal,
                ModelVariant::LatentThermal,
            ],
            encoder_kind: ReconKind::Vae3d,
            encoder_mode: t.encoder_mode,
            hidden: DEFAULT_HIDDEN,
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
            w1: t.w1,
            w2: t.w2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub latents: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { latents: vec![5, 9, 20] }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.synth;
        if s.builds < 3 || s.printers == 0 || s.layers == 0 || s.frames_per_layer == 0 {
            return Err(Error::Config(format!(
                "synth needs builds >= 3 and positive printers, layers and frames_per_layer, got {} / {} / {} / {}",
                s.builds, s.printers, s.layers, s.frames_per_layer
            )));
        }
        if s.parts_per_slab[0] == 0 || s.parts_per_slab[0] > s.parts_per_slab[1] {
            return Err(Error::Config(format!("synth.parts_per_slab {:?} must be a non-empty range", s.parts_per_slab)));
        }
        let r = self.preprocess.ratios;
        if [r.train, r.val, r.test].iter().any(|v| !(*v >= 0.0)) || (r.train + r.val + r.test - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "preprocess.ratios must be non-negative and sum to 1, got {} + {} + {}",
                r.train, r.val, r.test
            )));
        }
        if self.recon.kinds.is_empty() {
            return Err(Error::Config("recon.kinds is empty; accepted values: \"ae\", \"vae3d\"".into()));
        }
        if self.predictor.variants.is_empty() {
            let names: Vec<&str> = ModelVariant::ALL.iter().map(|v| v.as_str()).collect();
            return Err(Error::Config(format!("predictor.variants is empty; accepted values: {names:?}")));
        }
        if self.sweep.latents.contains(&0) {
            return Err(Error::Config("sweep.latents must be positive".into()));
        }
        self.recon_train(self.recon.latent).validate()?;
        self.predictor_train(EncoderMode::Frozen).validate()
    }

    pub fn preprocess_options(&self) -> PreprocessOptions {
        let p = &self.preprocess;
        PreprocessOptions {
            frame: p.frame,
            undistort: p.undistort,
            roi_edge: p.roi_edge,
            ratios: p.ratios,
            split_seed: self.seed,
        }
    }

    pub fn recon_train(&self, latent: usize) -> TrainConfig {
        let r = &self.recon;
        TrainConfig {
            w1: r.w1,
            w2: r.w2,
            latent,
            lr: r.lr,
            batch_size: r.batch_size,
            epochs: r.epochs,
            seed: self.seed,
            encoder_mode: EncoderMode::Frozen,
        }
    }

    pub fn predictor_train(&self, mode: EncoderMode) -> TrainConfig {
        let p = &self.predictor;
        TrainConfig {
            w1: p.w1,
            w2: p.w2,
            latent: self.recon.latent,
            lr: p.lr,
            batch_size: p.batch_size,
            epochs: p.epochs,
            seed: self.seed,
            encoder_mode: mode,
        }
    }
}
