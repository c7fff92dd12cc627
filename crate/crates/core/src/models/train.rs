use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::recon::ReconModel;
use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, Tensor};
use crate::evalreport::adp;
use crate::rng::{standard_normal, substream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    #[default]
    Frozen,
    Finetune,
}

impl EncoderMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "frozen" => Some(EncoderMode::Frozen),
            "finetune" => Some(EncoderMode::Finetune),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the reconstruction term.
    pub w1: f64,
    /// Weight of the KL term.
    pub w2: f64,
    pub latent: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub encoder_mode: EncoderMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::predictor()
    }
}

impl TrainConfig {
    pub fn recon() -> Self {
        Self {
            w1: 1.0,
            w2: 1e-3,
            latent: 9,
            lr: 1e-3,
            batch_size: 32,
            epochs: 200,
            seed: 0,
            encoder_mode: EncoderMode::Frozen,
        }
    }

    pub fn predictor() -> Self {
        Self {
            epochs: 300,
            ..Self::recon()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be non-negative, got w1={} w2={}",
                self.w1, self.w2
            )));
        }
        if self.batch_size == 0 || self.latent == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(
                "batch size, latent size and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// Per-epoch reconstruction training record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconHistory {
    pub train_loss: Vec<f64>,
    /// Mean per-part ADP on the validation split, in physical units.
    pub val_adp: Vec<f64>,
    /// Epoch whose parameters were kept (lowest validation ADP).
    pub best_epoch: usize,
}

/// Standard-normal draws for the reparameterization of one step.
pub(crate) fn reparam_noise(seed: u64, step: u64, shape: [usize; 2]) -> Tensor {
    let mut r = substream(seed, "reparameterize", step);
    let data = (0..shape[0] * shape[1]).map(|_| standard_normal(&mut r)).collect();
    Tensor::new(shape, data).expect("noise shape")
}

pub(crate) fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "shuffle", epoch as u64));
    order
}

/// Mean per-volume ADP of the model's mean reconstructions.
pub fn recon_adp(model: &ReconModel, volumes: &[&[f64]]) -> Result<f64> {
    if volumes.is_empty() {
        return Ok(0.0);
    }
    let recon = model.reconstruct(volumes)?;
    let mut total = 0.0;
    for (r, v) in recon.iter().zip(volumes) {
        total += adp(r, v)?;
    }
    Ok(total / volumes.len() as f64)
}

/// Train `model` to reconstruct `train`.
///
/// Per-sample loss is `w1 · Σ_voxels (r − x)²` on normalized values, plus
/// `w2 · KLD` for the variational model, averaged over the batch. After
/// every epoch the validation ADP is recorded; the parameters of the best
/// epoch are kept.
pub fn pretrain_recon(
    model: &mut ReconModel,
    train: &[&[f64]],
    val: &[&[f64]],
    cfg: &TrainConfig,
) -> Result<ReconHistory> {
    pretrain_recon_with(model, train, val, cfg, |_, _, _| {})
}

/// [`pretrain_recon`] calling `on_epoch(epoch, train_loss, val_adp)` after
/// every epoch.
pub fn pretrain_recon_with(
    model: &mut ReconModel,
    train: &[&[f64]],
    val: &[&[f64]],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, f64),
) -> Result<ReconHistory> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("reconstruction training split is empty".into()));
    }
    let mut state = AdamState::new(cfg.adam());
    let mut history = ReconHistory::default();
    let mut best = (f64::INFINITY, model.params.clone());
    let voxels = model.arch.volume_len() as f64;
    let d = model.arch.latent;
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(train.len(), cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let vols: Vec<&[f64]> = idx.iter().map(|&i| train[i]).collect();
            let n = vols.len();
            let mut g = Graph::new();
            let p = model.params.bind(&mut g, |_| true);
            let x = g.constant(model.input_batch(&vols)?);
            let lat = model.encode(&mut g, &p, x)?;
            let z = match lat.logvar {
                Some(lv) => g.reparameterize(lat.mu, lv, &reparam_noise(cfg.seed, step, [n, d]))?,
                None => lat.mu,
            };
            let r = model.decode(&mut g, &p, z)?;
            let mse = g.mse(r, x)?;
            let mut loss = g.scale(mse, cfg.w1 * voxels);
            if let Some(lv) = lat.logvar {
                let kld = g.kld(lat.mu, lv)?;
                let kld = g.scale(kld, cfg.w2 / n as f64);
                loss = g.add(loss, kld)?;
            }
            let value = g.item(loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            g.backward(loss)?;
            let grads = model.params.collect_grads(&g, &p);
            adam_step(&mut model.params, &grads, &mut state)?;
            epoch_loss += value * n as f64;
            step += 1;
        }
        history.train_loss.push(epoch_loss / train.len() as f64);
        let score = if val.is_empty() {
            history.train_loss[epoch]
        } else {
            recon_adp(model, val)?
        };
        history.val_adp.push(score);
        on_epoch(epoch, history.train_loss[epoch], score);
        if score < best.0 {
            best = (score, model.params.clone());
            history.best_epoch = epoch;
        }
    }
    if cfg.epochs > 0 {
        model.params = best.1;
    }
    Ok(history)
}
