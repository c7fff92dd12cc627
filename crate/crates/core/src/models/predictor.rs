use serde::{Deserialize, Serialize};

use super::recon::{ReconModel, INFER_BATCH};
use super::train::{epoch_order, reparam_noise, EncoderMode, TrainConfig};
use crate::autodiff::{adam_step, glorot_uniform, AdamState, Bound, Graph, ParamStore, Tensor, Var};
use crate::preprocess::ThermalVoxel;
use crate::rng::substream;
use crate::synthbed::{T_MAX, T_MIN};
use crate::types::QualityVector;
use crate::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 32;

/// Fixed diagonal map standardizing latent means with train-split statistics.
const NORM_W: &str = "thm.norm.w";
const NORM_B: &str = "thm.norm.b";

fn trainable(name: &str) -> bool {
    !name.starts_with("thm.norm.")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    NoThermal,
    SequentialThermal,
    LatentThermal,
    GeometryLatent,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::NoThermal,
        ModelVariant::SequentialThermal,
        ModelVariant::LatentThermal,
        ModelVariant::GeometryLatent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::NoThermal => "no-thermal",
            ModelVariant::SequentialThermal => "sequential-thermal",
            ModelVariant::LatentThermal => "latent-thermal",
            ModelVariant::GeometryLatent => "geometry-latent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }

    pub fn needs_encoder(self) -> bool {
        matches!(self, ModelVariant::LatentThermal | ModelVariant::GeometryLatent)
    }
}

/// Shape of a predictor, independent of its weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSpec {
    pub variant: ModelVariant,
    pub feature_dim: usize,
    pub hidden: usize,
    /// Values per volume input; 0 when the variant ignores volumes.
    pub volume_len: usize,
}

/// One part as the predictor sees it. `volume` is the thermal voxel in °C,
/// the geometry cube in 0–255 units, or empty for the tabular-only variant.
#[derive(Clone, Copy, Debug)]
pub struct PartInput<'a> {
    pub features: &'a [f64],
    pub volume: &'a [f64],
}

#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub input: PartInput<'a>,
    pub target: QualityVector,
}

/// Quality predictor: tabular branch, optional thermal/geometry branch,
/// concatenation, and a dense head emitting standardized (L, W, H, density).
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    pub spec: PredictorSpec,
    /// `tab.*`, `thm.*`, `fuse.*` and `head.*` weights.
    pub params: ParamStore,
    pub encoder: Option<ReconModel>,
    pub target_mean: [f64; 4],
    pub target_std: [f64; 4],
    /// Identifies the feature standardization the model was trained with.
    pub stats_ref: String,
}

fn dense_layer(p: &mut ParamStore, rng: &mut crate::rng::StreamRng, name: &str, fan_in: usize, fan_out: usize) {
    p.insert(format!("{name}.w"), glorot_uniform(rng, &[fan_in, fan_out], fan_in, fan_out));
    p.insert(format!("{name}.b"), Tensor::zeros([fan_out]));
}

/// Assemble an untrained predictor. Latent variants take ownership of a
/// pretrained reconstruction model and use its encoder.
pub fn build_predictor(
    variant: ModelVariant,
    encoder: Option<ReconModel>,
    feature_dim: usize,
    hidden: usize,
    seed: u64,
) -> Result<Predictor> {
    if feature_dim == 0 || hidden == 0 {
        return Err(Error::InvalidArgument("feature and hidden widths must be positive".into()));
    }
    let encoder = match (variant.needs_encoder(), encoder) {
        (true, None) => {
            return Err(Error::InvalidArgument(format!(
                "variant {} needs a pretrained encoder",
                variant.as_str()
            )))
        }
        (true, Some(e)) => Some(e),
        (false, _) => None,
    };
    let mut rng = substream(seed, "init", 1);
    let mut p = ParamStore::new();
    let h = hidden;
    let volume_len = match variant {
        ModelVariant::NoThermal => {
            dense_layer(&mut p, &mut rng, "tab.fc0", feature_dim, h);
            dense_layer(&mut p, &mut rng, "tab.fc1", h, h);
            dense_layer(&mut p, &mut rng, "head.fc0", h, h);
            0
        }
        ModelVariant::SequentialThermal => {
            let v = ThermalVoxel::LEN;
            dense_layer(&mut p, &mut rng, "fuse.fc0", v + feature_dim, h);
            dense_layer(&mut p, &mut rng, "fuse.fc1", h, h);
            dense_layer(&mut p, &mut rng, "head.fc0", h, h);
            v
        }
        ModelVariant::LatentThermal | ModelVariant::GeometryLatent => {
            let enc = encoder.as_ref().expect("checked above");
            let d = enc.arch.latent;
            let mut eye = Tensor::zeros([d, d]);
            (0..d).for_each(|i| eye.data_mut()[i * d + i] = 1.0);
            p.insert(NORM_W, eye);
            p.insert(NORM_B, Tensor::zeros([d]));
            dense_layer(&mut p, &mut rng, "thm.fc0", d, h);
            dense_layer(&mut p, &mut rng, "thm.fc1", h, h);
            dense_layer(&mut p, &mut rng, "tab.fc0", feature_dim, h);
            dense_layer(&mut p, &mut rng, "tab.fc1", h, h);
            dense_layer(&mut p, &mut rng, "head.fc0", 2 * h, h);
            enc.arch.volume_len()
        }
    };
    dense_layer(&mut p, &mut rng, "head.fc1", h, 4);
    Ok(Predictor {
        spec: PredictorSpec {
            variant,
            feature_dim,
            hidden,
            volume_len,
        },
        params: p,
        encoder,
        target_mean: [0.0; 4],
        target_std: [1.0; 4],
        stats_ref: String::new(),
    })
}

/// The three terms of the joint objective, batch-averaged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// Σ over the four standardized targets of the squared error.
    pub prediction: f64,
    /// Σ over voxels of the squared normalized reconstruction error.
    pub reconstruction: f64,
    pub kld: f64,
}

impl LossTerms {
    pub fn total(&self, w1: f64, w2: f64) -> f64 {
        self.prediction + w1 * self.reconstruction + w2 * self.kld
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictorHistory {
    pub train_loss: Vec<f64>,
    /// Validation prediction MSE in standardized target units.
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

/// Graph handles for one batch.
struct BatchVars {
    pred: Var,
    pred_loss: Option<Var>,
    recon_loss: Option<Var>,
    kld: Option<Var>,
}

fn dense_relu(g: &mut Graph, p: &Bound, x: Var, name: &str) -> Result<Var> {
    let y = g.dense(x, p.var(&format!("{name}.w")), Some(p.var(&format!("{name}.b"))))?;
    Ok(g.relu(y))
}

impl Predictor {
    fn check_input(&self, x: &PartInput) -> Result<()> {
        if x.features.len() != self.spec.feature_dim {
            return Err(Error::shape(
                "predictor input",
                format!("{} features, expected {}", x.features.len(), self.spec.feature_dim),
            ));
        }
        if self.spec.volume_len > 0 && x.volume.len() != self.spec.volume_len {
            return Err(Error::shape(
                "predictor input",
                format!("volume of {} values, expected {}", x.volume.len(), self.spec.volume_len),
            ));
        }
        Ok(())
    }

    fn features_tensor(&self, inputs: &[PartInput]) -> Result<Tensor> {
        let f = self.spec.feature_dim;
        let mut data = Vec::with_capacity(inputs.len() * f);
        for x in inputs {
            self.check_input(x)?;
            data.extend_from_slice(x.features);
        }
        Tensor::new([inputs.len(), f], data)
    }

    /// `[n, 4410 + F]`: normalized voxel then features.
    fn fused_tensor(&self, inputs: &[PartInput]) -> Result<Tensor> {
        let w = self.spec.volume_len + self.spec.feature_dim;
        let mut data = Vec::with_capacity(inputs.len() * w);
        for x in inputs {
            self.check_input(x)?;
            data.extend(x.volume.iter().map(|&t| (t - T_MIN) / (T_MAX - T_MIN)));
            data.extend_from_slice(x.features);
        }
        Tensor::new([inputs.len(), w], data)
    }

    /// Dense stack from inputs (and latent means, when the variant uses them)
    /// to standardized predictions.
    fn head(&self, g: &mut Graph, p: &Bound, inputs: &[PartInput], latent: Option<Var>) -> Result<Var> {
        let h = match self.spec.variant {
            ModelVariant::NoThermal => {
                let x = g.constant(self.features_tensor(inputs)?);
                let t = dense_relu(g, p, x, "tab.fc0")?;
                dense_relu(g, p, t, "tab.fc1")?
            }
            ModelVariant::SequentialThermal => {
                let x = g.constant(self.fused_tensor(inputs)?);
                let t = dense_relu(g, p, x, "fuse.fc0")?;
                dense_relu(g, p, t, "fuse.fc1")?
            }
            ModelVariant::LatentThermal | ModelVariant::GeometryLatent => {
                let z = latent.ok_or_else(|| Error::InvalidArgument("latent input missing".into()))?;
                let z = g.dense(z, p.var(NORM_W), Some(p.var(NORM_B)))?;
                let a = dense_relu(g, p, z, "thm.fc0")?;
                let a = dense_relu(g, p, a, "thm.fc1")?;
                let x = g.constant(self.features_tensor(inputs)?);
                let b = dense_relu(g, p, x, "tab.fc0")?;
                let b = dense_relu(g, p, b, "tab.fc1")?;
                g.concat(a, b)?
            }
        };
        let h = dense_relu(g, p, h, "head.fc0")?;
        g.dense(h, p.var("head.fc1.w"), Some(p.var("head.fc1.b")))
    }

    fn standardized_targets(&self, targets: &[QualityVector]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(targets.len() * 4);
        for t in targets {
            for (k, v) in t.to_array().into_iter().enumerate() {
                data.push((v - self.target_mean[k]) / self.target_divisor(k));
            }
        }
        Tensor::new([targets.len(), 4], data)
    }

    /// Standardization divisor; a constant target (std 0) is not scaled.
    fn target_divisor(&self, k: usize) -> f64 {
        if self.target_std[k] > 0.0 {
            self.target_std[k]
        } else {
            1.0
        }
    }

    fn latent_rows(&self, inputs: &[PartInput]) -> Result<Vec<Vec<f64>>> {
        let enc = self.encoder.as_ref().ok_or_else(|| Error::InvalidArgument("no encoder".into()))?;
        for x in inputs {
            self.check_input(x)?;
        }
        let vols: Vec<&[f64]> = inputs.iter().map(|x| x.volume).collect();
        enc.encode_mu(&vols)
    }

    /// Build the batch graph. With `enc` bound, the encoder runs inside the
    /// graph (finetune); otherwise `cached` supplies latent means.
    #[allow(clippy::too_many_arguments)]
    fn batch_graph(
        &self,
        g: &mut Graph,
        p: &Bound,
        enc: Option<&Bound>,
        inputs: &[PartInput],
        targets: Option<&[QualityVector]>,
        cached: Option<&[&[f64]]>,
        eps_step: Option<(u64, u64)>,
    ) -> Result<BatchVars> {
        let n = inputs.len();
        let mut recon_loss = None;
        let mut kld = None;
        let latent = match (self.spec.variant.needs_encoder(), enc, cached) {
            (false, _, _) => None,
            (true, Some(eb), _) => {
                let model = self.encoder.as_ref().expect("latent variant has an encoder");
                let vols: Vec<&[f64]> = inputs.iter().map(|x| x.volume).collect();
                let x = g.constant(model.input_batch(&vols)?);
                let lat = model.encode(g, eb, x)?;
                let z = match (lat.logvar, eps_step) {
                    (Some(lv), Some((seed, step))) => {
                        g.reparameterize(lat.mu, lv, &reparam_noise(seed, step, [n, model.arch.latent]))?
                    }
                    _ => lat.mu,
                };
                let r = model.decode(g, eb, z)?;
                let mse = g.mse(r, x)?;
                recon_loss = Some(g.scale(mse, model.arch.volume_len() as f64));
                if let Some(lv) = lat.logvar {
                    let k = g.kld(lat.mu, lv)?;
                    kld = Some(g.scale(k, 1.0 / n as f64));
                }
                Some(lat.mu)
            }
            (true, None, Some(rows)) => {
                let d = rows.first().map_or(0, |r| r.len());
                let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
                Some(g.constant(Tensor::new([n, d], data)?))
            }
            (true, None, None) => return Err(Error::InvalidArgument("latent input missing".into())),
        };
        let pred = self.head(g, p, inputs, latent)?;
        let pred_loss = match targets {
            Some(t) => {
                let y = g.constant(self.standardized_targets(t)?);
                let m = g.mse(pred, y)?;
                Some(g.scale(m, 4.0))
            }
            None => None,
        };
        Ok(BatchVars {
            pred,
            pred_loss,
            recon_loss,
            kld,
        })
    }

    /// Predictions in physical units. Large inputs are processed in batches.
    pub fn predict(&self, inputs: &[PartInput]) -> Result<Vec<QualityVector>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(INFER_BATCH) {
            let cached = if self.spec.variant.needs_encoder() {
                Some(self.latent_rows(chunk)?)
            } else {
                None
            };
            let rows: Option<Vec<&[f64]>> = cached.as_ref().map(|c| c.iter().map(Vec::as_slice).collect());
            let mut g = Graph::new();
            let p = self.params.bind(&mut g, |_| false);
            let v = self.batch_graph(&mut g, &p, None, chunk, None, rows.as_deref(), None)?;
            for row in g.value(v.pred).data().chunks(4) {
                let mut q = [0.0; 4];
                for k in 0..4 {
                    q[k] = self.target_mean[k] + self.target_std[k] * row[k];
                }
                out.push(QualityVector::from_array(q));
            }
        }
        Ok(out)
    }

    /// Set the latent normalization to the population mean and std of `rows`;
    /// a constant dimension is only centred.
    fn fit_latent_norm(&mut self, rows: &[Vec<f64>]) {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut w = Tensor::zeros([d, d]);
        let mut b = Tensor::zeros([d]);
        for j in 0..d {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let std = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            let inv = if std > 1e-12 { 1.0 / std } else { 1.0 };
            w.data_mut()[j * d + j] = inv;
            b.data_mut()[j] = -mean * inv;
        }
        self.params.insert(NORM_W, w);
        self.params.insert(NORM_B, b);
    }

    /// Reject inputs standardized with different statistics.
    pub fn check_stats(&self, found: &str) -> Result<()> {
        if self.stats_ref != found {
            return Err(Error::StatsMismatch {
                expected: self.stats_ref.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }

    /// Objective terms on one batch with the encoder inside the graph, plus
    /// the fused scalar the optimizer would see.
    pub fn objective(&self, batch: &[Example], cfg: &TrainConfig, eps_step: u64) -> Result<(LossTerms, f64)> {
        let inputs: Vec<PartInput> = batch.iter().map(|e| e.input).collect();
        let targets: Vec<QualityVector> = batch.iter().map(|e| e.target).collect();
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, |_| false);
        let eb = self.encoder.as_ref().map(|e| e.params.bind(&mut g, |_| false));
        let cached = if eb.is_none() && self.spec.variant.needs_encoder() {
            Some(self.latent_rows(&inputs)?)
        } else {
            None
        };
        let rows: Option<Vec<&[f64]>> = cached.as_ref().map(|c| c.iter().map(Vec::as_slice).collect());
        let v = self.batch_graph(
            &mut g,
            &p,
            eb.as_ref(),
            &inputs,
            Some(&targets),
            rows.as_deref(),
            Some((cfg.seed, eps_step)),
        )?;
        let fused = fuse(&mut g, &v, cfg)?;
        let read = |x: Option<Var>| x.map_or(0.0, |x| g.item(x));
        let terms = LossTerms {
            prediction: read(v.pred_loss),
            reconstruction: read(v.recon_loss),
            kld: read(v.kld),
        };
        Ok((terms, g.item(fused)))
    }
}

fn fuse(g: &mut Graph, v: &BatchVars, cfg: &TrainConfig) -> Result<Var> {
    let mut loss = v.pred_loss.ok_or_else(|| Error::InvalidArgument("targets missing".into()))?;
    if let Some(r) = v.recon_loss {
        let r = g.scale(r, cfg.w1);
        loss = g.add(loss, r)?;
    }
    if let Some(k) = v.kld {
        let k = g.scale(k, cfg.w2);
        loss = g.add(loss, k)?;
    }
    Ok(loss)
}

fn target_stats(targets: &[QualityVector]) -> ([f64; 4], [f64; 4]) {
    let n = targets.len() as f64;
    let mut mean = [0.0; 4];
    for t in targets {
        for (m, v) in mean.iter_mut().zip(t.to_array()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = [0.0; 4];
    for t in targets {
        for k in 0..4 {
            std[k] += (t.to_array()[k] - mean[k]).powi(2);
        }
    }
    for s in std.iter_mut() {
        *s = (*s / n).sqrt();
        if *s <= 1e-12 {
            *s = 0.0;
        }
    }
    (mean, std)
}

/// Fit the predictor on `train`, keeping the epoch with the lowest
/// validation prediction loss (the last epoch when `val` is empty).
///
/// In frozen mode the encoder is evaluated once, its means are cached, and
/// the reconstruction and KL terms are constants that are not computed. In
/// finetune mode the encoder and decoder train jointly under the full
/// objective. Variants without an encoder have no reconstruction or KL term.
pub fn train_predictor(
    model: &mut Predictor,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<PredictorHistory> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("predictor training split is empty".into()));
    }
    let targets: Vec<QualityVector> = train.iter().map(|e| e.target).collect();
    (model.target_mean, model.target_std) = target_stats(&targets);
    let finetune = cfg.encoder_mode == EncoderMode::Finetune && model.spec.variant.needs_encoder();
    let inputs: Vec<PartInput> = train.iter().map(|e| e.input).collect();
    let cached = if model.spec.variant.needs_encoder() && !finetune {
        Some(model.latent_rows(&inputs)?)
    } else {
        None
    };
    if model.spec.variant.needs_encoder() {
        let rows = match &cached {
            Some(c) => c.clone(),
            None => model.latent_rows(&inputs)?,
        };
        model.fit_latent_norm(&rows);
    }
    let mut state = AdamState::new(cfg.adam());
    let mut enc_state = AdamState::new(cfg.adam());
    let mut history = PredictorHistory::default();
    let mut best = (f64::INFINITY, model.params.clone(), model.encoder.clone());
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(train.len(), cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let b_inputs: Vec<PartInput> = idx.iter().map(|&i| inputs[i]).collect();
            let b_targets: Vec<QualityVector> = idx.iter().map(|&i| targets[i]).collect();
            let b_rows: Option<Vec<&[f64]>> = cached.as_ref().map(|c| idx.iter().map(|&i| c[i].as_slice()).collect());
            let mut g = Graph::new();
            let p = model.params.bind(&mut g, trainable);
            let eb = if finetune {
                model.encoder.as_ref().map(|e| e.params.bind(&mut g, |_| true))
            } else {
                None
            };
            let v = model.batch_graph(
                &mut g,
                &p,
                eb.as_ref(),
                &b_inputs,
                Some(&b_targets),
                b_rows.as_deref(),
                Some((cfg.seed, step)),
            )?;
            let loss = fuse(&mut g, &v, cfg)?;
            let value = g.item(loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            g.backward(loss)?;
            let grads = model.params.collect_grads(&g, &p);
            adam_step(&mut model.params, &grads, &mut state)?;
            if let (Some(eb), Some(enc)) = (eb.as_ref(), model.encoder.as_mut()) {
                let grads = enc.params.collect_grads(&g, eb);
                adam_step(&mut enc.params, &grads, &mut enc_state)?;
            }
            epoch_loss += value * idx.len() as f64;
            step += 1;
        }
        history.train_loss.push(epoch_loss / train.len() as f64);
        let score = if val.is_empty() {
            history.train_loss[epoch]
        } else {
            validation_loss(model, val)?
        };
        history.val_loss.push(score);
        if score < best.0 {
            best = (score, model.params.clone(), model.encoder.clone());
            history.best_epoch = epoch;
        }
    }
    if cfg.epochs > 0 {
        model.params = best.1;
        model.encoder = best.2;
    }
    Ok(history)
}

/// Mean over parts of Σ_k standardized squared error.
pub fn validation_loss(model: &Predictor, val: &[Example]) -> Result<f64> {
    let inputs: Vec<PartInput> = val.iter().map(|e| e.input).collect();
    let pred = model.predict(&inputs)?;
    let mut total = 0.0;
    for (p, e) in pred.iter().zip(val) {
        for k in 0..4 {
            total += ((p.to_array()[k] - e.target.to_array()[k]) / model.target_divisor(k)).powi(2);
        }
    }
    Ok(total / val.len() as f64)
}
