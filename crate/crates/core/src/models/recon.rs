use super::arch::{ArchSpec, ReconKind};
use crate::autodiff::{glorot_uniform, Bound, Graph, ParamStore, Tensor, Var};
use crate::rng::substream;
use crate::{Error, Result};

pub(crate) const INFER_BATCH: usize = 64;

/// AE or 3D-VAE over a single-channel volume. Parameters are named
/// `enc.*` and `dec.*`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconModel {
    pub arch: ArchSpec,
    pub params: ParamStore,
}

/// Encoder outputs for one batch, all `[n, d]`.
#[derive(Clone, Copy, Debug)]
pub struct LatentVars {
    pub mu: Var,
    pub logvar: Option<Var>,
}

fn conv_name(prefix: &str, i: usize) -> (String, String) {
    (format!("{prefix}.conv{i}.w"), format!("{prefix}.conv{i}.b"))
}

/// Build a freshly initialized reconstruction model.
pub fn build_recon_model(arch: ArchSpec, seed: u64) -> Result<ReconModel> {
    arch.validate()?;
    let mut rng = substream(seed, "init", 0);
    let mut p = ParamStore::new();
    let k = arch.kernel;
    let k3 = k * k * k;
    let mut c_in = 1;
    for (i, &c_out) in arch.channels.iter().enumerate() {
        let (w, b) = conv_name("enc", i);
        p.insert(w, glorot_uniform(&mut rng, &[c_out, c_in, k, k, k], c_in * k3, c_out * k3));
        p.insert(b, Tensor::zeros([c_out]));
        c_in = c_out;
    }
    let flat = arch.flat_dim();
    let d = arch.latent;
    p.insert("enc.mu.w", glorot_uniform(&mut rng, &[flat, d], flat, d));
    p.insert("enc.mu.b", Tensor::zeros([d]));
    if arch.kind == ReconKind::Vae3d {
        p.insert("enc.logvar.w", Tensor::zeros([flat, d]));
        p.insert("enc.logvar.b", Tensor::zeros([d]));
    }
    p.insert("dec.fc.w", glorot_uniform(&mut rng, &[d, flat], d, flat));
    p.insert("dec.fc.b", Tensor::zeros([flat]));
    // Decoder stage i maps channels[n-1-i] to channels[n-2-i], the last one to 1.
    let n = arch.channels.len();
    for i in 0..n {
        let c_in = arch.channels[n - 1 - i];
        let c_out = if i + 1 < n { arch.channels[n - 2 - i] } else { 1 };
        let (w, b) = conv_name("dec", i);
        p.insert(w, glorot_uniform(&mut rng, &[c_out, c_in, k, k, k], c_in * k3, c_out * k3));
        p.insert(b, Tensor::zeros([c_out]));
    }
    Ok(ReconModel { arch, params: p })
}

impl ReconModel {
    pub fn is_variational(&self) -> bool {
        self.arch.kind == ReconKind::Vae3d
    }

    /// `[n, 1, D, H, W]` tensor of normalized volumes.
    pub fn input_batch(&self, volumes: &[&[f64]]) -> Result<Tensor> {
        let len = self.arch.volume_len();
        let mut data = Vec::with_capacity(volumes.len() * len);
        for v in volumes {
            if v.len() != len {
                return Err(Error::shape("recon input", format!("volume has {} values, expected {len}", v.len())));
            }
            data.extend(v.iter().map(|&x| self.arch.normalize(x)));
        }
        let [a, b, c] = self.arch.input;
        Tensor::new([volumes.len(), 1, a, b, c], data)
    }

    pub fn encode(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<LatentVars> {
        let a = &self.arch;
        let pad = [a.pad(); 3];
        let mut h = x;
        for i in 0..a.channels.len() {
            let (w, b) = conv_name("enc", i);
            h = g.conv3d(h, p.var(&w), Some(p.var(&b)), a.stride, pad)?;
            h = g.relu(h);
        }
        let h = g.flatten_batch(h);
        let mu = g.dense(h, p.var("enc.mu.w"), Some(p.var("enc.mu.b")))?;
        let logvar = match a.kind {
            ReconKind::Vae3d => Some(g.dense(h, p.var("enc.logvar.w"), Some(p.var("enc.logvar.b")))?),
            ReconKind::Ae => None,
        };
        Ok(LatentVars { mu, logvar })
    }

    /// Normalized reconstruction `[n, 1, D, H, W]` from latent `[n, d]`.
    pub fn decode(&self, g: &mut Graph, p: &Bound, z: Var) -> Result<Var> {
        let a = &self.arch;
        let n = g.shape(z)[0];
        let extents = a.stage_extents();
        let stages = a.channels.len();
        let h = g.dense(z, p.var("dec.fc.w"), Some(p.var("dec.fc.b")))?;
        let h = g.relu(h);
        let last = extents[stages];
        let mut h = g.reshape(h, &[n, a.channels[stages - 1], last[0], last[1], last[2]])?;
        for i in 0..stages {
            h = g.upsample_nearest(h, extents[stages - 1 - i])?;
            let (w, b) = conv_name("dec", i);
            h = g.conv3d(h, p.var(&w), Some(p.var(&b)), [1, 1, 1], [a.pad(); 3])?;
            if i + 1 < stages {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    /// Encoder means, one row per volume.
    pub fn encode_mu(&self, volumes: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(volumes.len());
        for chunk in volumes.chunks(INFER_BATCH) {
            let mut g = Graph::new();
            let p = self.params.bind(&mut g, |_| false);
            let x = g.constant(self.input_batch(chunk)?);
            let lat = self.encode(&mut g, &p, x)?;
            out.extend(g.value(lat.mu).data().chunks(self.arch.latent).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    /// Reconstructions in physical units, decoding the encoder mean.
    pub fn reconstruct(&self, volumes: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let len = self.arch.volume_len();
        let mut out = Vec::with_capacity(volumes.len());
        for chunk in volumes.chunks(INFER_BATCH) {
            let mut g = Graph::new();
            let p = self.params.bind(&mut g, |_| false);
            let x = g.constant(self.input_batch(chunk)?);
            let lat = self.encode(&mut g, &p, x)?;
            let r = self.decode(&mut g, &p, lat.mu)?;
            out.extend(
                g.value(r)
                    .data()
                    .chunks(len)
                    .map(|c| c.iter().map(|&v| self.arch.denormalize(v)).collect()),
            );
        }
        Ok(out)
    }

    pub fn decoder_param_count(&self) -> usize {
        self.params.count_with_prefix("dec.")
    }

    pub fn encoder_param_count(&self) -> usize {
        self.params.count_with_prefix("enc.")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;

    fn random_volumes(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = substream(seed, "test", 0);
        (0..n).map(|_| (0..len).map(|_| 150.0 + 20.0 * standard_normal(&mut r)).collect()).collect()
    }

    #[test]
    fn decoder_halves_match() {
        for d in [5, 9, 20] {
            let ae = build_recon_model(ArchSpec::thermal(ReconKind::Ae, d), 1).unwrap();
            let vae = build_recon_model(ArchSpec::thermal(ReconKind::Vae3d, d), 1).unwrap();
            assert_eq!(ae.decoder_param_count(), vae.decoder_param_count());
            assert!(vae.encoder_param_count() > ae.encoder_param_count());
        }
    }

    #[test]
    fn output_has_voxel_shape() {
        let m = build_recon_model(ArchSpec::thermal(ReconKind::Vae3d, 9), 3).unwrap();
        let vols = random_volumes(2, m.arch.volume_len(), 0);
        let refs: Vec<&[f64]> = vols.iter().map(Vec::as_slice).collect();
        let mut g = Graph::new();
        let p = m.params.bind(&mut g, |_| false);
        let x = g.constant(m.input_batch(&refs).unwrap());
        let lat = m.encode(&mut g, &p, x).unwrap();
        let r = m.decode(&mut g, &p, lat.mu).unwrap();
        assert_eq!(g.shape(r), &[2, 1, 18, 35, 7]);
        assert_eq!(g.shape(lat.logvar.unwrap()), &[2, 9]);
    }

    #[test]
    fn zero_noise_path_is_deterministic() {
        let m = build_recon_model(ArchSpec::thermal(ReconKind::Vae3d, 9), 4).unwrap();
        let vols = random_volumes(3, m.arch.volume_len(), 1);
        let refs: Vec<&[f64]> = vols.iter().map(Vec::as_slice).collect();
        let run = || {
            let mut g = Graph::new();
            let p = m.params.bind(&mut g, |_| false);
            let x = g.constant(m.input_batch(&refs).unwrap());
            let lat = m.encode(&mut g, &p, x).unwrap();
            let eps = Tensor::zeros([3, 9]);
            let z = g.reparameterize(lat.mu, lat.logvar.unwrap(), &eps).unwrap();
            let r = m.decode(&mut g, &p, z).unwrap();
            g.value(r).clone()
        };
        assert_eq!(run(), run());
        assert_eq!(run().data().len(), 3 * 4410);
    }

    #[test]
    fn geometry_model_round_trips_shape() {
        let m = build_recon_model(ArchSpec::geometry(ReconKind::Vae3d, 9, 16), 2).unwrap();
        let vols = vec![vec![255.0; 4096], vec![0.0; 4096]];
        let refs: Vec<&[f64]> = vols.iter().map(Vec::as_slice).collect();
        let r = m.reconstruct(&refs).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].len(), 4096);
    }
}
