//! Named random substreams derived from one master seed.
//!
//! Every consumer asks for its own stream (`datagen`, `init`, `shuffle`,
//! `reparameterize`, ...) so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Deterministic generator for `(master, name, index)`.
pub fn substream(master: u64, name: &str, index: u64) -> StreamRng {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(seed)
}

pub fn standard_normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gaussian sample with standard deviation `sigma`, clipped at ±3σ.
pub fn clipped_normal(rng: &mut StreamRng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z.clamp(-3.0, 3.0)
}
