mod common;

use rand_distr::{Distribution, StandardNormal};
use thermonet::evalreport::error_stats;
use thermonet::models::{build_recon_model, default_strides, pretrain_recon_with, ArchSpec, ReconKind, TrainConfig};

const CUBE: [usize; 3] = [8, 8, 4];
const CUBE_LEN: usize = 256;

/// Volumes `150 + 30·(a·P + b·Q)` on an 8×8×4 cube with `a, b ~ N(0, 1)`
/// and orthogonal ±1 patterns `P`, `Q`.
fn two_factor_volumes(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = common::rng(seed);
    let p = |i: usize| if (i / 4) % 2 == 0 { 1.0 } else { -1.0 };
    let q = |i: usize| if (i / 32) % 2 == 0 { 1.0 } else { -1.0 };
    (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            (0..CUBE_LEN).map(|i| 150.0 + 30.0 * (a * p(i) + b * q(i))).collect()
        })
        .collect()
}

/// Per-dimension (mean, std) of the train-split latent means after training.
fn latent_mean_stats(seed: u64) -> Vec<(f64, f64)> {
    let train = two_factor_volumes(256, 1);
    let val = two_factor_volumes(32, 2);
    let tr: Vec<&[f64]> = train.iter().map(Vec::as_slice).collect();
    let va: Vec<&[f64]> = val.iter().map(Vec::as_slice).collect();
    let arch = ArchSpec {
        kind: ReconKind::Vae3d,
        latent: 2,
        input: CUBE,
        channels: vec![4, 8],
        kernel: 3,
        stride: default_strides(CUBE),
        value_range: [100.0, 200.0],
    };
    let mut m = build_recon_model(arch, seed).unwrap();
    let cfg = TrainConfig { latent: 2, w2: 0.5, lr: 3e-3, epochs: 300, batch_size: 16, seed, ..TrainConfig::recon() };
    pretrain_recon_with(&mut m, &tr, &va, &cfg, |_, _, _| {}).unwrap();
    let mu = m.encode_mu(&tr).unwrap();
    (0..2)
        .map(|k| {
            let col: Vec<f64> = mu.iter().map(|r| r[k]).collect();
            let s = error_stats(&col).unwrap();
            (s.mean, s.std)
        })
        .collect()
}

#[test]
fn vae_latent_means_approach_the_prior() {
    for seed in 0..3 {
        for (k, (mean, std)) in latent_mean_stats(seed).into_iter().enumerate() {
            eprintln!("seed {seed} dim {k}: mean {mean:.3} std {std:.3}");
            assert!(mean.abs() < 0.5 && (0.5..=1.5).contains(&std), "seed {seed} dim {k}: mean {mean} std {std}");
        }
    }
}
