//! Planted ground truth.
//!
//! ```text
//! density = d0 + alpha · (min_temp − t_ref) + noise
//! shrink  = s0 + s_temp · (mean_temp − t_ref) + s_binder · (binder − 0.6)
//!              + s_thick · (thickness − 60) + material_offset
//! dim_a   = nominal_a · (1 − shrink · aniso_a) + noise_a
//! ```
//!
//! Noise terms are Gaussian, clipped at ±3σ, drawn from a per-part stream.

use serde::{Deserialize, Serialize};

use super::config::{JobConfig, Material};
use super::layout::PartPlacement;
use crate::rng::{clipped_normal, substream};
use crate::types::{Aggregates, QualityVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QualityModel {
    /// Envelope density at the reference temperature (g/cm³).
    pub density0: f64,
    /// Density change per °C of aggregated minimum temperature.
    pub alpha: f64,
    pub t_ref: f64,
    /// Added to the shrinkage of 17-4PH parts.
    pub shrink_offset_17_4ph: f64,
    /// Nominal length, width, height (mm).
    pub nominal_mm: [f64; 3],
    pub shrink0: f64,
    pub shrink_per_c: f64,
    pub shrink_per_binder: f64,
    pub shrink_per_um: f64,
    pub anisotropy: [f64; 3],
    /// Density noise σ (g/cm³).
    pub density_noise: f64,
    /// Dimension noise σ as a fraction of nominal.
    pub dim_noise_frac: f64,
}

impl Default for QualityModel {
    fn default() -> Self {
        Self {
            density0: 4.5,
            alpha: 0.012,
            t_ref: 150.0,
            shrink_offset_17_4ph: 0.002,
            nominal_mm: [31.75, 12.7, 6.35],
            shrink0: 0.01,
            shrink_per_c: 0.0006,
            shrink_per_binder: 0.01,
            shrink_per_um: 0.0002,
            anisotropy: [1.0, 1.0, 1.5],
            density_noise: 0.01,
            dim_noise_frac: 0.0005,
        }
    }
}

impl QualityModel {
    pub fn noiseless(mut self) -> Self {
        self.density_noise = 0.0;
        self.dim_noise_frac = 0.0;
        self
    }
}

/// Ground-truth quality of `part` from its noise-free aggregates.
pub fn quality_oracle(part: &PartPlacement, agg: &Aggregates, config: &JobConfig) -> QualityVector {
    let q = &config.quality;
    let mut rng = substream(config.seed, "oracle", part.id as u64);
    let mut noise = |sigma: f64| {
        if sigma > 0.0 {
            clipped_normal(&mut rng, sigma)
        } else {
            0.0
        }
    };
    let material = match config.material {
        Material::Ss316 => 0.0,
        Material::Ss17_4Ph => q.shrink_offset_17_4ph,
    };
    let density = q.density0 + q.alpha * (agg.min - q.t_ref) + noise(q.density_noise);
    let shrink = q.shrink0
        + q.shrink_per_c * (agg.mean - q.t_ref)
        + q.shrink_per_binder * (config.binder_level - 0.6)
        + q.shrink_per_um * (config.layer_thickness_um - 60.0)
        + material;
    let mut dims = [0.0; 3];
    for a in 0..3 {
        let nominal = q.nominal_mm[a];
        dims[a] = nominal * (1.0 - shrink * q.anisotropy[a]) + noise(q.dim_noise_frac * nominal);
    }
    QualityVector {
        length: dims[0],
        width: dims[1],
        height: dims[2],
        density,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbed::layout::Orientation;

    fn part(id: u32) -> PartPlacement {
        PartPlacement {
            id,
            x: 0,
            y: 0,
            z: 0,
            orientation: Orientation::Horizontal,
        }
    }

    fn agg(min: f64, mean: f64) -> Aggregates {
        Aggregates {
            min,
            mean,
            max: mean + 10.0,
        }
    }

    #[test]
    fn decoupled_density_is_constant() {
        let mut cfg = JobConfig::default();
        cfg.quality = QualityModel {
            alpha: 0.0,
            ..QualityModel::default().noiseless()
        };
        for (i, t) in [120.0, 150.0, 190.0].into_iter().enumerate() {
            let q = quality_oracle(&part(i as u32), &agg(t, t + 5.0), &cfg);
            assert_eq!(q.density, cfg.quality.density0);
        }
    }

    #[test]
    fn equal_inputs_give_equal_quality() {
        let mut cfg = JobConfig::default();
        cfg.quality = cfg.quality.noiseless();
        let a = quality_oracle(&part(1), &agg(140.0, 160.0), &cfg);
        let b = quality_oracle(&part(2), &agg(140.0, 160.0), &cfg);
        assert_eq!(a, b);
        assert!(a.is_valid());
    }
}
