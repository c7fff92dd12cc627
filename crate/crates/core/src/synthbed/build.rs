use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{JobConfig, Material};
use super::distort::distort;
use super::field::{clean_field, frame_from_clean, layer_drift, FieldModel, ThermalFrame};
use super::layout::{BedLayout, PART_HEIGHT};
use super::oracle::{quality_oracle, QualityModel};
use super::telemetry::{telemetry_record, TelemetryRecord};
use crate::rng::substream;
use crate::types::{Aggregates, QualityVector};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartTruth {
    pub part_id: u32,
    /// Aggregates of the part's noise-free, undistorted voxel.
    pub clean: Aggregates,
    pub quality: QualityVector,
}

/// Everything one simulated print job emits.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildData {
    pub layout: BedLayout,
    pub config: JobConfig,
    /// Layer-major: `frames_per_layer` consecutive frames per layer, lens-distorted.
    pub frames: Vec<ThermalFrame>,
    pub telemetry: Vec<TelemetryRecord>,
    pub truths: Vec<PartTruth>,
}

impl BuildData {
    pub fn frames_of_layer(&self, layer: usize) -> &[ThermalFrame] {
        let f = self.config.frames_per_layer.max(1);
        &self.frames[layer * f..(layer + 1) * f]
    }
}

/// Simulate one build: frames, telemetry, and planted truths.
pub fn generate_build(layout: &BedLayout, config: &JobConfig) -> Result<BuildData> {
    layout.validate()?;
    let frames_per_layer = config.frames_per_layer.max(1);
    let drift = layer_drift(config, layout.layers);
    let mut clean_voxels: Vec<Vec<f64>> = layout
        .parts
        .iter()
        .map(|p| {
            let (w, h) = p.footprint();
            Vec::with_capacity(w * h * PART_HEIGHT)
        })
        .collect();
    let mut frames = Vec::with_capacity(layout.layers * frames_per_layer);
    for layer in 0..layout.layers {
        let clean = clean_field(layout, config, layer, drift[layer]);
        for (voxel, part) in clean_voxels.iter_mut().zip(&layout.parts) {
            let (x0, x1, y0, y1, z0, z1) = part.bounds();
            if (z0..z1).contains(&layer) {
                for y in y0..y1 {
                    voxel.extend_from_slice(&clean[y * layout.bed_w + x0..y * layout.bed_w + x1]);
                }
            }
        }
        for f in 0..frames_per_layer {
            let frame = frame_from_clean(&clean, layout, config, layer, f);
            frames.push(distort(&frame, config.k1, config.k2));
        }
    }
    let mut telemetry = Vec::with_capacity(layout.parts.len());
    let mut truths = Vec::with_capacity(layout.parts.len());
    for (part, voxel) in layout.parts.iter().zip(&clean_voxels) {
        let clean = Aggregates::of(voxel);
        truths.push(PartTruth {
            part_id: part.id,
            clean,
            quality: quality_oracle(part, &clean, config),
        });
        telemetry.push(telemetry_record(layout, config, part));
    }
    Ok(BuildData {
        layout: layout.clone(),
        config: config.clone(),
        frames,
        telemetry,
        truths,
    })
}

/// Campaign-level generator settings: how many builds, and the ranges
/// their job parameters are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub builds: usize,
    pub printers: u32,
    pub bed_w: usize,
    pub bed_h: usize,
    pub layers: usize,
    /// Inclusive range of placement attempts per slab.
    pub parts_per_slab: [usize; 2],
    pub frames_per_layer: usize,
    pub binder_range: [f64; 2],
    pub thickness_choices_um: Vec<f64>,
    pub max_recycle: u32,
    pub noise_c: f64,
    pub k1: f64,
    pub k2: f64,
    pub field: FieldModel,
    pub quality: QualityModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            builds: 32,
            printers: 5,
            bed_w: 160,
            bed_h: 120,
            layers: 64,
            parts_per_slab: [5, 7],
            frames_per_layer: 2,
            binder_range: [0.4, 0.8],
            thickness_choices_um: vec![50.0, 60.0, 70.0],
            max_recycle: 5,
            noise_c: 1.0,
            k1: 0.02,
            k2: 0.005,
            field: FieldModel::default(),
            quality: QualityModel::default(),
        }
    }
}

impl SynthConfig {
    /// Layout and job parameters of build `index` under `master` seed.
    pub fn job(&self, master: u64, index: usize) -> (BedLayout, JobConfig) {
        let mut rng = substream(master, "datagen", index as u64);
        let seed: u64 = rng.random();
        let binder = if self.binder_range[1] > self.binder_range[0] {
            rng.random_range(self.binder_range[0]..self.binder_range[1])
        } else {
            self.binder_range[0]
        };
        let thickness = if self.thickness_choices_um.is_empty() {
            60.0
        } else {
            self.thickness_choices_um[rng.random_range(0..self.thickness_choices_um.len())]
        };
        let config = JobConfig {
            printer_id: index as u32 % self.printers.max(1),
            build_id: index as u32,
            binder_level: (binder * 100.0).round() / 100.0,
            layer_thickness_um: thickness,
            recycle_count: rng.random_range(0..=self.max_recycle),
            material: if rng.random_bool(0.5) {
                Material::Ss316
            } else {
                Material::Ss17_4Ph
            },
            noise_c: self.noise_c,
            k1: self.k1,
            k2: self.k2,
            seed,
            frames_per_layer: self.frames_per_layer,
            field: self.field.clone(),
            quality: self.quality.clone(),
        };
        let layout = BedLayout::random(
            self.bed_w,
            self.bed_h,
            self.layers,
            (self.parts_per_slab[0], self.parts_per_slab[1]),
            &mut substream(seed, "layout", 0),
        );
        (layout, config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbed::field::{T_MAX, T_MIN};
    use crate::synthbed::layout::{Orientation, PartPlacement};

    #[test]
    fn seven_layers_carry_the_part() {
        let layout = BedLayout {
            parts: vec![PartPlacement {
                id: 0,
                x: 50,
                y: 40,
                z: 10,
                orientation: Orientation::Horizontal,
            }],
            ..Default::default()
        };
        let cfg = JobConfig {
            noise_c: 0.0,
            k1: 0.0,
            k2: 0.0,
            ..Default::default()
        };
        let b = generate_build(&layout, &cfg).unwrap();
        let base = cfg.field.base(cfg.printer_id);
        let hot: Vec<usize> = (0..layout.layers)
            .filter(|&l| {
                let f = b.frames_of_layer(l).last().unwrap();
                f.get(67, 48) > base + 1.0
            })
            .collect();
        assert_eq!(hot, (10..17).collect::<Vec<_>>());
        assert_eq!(b.frames.len(), 64 * 2);
        assert!(b.frames.iter().all(ThermalFrame::in_range));
        assert!(T_MIN < base && base < T_MAX);
    }

    #[test]
    fn overlapping_layout_is_rejected() {
        let p = PartPlacement {
            id: 0,
            x: 10,
            y: 10,
            z: 0,
            orientation: Orientation::Horizontal,
        };
        let layout = BedLayout {
            parts: vec![p, PartPlacement { id: 1, x: 20, ..p }],
            ..Default::default()
        };
        assert!(generate_build(&layout, &JobConfig::default()).is_err());
    }

    #[test]
    fn jobs_cover_all_printers() {
        let s = SynthConfig::default();
        let printers: std::collections::BTreeSet<u32> =
            (0..s.builds).map(|i| s.job(3, i).1.printer_id).collect();
        assert_eq!(printers.len(), 5);
        assert_eq!(s.job(3, 4), s.job(3, 4));
    }
}
