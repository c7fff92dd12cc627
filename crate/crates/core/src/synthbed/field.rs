//! Synthetic thermal frames.
//!
//! Noise-free canonical temperature at bed pixel `(x, y)`, layer `l`:
//!
//! ```text
//! T = base[printer]
//!   + s(x, y, l) · (boost · binder + drift[l] − recycle_penalty · recycle)
//!   + density_gain · ρ(x, y, l)
//! ```
//!
//! where `s` is the layer's part mask blurred by a Gaussian of width
//! `edge_sigma` (heat bleeding across part boundaries), `ρ` is the fraction
//! of part pixels inside the radius-`r` disc centred on the pixel and `drift[l]` is a per-build slow sinusoid plus
//! white jitter over layers. Earlier frames of a layer ramp linearly from
//! the powder base to the canonical value; the last frame is canonical.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::JobConfig;
use super::layout::BedLayout;
use crate::rng::{clipped_normal, standard_normal, substream};

pub const T_MIN: f64 = 80.0;
pub const T_MAX: f64 = 220.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldModel {
    /// Powder temperature per printer id (°C); ids wrap around.
    pub base_by_printer: Vec<f64>,
    /// In-part temperature gain per unit binder level (°C).
    pub boost: f64,
    /// In-part cooling per powder recycle run (°C).
    pub recycle_penalty: f64,
    /// Gain of the neighbourhood part-density term (°C).
    pub density_gain: f64,
    /// Disc radius of the neighbourhood term (pixels).
    pub density_radius: usize,
    /// Range of the per-build drift amplitude (°C).
    pub drift_amplitude: [f64; 2],
    /// Drift periods across the full layer stack.
    pub drift_cycles: f64,
    /// Per-layer white jitter added to the drift (°C).
    pub drift_jitter: f64,
    /// Width of the part-boundary blur (pixels); 0 keeps edges sharp.
    pub edge_sigma: f64,
}

impl Default for FieldModel {
    fn default() -> Self {
        Self {
            base_by_printer: vec![136.0, 128.0, 146.0, 132.0, 141.0],
            boost: 40.0,
            recycle_penalty: 1.5,
            density_gain: 18.0,
            density_radius: 6,
            drift_amplitude: [2.0, 8.0],
            drift_cycles: 1.5,
            drift_jitter: 0.5,
            edge_sigma: 1.5,
        }
    }
}

impl FieldModel {
    pub fn base(&self, printer: u32) -> f64 {
        self.base_by_printer[printer as usize % self.base_by_printer.len()]
    }

    /// Model with no per-layer drift, for closed-form checks.
    pub fn without_drift(mut self) -> Self {
        self.drift_amplitude = [0.0, 0.0];
        self.drift_jitter = 0.0;
        self
    }
}

/// One captured frame; `data` is row-major over (`y`, `x`).
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalFrame {
    pub width: usize,
    pub height: usize,
    pub layer: usize,
    pub frame: usize,
    pub data: Vec<f64>,
}

impl ThermalFrame {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            layer: 0,
            frame: 0,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn in_range(&self) -> bool {
        self.data.iter().all(|v| (T_MIN..=T_MAX).contains(v))
    }
}

/// Per-layer in-part drift for a build.
pub fn layer_drift(config: &JobConfig, layers: usize) -> Vec<f64> {
    let m = &config.field;
    let mut rng = substream(config.seed, "drift", 0);
    let amp = if m.drift_amplitude[1] > m.drift_amplitude[0] {
        rng.random_range(m.drift_amplitude[0]..m.drift_amplitude[1])
    } else {
        m.drift_amplitude[0]
    };
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut jitter = substream(config.seed, "drift", 1);
    (0..layers)
        .map(|l| {
            let t = l as f64 / layers as f64;
            amp * (std::f64::consts::TAU * m.drift_cycles * t + phase).sin()
                + m.drift_jitter * standard_normal(&mut jitter)
        })
        .collect()
}

/// Fraction of part pixels inside the radius-`r` disc around every pixel.
/// Disc pixels beyond the bed count as powder.
pub fn neighborhood_density(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<f64> {
    // Row prefix sums turn each disc row into one subtraction.
    let mut prefix = vec![0u32; h * (w + 1)];
    for y in 0..h {
        for x in 0..w {
            prefix[y * (w + 1) + x + 1] = prefix[y * (w + 1) + x] + mask[y * w + x] as u32;
        }
    }
    let ri = r as isize;
    let spans: Vec<(isize, isize)> = (-ri..=ri)
        .map(|dy| {
            let hw = ((r * r) as f64 - (dy * dy) as f64).sqrt().floor() as isize;
            (dy, hw)
        })
        .collect();
    let disc_area: isize = spans.iter().map(|(_, hw)| 2 * hw + 1).sum();
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut count = 0u32;
            for &(dy, hw) in &spans {
                let yy = y + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                let lo = (x - hw).max(0) as usize;
                let hi = ((x + hw + 1).min(w as isize)) as usize;
                if lo < hi {
                    let row = yy as usize * (w + 1);
                    count += prefix[row + hi] - prefix[row + lo];
                }
            }
            out[y as usize * w + x as usize] = count as f64 / disc_area as f64;
        }
    }
    out
}

/// Separable Gaussian blur of a binary mask, truncated at 3σ, with pixels
/// beyond the bed read as 0.
pub fn soft_mask(mask: &[bool], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let hard: Vec<f64> = mask.iter().map(|&b| b as u8 as f64).collect();
    if sigma <= 0.0 {
        return hard;
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let xx = x as isize + i as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += k * hard[y * w + xx as usize];
                }
            }
            rows[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let yy = y as isize + i as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += k * rows[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Noise-free canonical field of one layer, given that layer's drift.
pub fn clean_field(layout: &BedLayout, config: &JobConfig, layer: usize, drift: f64) -> Vec<f64> {
    let m = &config.field;
    let (w, h) = (layout.bed_w, layout.bed_h);
    let mask = layout.occupancy(layer);
    let base = m.base(config.printer_id);
    if !mask.iter().any(|&b| b) {
        return vec![base; w * h];
    }
    let rho = neighborhood_density(&mask, w, h, m.density_radius);
    let soft = soft_mask(&mask, w, h, m.edge_sigma);
    let in_part = m.boost * config.binder_level + drift
        - m.recycle_penalty * config.recycle_count as f64;
    soft.iter()
        .zip(&rho)
        .map(|(&s, &r)| {
            let t = base + s * in_part + m.density_gain * r;
            t.clamp(T_MIN, T_MAX)
        })
        .collect()
}

/// Frame `frame` of `layer` from its clean canonical field: fusing-state ramp,
/// clipped Gaussian noise, range clamp. No lens distortion.
pub fn frame_from_clean(
    clean: &[f64],
    layout: &BedLayout,
    config: &JobConfig,
    layer: usize,
    frame: usize,
) -> ThermalFrame {
    let frames = config.frames_per_layer.max(1);
    let base = config.field.base(config.printer_id);
    let ramp = (frame + 1) as f64 / frames as f64;
    let mut rng = substream(config.seed, "frame_noise", (layer * frames + frame) as u64);
    let data = clean
        .iter()
        .map(|&t| {
            let v = base + (t - base) * ramp;
            let n = if config.noise_c > 0.0 {
                clipped_normal(&mut rng, config.noise_c)
            } else {
                0.0
            };
            (v + n).clamp(T_MIN, T_MAX)
        })
        .collect();
    ThermalFrame {
        width: layout.bed_w,
        height: layout.bed_h,
        layer,
        frame,
        data,
    }
}

/// Canonical (last fusing-state) frame of `layer`, with sensor noise and
/// without lens distortion.
pub fn thermal_field(layout: &BedLayout, config: &JobConfig, layer: usize) -> ThermalFrame {
    assert!(layer < layout.layers, "layer {layer} out of range");
    let drift = layer_drift(config, layout.layers)[layer];
    let clean = clean_field(layout, config, layer, drift);
    frame_from_clean(
        &clean,
        layout,
        config,
        layer,
        config.frames_per_layer.max(1) - 1,
    )
}
