use serde::{Deserialize, Serialize};

use crate::autodiff::conv_out_len;
use crate::preprocess::ThermalVoxel;
use crate::synthbed::{T_MAX, T_MIN};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconKind {
    Ae,
    Vae3d,
}

impl ReconKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReconKind::Ae => "ae",
            ReconKind::Vae3d => "vae3d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Some(ReconKind::Ae),
            "vae3d" | "vae" => Some(ReconKind::Vae3d),
            _ => None,
        }
    }
}

/// Architecture descriptor of a reconstruction network.
///
/// The encoder is `channels.len()` conv3d + ReLU stages (kernel `kernel`,
/// padding `kernel / 2`, the same stride at every stage), a flatten, and a
/// dense map to the latent. The decoder mirrors it with nearest-neighbour
/// upsampling to each encoder stage's input extent followed by conv3d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub kind: ReconKind,
    pub latent: usize,
    pub input: [usize; 3],
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: [usize; 3],
    /// Raw values are mapped to `[0, 1]` by this range before encoding.
    pub value_range: [f64; 2],
}

/// Stride 2 on every axis at least half as long as the longest one.
pub fn default_strides(input: [usize; 3]) -> [usize; 3] {
    let longest = *input.iter().max().unwrap_or(&1);
    input.map(|n| if 2 * n >= longest { 2 } else { 1 })
}

impl ArchSpec {
    /// Default network for the 18×35×7 thermal voxel.
    pub fn thermal(kind: ReconKind, latent: usize) -> Self {
        let input = ThermalVoxel::SHAPE;
        Self {
            kind,
            latent,
            input,
            channels: vec![8, 16, 32],
            kernel: 3,
            stride: default_strides(input),
            value_range: [T_MIN, T_MAX],
        }
    }

    /// Default network for a binary geometry cube of edge `edge`.
    pub fn geometry(kind: ReconKind, latent: usize, edge: usize) -> Self {
        let input = [edge; 3];
        Self {
            kind,
            latent,
            input,
            channels: vec![8, 16, 32],
            kernel: 3,
            stride: default_strides(input),
            value_range: [0.0, 255.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("architecture: {m}")));
        if self.latent == 0 {
            return bad("latent size must be positive".into());
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad(format!("channels {:?} must be non-empty and positive", self.channels));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return bad(format!("kernel {} must be odd", self.kernel));
        }
        if self.input.contains(&0) || self.stride.contains(&0) {
            return bad(format!("input {:?} and stride {:?} must be positive", self.input, self.stride));
        }
        if !(self.value_range[1] > self.value_range[0]) {
            return bad(format!("value range {:?} is empty", self.value_range));
        }
        Ok(())
    }

    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    /// Spatial extent entering each encoder stage, then the final extent.
    pub fn stage_extents(&self) -> Vec<[usize; 3]> {
        let mut out = vec![self.input];
        for _ in &self.channels {
            let prev = *out.last().unwrap();
            out.push([0, 1, 2].map(|a| conv_out_len(prev[a], self.kernel, self.stride[a], self.pad())));
        }
        out
    }

    pub fn volume_len(&self) -> usize {
        self.input.iter().product()
    }

    /// Width of the flattened encoder feature.
    pub fn flat_dim(&self) -> usize {
        let last = *self.stage_extents().last().unwrap();
        self.channels.last().unwrap() * last.iter().product::<usize>()
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.value_range[0]) / (self.value_range[1] - self.value_range[0])
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.value_range[0] + v * (self.value_range[1] - self.value_range[0])
    }

    /// Physical units per normalized unit.
    pub fn value_scale(&self) -> f64 {
        self.value_range[1] - self.value_range[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_stages_land_on_expected_extents() {
        let a = ArchSpec::thermal(ReconKind::Vae3d, 9);
        assert_eq!(a.stride, [2, 2, 1]);
        assert_eq!(a.stage_extents(), vec![[18, 35, 7], [9, 18, 7], [5, 9, 7], [3, 5, 7]]);
        assert_eq!(a.flat_dim(), 32 * 3 * 5 * 7);
    }

    #[test]
    fn geometry_cube_strides_every_axis() {
        let a = ArchSpec::geometry(ReconKind::Ae, 9, 16);
        assert_eq!(a.stride, [2, 2, 2]);
        assert_eq!(a.stage_extents().last().unwrap(), &[2, 2, 2]);
    }

    #[test]
    fn invalid_descriptors_are_rejected() {
        let mut a = ArchSpec::thermal(ReconKind::Ae, 0);
        assert!(a.validate().is_err());
        a.latent = 4;
        a.kernel = 2;
        assert!(a.validate().is_err());
        a.kernel = 3;
        a.channels = vec![];
        assert!(a.validate().is_err());
    }
}
