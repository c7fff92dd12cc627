use serde::{Deserialize, Serialize};

use super::field::FieldModel;
use super::oracle::QualityModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Material {
    #[serde(rename = "316")]
    Ss316,
    #[serde(rename = "17-4PH")]
    Ss17_4Ph,
}

impl Material {
    pub fn as_str(self) -> &'static str {
        match self {
            Material::Ss316 => "316",
            Material::Ss17_4Ph => "17-4PH",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "316" => Some(Material::Ss316),
            "17-4PH" => Some(Material::Ss17_4Ph),
            _ => None,
        }
    }
}

/// Per-build job parameters. `seed` fully determines every random draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub printer_id: u32,
    pub build_id: u32,
    /// Dimensionless, 0–1.
    pub binder_level: f64,
    pub layer_thickness_um: f64,
    pub recycle_count: u32,
    pub material: Material,
    /// Sensor noise standard deviation (°C), clipped at ±3σ.
    pub noise_c: f64,
    pub k1: f64,
    pub k2: f64,
    pub seed: u64,
    #[serde(default = "default_frames")]
    pub frames_per_layer: usize,
    #[serde(default)]
    pub field: FieldModel,
    #[serde(default)]
    pub quality: QualityModel,
}

fn default_frames() -> usize {
    2
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            printer_id: 0,
            build_id: 0,
            binder_level: 0.6,
            layer_thickness_um: 60.0,
            recycle_count: 0,
            material: Material::Ss316,
            noise_c: 1.0,
            k1: 0.02,
            k2: 0.005,
            seed: 0,
            frames_per_layer: default_frames(),
            field: FieldModel::default(),
            quality: QualityModel::default(),
        }
    }
}
