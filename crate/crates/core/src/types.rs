//! Domain records shared across the pipeline stages.

use serde::{Deserialize, Serialize};

/// Green-part quality: dimensions in mm, envelope density in g/cm³.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityVector {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub density: f64,
}

impl QualityVector {
    pub const NAMES: [&'static str; 4] = ["length", "width", "height", "density"];

    pub fn to_array(self) -> [f64; 4] {
        [self.length, self.width, self.height, self.density]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            length: a[0],
            width: a[1],
            height: a[2],
            density: a[3],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Part-level aggregated temperatures (°C).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Aggregates {
    /// Exact min/mean/max by a sequential scan. `values` must be non-empty.
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "aggregate of empty grid");
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        Self {
            min,
            mean: sum / values.len() as f64,
            max,
        }
    }
}
