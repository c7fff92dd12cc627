use serde::{Deserialize, Serialize};

use crate::synthbed::{FieldValue, Material, Orientation, TelemetryRecord, DISTRACTOR_FIELDS, ID_FIELDS, TELEMETRY_FIELDS};
use crate::{Error, Result};

/// Fields kept as model features, in order.
pub fn feature_names() -> Vec<&'static str> {
    TELEMETRY_FIELDS
        .iter()
        .copied()
        .filter(|f| !ID_FIELDS.contains(f) && !DISTRACTOR_FIELDS.contains(f))
        .collect()
}

fn encode(name: &str, value: &FieldValue) -> Result<f64> {
    let bad = || Error::InvalidArgument(format!("field `{name}` has unusable value `{}`", value.render()));
    match name {
        "orientation" => match Orientation::parse(&value.render()).ok_or_else(bad)? {
            Orientation::Horizontal => Ok(0.0),
            Orientation::Vertical => Ok(1.0),
        },
        "material" => match Material::parse(&value.render()).ok_or_else(bad)? {
            Material::Ss316 => Ok(0.0),
            Material::Ss17_4Ph => Ok(1.0),
        },
        _ => match value {
            FieldValue::Num(v) if v.is_finite() => Ok(*v),
            FieldValue::Text(s) => s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad),
            _ => Err(bad()),
        },
    }
}

/// Retained fields of a raw record as numbers, before standardization.
pub fn encode_record(record: &TelemetryRecord) -> Result<Vec<f64>> {
    feature_names()
        .into_iter()
        .map(|name| {
            let v = record.get(name).ok_or_else(|| Error::MissingField(name.to_string()))?;
            encode(name, v)
        })
        .collect()
}

/// Per-feature mean and population standard deviation fitted on a split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant features get `std = 1` so they map to zero.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let names = feature_names();
        if rows.is_empty() {
            return Err(Error::InvalidArgument("cannot fit standardizer on an empty split".into()));
        }
        let n = rows.len() as f64;
        let dim = names.len();
        let mut mean = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(Error::shape("standardize", format!("row has {} features, expected {dim}", r.len())));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            names: names.into_iter().map(String::from).collect(),
            mean,
            std,
        })
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(Error::shape(
                "standardize",
                format!("row has {} features, expected {}", row.len(), self.mean.len()),
            ));
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Clean a raw record into a standardized feature vector.
pub fn clean_tabular(record: &TelemetryRecord, stats: &Standardizer) -> Result<Vec<f64>> {
    stats.apply(&encode_record(record)?)
}
