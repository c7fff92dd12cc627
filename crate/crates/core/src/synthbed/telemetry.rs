//! Synthetic printer-log schema: 30 raw fields per part, of which two are
//! identifiers and three are distractors with no planted signal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::JobConfig;
use super::layout::{BedLayout, PartPlacement};
use crate::rng::{standard_normal, substream};

pub const ID_FIELDS: [&str; 2] = ["build_id", "part_id"];

pub const DISTRACTOR_FIELDS: [&str; 3] = ["ambient_humidity_pct", "ambient_temp_c", "operator_shift"];

/// Every raw field in emission order.
pub const TELEMETRY_FIELDS: [&str; 30] = [
    "build_id",
    "part_id",
    "printer_id",
    "bed_x",
    "bed_y",
    "bed_z",
    "orientation",
    "binder_level",
    "shadowing",
    "layer_thickness_um",
    "powder_recycle_count",
    "material",
    "powder_batch",
    "powder_d50_um",
    "powder_moisture_pct",
    "powder_lot_age_days",
    "cure_temp_c",
    "cure_time_min",
    "spread_speed_mm_s",
    "roller_speed_rpm",
    "heater_setpoint_c",
    "lamp_power_pct",
    "build_plate_temp_c",
    "print_duration_h",
    "nozzle_health_pct",
    "parts_in_build",
    "layer_neighbors",
    "ambient_humidity_pct",
    "ambient_temp_c",
    "operator_shift",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Num(f64),
    Text(String),
}

impl FieldValue {
    pub fn render(&self) -> String {
        match self {
            FieldValue::Num(v) => format!("{v}"),
            FieldValue::Text(s) => s.clone(),
        }
    }
}

/// One part's raw log line, fields in schema order.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub fields: Vec<(String, FieldValue)>,
}

impl TelemetryRecord {
    pub fn get(&self, name: &str) -> Option<&FieldValue> {
        self.fields.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn num(&self, name: &str) -> Option<f64> {
        match self.get(name)? {
            FieldValue::Num(v) => Some(*v),
            FieldValue::Text(s) => s.parse().ok(),
        }
    }

    pub fn text(&self, name: &str) -> Option<String> {
        self.get(name).map(FieldValue::render)
    }

    fn push(&mut self, name: &str, v: FieldValue) {
        self.fields.push((name.to_string(), v));
    }
}

fn round(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

/// Raw telemetry for one part of a build.
pub fn telemetry_record(layout: &BedLayout, config: &JobConfig, part: &PartPlacement) -> TelemetryRecord {
    use FieldValue::{Num, Text};
    let mut b = substream(config.seed, "telemetry", 0);
    let mut n = |mean: f64, sd: f64, digits: i32| round(mean + sd * standard_normal(&mut b), digits);
    let powder_d50 = n(10.0, 1.5, 3);
    let moisture = n(0.1, 0.03, 4);
    let cure_temp = n(200.0, 5.0, 2);
    let cure_time = n(240.0, 20.0, 1);
    let spread = n(80.0, 8.0, 2);
    let roller = n(300.0, 20.0, 1);
    let setpoint = n(150.0, 2.0, 2);
    let lamp = n(85.0, 5.0, 2);
    let plate = n(60.0, 3.0, 2);
    let duration = n(8.0, 1.0, 3);
    let nozzle = n(95.0, 3.0, 2);
    let mut b = substream(config.seed, "telemetry", 1);
    let powder_batch = b.random_range(1..=12) as f64;
    let lot_age = b.random_range(0..=120) as f64;

    let mut p = substream(config.seed, "telemetry_part", part.id as u64);
    let shadowing = p.random_range(0..=1) as f64;
    let humidity = round(40.0 + 10.0 * standard_normal(&mut p), 2);
    let ambient = round(22.0 + 2.0 * standard_normal(&mut p), 2);
    let shift = p.random_range(1..=3) as f64;

    let mut r = TelemetryRecord::default();
    r.push("build_id", Num(config.build_id as f64));
    r.push("part_id", Num(part.id as f64));
    r.push("printer_id", Num(config.printer_id as f64));
    r.push("bed_x", Num(part.x as f64));
    r.push("bed_y", Num(part.y as f64));
    r.push("bed_z", Num(part.z as f64));
    r.push("orientation", Text(part.orientation.as_str().to_string()));
    r.push("binder_level", Num(config.binder_level));
    r.push("shadowing", Num(shadowing));
    r.push("layer_thickness_um", Num(config.layer_thickness_um));
    r.push("powder_recycle_count", Num(config.recycle_count as f64));
    r.push("material", Text(config.material.as_str().to_string()));
    r.push("powder_batch", Num(powder_batch));
    r.push("powder_d50_um", Num(powder_d50));
    r.push("powder_moisture_pct", Num(moisture));
    r.push("powder_lot_age_days", Num(lot_age));
    r.push("cure_temp_c", Num(cure_temp));
    r.push("cure_time_min", Num(cure_time));
    r.push("spread_speed_mm_s", Num(spread));
    r.push("roller_speed_rpm", Num(roller));
    r.push("heater_setpoint_c", Num(setpoint));
    r.push("lamp_power_pct", Num(lamp));
    r.push("build_plate_temp_c", Num(plate));
    r.push("print_duration_h", Num(duration));
    r.push("nozzle_health_pct", Num(nozzle));
    r.push("parts_in_build", Num(layout.parts.len() as f64));
    r.push("layer_neighbors", Num(layout.layer_neighbors(part) as f64));
    r.push("ambient_humidity_pct", Num(humidity));
    r.push("ambient_temp_c", Num(ambient));
    r.push("operator_shift", Num(shift));
    debug_assert_eq!(r.fields.len(), TELEMETRY_FIELDS.len());
    r
}
