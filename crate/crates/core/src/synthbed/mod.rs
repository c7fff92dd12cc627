//! Deterministic synthetic print-bucket generator with a planted quality oracle.

mod build;
mod config;
mod distort;
mod field;
mod layout;
mod oracle;
mod telemetry;

pub use build::{generate_build, BuildData, PartTruth, SynthConfig};
pub use config::{JobConfig, Material};
pub use distort::{distort, sample_bilinear};
pub(crate) use distort::{radial_factor, RadialFrame};
pub use field::{
    clean_field, layer_drift, neighborhood_density, soft_mask, thermal_field, FieldModel, ThermalFrame, T_MAX,
    T_MIN,
};
pub use layout::{BedLayout, Orientation, PartPlacement, PART_HEIGHT, PART_LENGTH, PART_WIDTH};
pub use oracle::{quality_oracle, QualityModel};
pub use telemetry::{
    telemetry_record, FieldValue, TelemetryRecord, DISTRACTOR_FIELDS, ID_FIELDS, TELEMETRY_FIELDS,
};
