//! Multimodal thermal encoder network for binder-jet green-part quality
//! prediction: synthetic print-bed generation, voxel/tabular preprocessing,
//! AE and 3D-VAE reconstruction, fusion predictors, and reporting.

pub mod autodiff;
pub mod cli;
mod error;
pub mod evalreport;
pub mod models;
pub mod rng;
pub mod preprocess;
pub mod synthbed;
pub mod types;

pub use error::{Error, Result};
pub use types::{Aggregates, QualityVector};
