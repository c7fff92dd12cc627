use serde::{Deserialize, Serialize};

use super::frames::{select_fusing_frames, FrameChoice};
use super::geometry::{design_slices, voxelize_geometry, GeometryVoxel};
use super::split::{split_by_build, Split, SplitRatios};
use super::tabular::{encode_record, Standardizer};
use super::undistort::{filter_dead_pixels, undistort};
use super::voxel::{aggregate, part_voxel, ThermalVoxel};
use crate::synthbed::{BuildData, Orientation};
use crate::types::{Aggregates, QualityVector};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessOptions {
    pub frame: FrameChoice,
    pub undistort: bool,
    /// Edge of the geometry cube; `None` skips the geometry path.
    pub roi_edge: Option<usize>,
    pub ratios: SplitRatios,
    pub split_seed: u64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            frame: FrameChoice::Last,
            undistort: true,
            roi_edge: None,
            ratios: SplitRatios::default(),
            split_seed: 0,
        }
    }
}

/// One part's model-ready tabular record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub build_id: u32,
    pub part_id: u32,
    pub printer_id: u32,
    pub bed_x: usize,
    pub bed_y: usize,
    pub bed_z: usize,
    pub orientation: Orientation,
    /// Encoded but unstandardized retained fields.
    pub raw_features: Vec<f64>,
    /// Standardized with train-split statistics.
    pub features: Vec<f64>,
    pub aggregates: Aggregates,
    pub target: QualityVector,
}

/// Everything the models consume, record-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<PartRecord>,
    pub voxels: Vec<ThermalVoxel>,
    pub geometry: Vec<GeometryVoxel>,
    pub split: Split,
    pub standardizer: Standardizer,
}

impl Dataset {
    pub fn feature_dim(&self) -> usize {
        self.standardizer.mean.len()
    }
}

/// Undistort, crop, normalize and encode every part of one build.
pub fn process_build(
    build: &BuildData,
    opts: &PreprocessOptions,
) -> Result<(Vec<PartRecord>, Vec<ThermalVoxel>, Vec<GeometryVoxel>)> {
    let cfg = &build.config;
    let mut frames = select_fusing_frames(&build.frames, build.layout.layers, opts.frame)?;
    for f in frames.iter_mut() {
        let mut g = filter_dead_pixels(f);
        if opts.undistort {
            g = undistort(&g, cfg.k1, cfg.k2)?;
        }
        *f = g;
    }
    let slices = opts.roi_edge.map(|_| design_slices(&build.layout));
    let mut records = Vec::with_capacity(build.layout.parts.len());
    let mut voxels = Vec::with_capacity(build.layout.parts.len());
    let mut geometry = Vec::new();
    for (i, part) in build.layout.parts.iter().enumerate() {
        let voxel = part_voxel(&frames, part, cfg.build_id, cfg.printer_id)?;
        let truth = &build.truths[i];
        if truth.part_id != part.id {
            return Err(Error::InvalidArgument(format!(
                "truth for part {} is out of order in build {}",
                part.id, cfg.build_id
            )));
        }
        let raw = encode_record(&build.telemetry[i])?;
        records.push(PartRecord {
            build_id: cfg.build_id,
            part_id: part.id,
            printer_id: cfg.printer_id,
            bed_x: part.x,
            bed_y: part.y,
            bed_z: part.z,
            orientation: part.orientation,
            raw_features: raw,
            features: Vec::new(),
            aggregates: aggregate(&voxel),
            target: truth.quality,
        });
        voxels.push(voxel);
        if let (Some(edge), Some(s)) = (opts.roi_edge, slices.as_ref()) {
            geometry.push(voxelize_geometry(s, build.layout.bed_w, build.layout.bed_h, part, edge));
        }
    }
    Ok((records, voxels, geometry))
}

/// Process builds, split by build, and standardize with train statistics.
pub fn assemble_dataset(builds: &[BuildData], opts: &PreprocessOptions) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut voxels = Vec::new();
    let mut geometry = Vec::new();
    for b in builds {
        let (r, v, g) = process_build(b, opts)?;
        records.extend(r);
        voxels.extend(v);
        geometry.extend(g);
    }
    finish_dataset(records, voxels, geometry, opts)
}

/// Split and standardize already-processed parts.
pub fn finish_dataset(
    mut records: Vec<PartRecord>,
    voxels: Vec<ThermalVoxel>,
    geometry: Vec<GeometryVoxel>,
    opts: &PreprocessOptions,
) -> Result<Dataset> {
    let build_ids: Vec<u32> = records.iter().map(|r| r.build_id).collect();
    let split = split_by_build(&build_ids, opts.ratios, opts.split_seed)?;
    let train_rows: Vec<Vec<f64>> = split.train.iter().map(|&i| records[i].raw_features.clone()).collect();
    let standardizer = Standardizer::fit(&train_rows)?;
    for r in records.iter_mut() {
        r.features = standardizer.apply(&r.raw_features)?;
    }
    Ok(Dataset {
        records,
        voxels,
        geometry,
        split,
        standardizer,
    })
}
