//! Frames to model inputs: undistortion, fusing-frame selection, per-part
//! cropping, orientation normalization, tabular cleaning, geometry cubes and
//! build-level splitting.

mod dataset;
mod frames;
mod geometry;
mod split;
mod tabular;
mod undistort;
mod voxel;

pub use dataset::{assemble_dataset, finish_dataset, process_build, Dataset, PartRecord, PreprocessOptions};
pub use frames::{select_fusing_frames, FrameChoice};
pub use geometry::{design_slices, voxelize_geometry, GeometryVoxel, DEFAULT_ROI_EDGE};
pub use split::{split_by_build, Split, SplitRatios};
pub use tabular::{clean_tabular, encode_record, feature_names, Standardizer};
pub use undistort::{filter_dead_pixels, undistort, DEAD_PIXEL_RANGE, UNDISTORT_MAX_ITER, UNDISTORT_TOL};
pub use voxel::{aggregate, crop_roi, normalize_orientation, part_voxel, RawGrid, ThermalVoxel};
