use serde::{Deserialize, Serialize};

use crate::synthbed::{Orientation, PartPlacement, ThermalFrame, PART_HEIGHT, PART_LENGTH, PART_WIDTH};
use crate::types::Aggregates;
use crate::{Error, Result};

/// A 3-D grid indexed `(a, b, c)` with `c` fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawGrid {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

impl RawGrid {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape(
                "grid",
                format!("shape {shape:?} needs {} values, got {}", shape.iter().product::<usize>(), data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    #[inline]
    pub fn at(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.shape[1] + b) * self.shape[2] + c]
    }
}

/// Per-part temperature grid in canonical `(width, length, height)` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalVoxel {
    pub part_id: u32,
    pub build_id: u32,
    pub printer_id: u32,
    pub data: Vec<f64>,
}

impl ThermalVoxel {
    pub const SHAPE: [usize; 3] = [PART_WIDTH, PART_LENGTH, PART_HEIGHT];
    pub const LEN: usize = PART_WIDTH * PART_LENGTH * PART_HEIGHT;

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * PART_LENGTH + j) * PART_HEIGHT + k]
    }
}

/// Cut the part's footprint and z-extent out of a per-layer frame stack.
/// The result is in bed `(x, y, z)` order.
pub fn crop_roi(frames: &[ThermalFrame], placement: &PartPlacement) -> Result<RawGrid> {
    let (x0, x1, y0, y1, z0, z1) = placement.bounds();
    let (bw, bh) = frames.first().map(|f| (f.width, f.height)).unwrap_or((0, 0));
    if x1 > bw || y1 > bh || z1 > frames.len() {
        return Err(Error::OutOfBed {
            part: placement.id.to_string(),
            x0: x0 as i64,
            x1: x1 as i64,
            y0: y0 as i64,
            y1: y1 as i64,
            z0: z0 as i64,
            z1: z1 as i64,
            bed_w: bw,
            bed_h: bh,
            layers: frames.len(),
        });
    }
    let shape = [x1 - x0, y1 - y0, z1 - z0];
    let mut data = Vec::with_capacity(shape.iter().product());
    for x in x0..x1 {
        for y in y0..y1 {
            for frame in &frames[z0..z1] {
                data.push(frame.get(x, y));
            }
        }
    }
    RawGrid::new(shape, data)
}

/// Permute a cropped grid into `(width, length, height)` order.
///
/// The permutation is chosen from the grid's shape: a horizontal crop
/// `(35, 18, 7)` is transposed so `out(i, j, k) = raw(j, i, k)`, and a grid
/// already shaped `(18, 35, 7)` passes through unchanged. That makes the
/// operation idempotent whatever `orientation` says.
pub fn normalize_orientation(raw: &RawGrid, orientation: Orientation) -> Result<RawGrid> {
    let canonical = ThermalVoxel::SHAPE;
    let transposed = [PART_LENGTH, PART_WIDTH, PART_HEIGHT];
    if raw.data.len() != raw.shape.iter().product::<usize>() {
        return Err(Error::shape("normalize_orientation", "grid data does not match its shape"));
    }
    if raw.shape == canonical {
        return Ok(raw.clone());
    }
    if raw.shape != transposed {
        return Err(Error::shape(
            "normalize_orientation",
            format!(
                "{} crop has shape {:?}, expected {transposed:?} or {canonical:?}",
                orientation.as_str(),
                raw.shape
            ),
        ));
    }
    let mut data = Vec::with_capacity(raw.data.len());
    for i in 0..PART_WIDTH {
        for j in 0..PART_LENGTH {
            for k in 0..PART_HEIGHT {
                data.push(raw.at(j, i, k));
            }
        }
    }
    RawGrid::new(canonical, data)
}

/// Crop and normalize in one step.
pub fn part_voxel(frames: &[ThermalFrame], placement: &PartPlacement, build_id: u32, printer_id: u32) -> Result<ThermalVoxel> {
    let grid = normalize_orientation(&crop_roi(frames, placement)?, placement.orientation)?;
    Ok(ThermalVoxel {
        part_id: placement.id,
        build_id,
        printer_id,
        data: grid.data,
    })
}

pub fn aggregate(voxel: &ThermalVoxel) -> Aggregates {
    Aggregates::of(&voxel.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(shape: [usize; 3]) -> RawGrid {
        let n = shape.iter().product();
        RawGrid::new(shape, (0..n).map(|v| v as f64).collect()).unwrap()
    }

    fn part(orientation: Orientation) -> PartPlacement {
        PartPlacement {
            id: 1,
            x: 3,
            y: 4,
            z: 2,
            orientation,
        }
    }

    fn stack(w: usize, h: usize, layers: usize) -> Vec<ThermalFrame> {
        (0..layers)
            .map(|l| {
                let mut f = ThermalFrame::filled(w, h, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        f.data[y * w + x] = (l * 10000 + y * 100 + x) as f64;
                    }
                }
                f.layer = l;
                f
            })
            .collect()
    }

    #[test]
    fn crop_shapes_follow_orientation() {
        let frames = stack(60, 50, 12);
        let h = crop_roi(&frames, &part(Orientation::Horizontal)).unwrap();
        assert_eq!(h.shape, [35, 18, 7]);
        let v = crop_roi(&frames, &part(Orientation::Vertical)).unwrap();
        assert_eq!(v.shape, [18, 35, 7]);
        assert_eq!(h.at(5, 6, 1), (3 * 10000 + 10 * 100 + 8) as f64);
    }

    #[test]
    fn clipped_footprint_is_rejected() {
        let frames = stack(30, 50, 12);
        match crop_roi(&frames, &part(Orientation::Horizontal)) {
            Err(Error::OutOfBed { x1, bed_w, .. }) => assert_eq!((x1, bed_w), (38, 30)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transpose_maps_labels() {
        let raw = labeled([35, 18, 7]);
        let out = normalize_orientation(&raw, Orientation::Horizontal).unwrap();
        assert_eq!(out.shape, [18, 35, 7]);
        for (i, j, k) in [(0, 0, 0), (17, 34, 6), (3, 20, 5), (11, 2, 0)] {
            assert_eq!(out.at(i, j, k), raw.at(j, i, k));
        }
    }

    #[test]
    fn canonical_grid_is_unchanged() {
        let raw = labeled([18, 35, 7]);
        assert_eq!(normalize_orientation(&raw, Orientation::Horizontal).unwrap(), raw);
        let once = normalize_orientation(&labeled([35, 18, 7]), Orientation::Horizontal).unwrap();
        assert_eq!(normalize_orientation(&once, Orientation::Horizontal).unwrap(), once);
    }

    #[test]
    fn unexpected_shape_names_both() {
        let err = normalize_orientation(&labeled([10, 18, 7]), Orientation::Vertical).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[10, 18, 7]") && msg.contains("[18, 35, 7]"), "{msg}");
    }

    #[test]
    fn aggregates_of_constant_and_cold_pixel() {
        let mut v = ThermalVoxel {
            part_id: 0,
            build_id: 0,
            printer_id: 0,
            data: vec![150.0; ThermalVoxel::LEN],
        };
        let a = aggregate(&v);
        assert_eq!((a.min, a.mean, a.max), (150.0, 150.0, 150.0));
        v.data[77] = 100.0;
        assert_eq!(aggregate(&v).min, 100.0);
    }
}
