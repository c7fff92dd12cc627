use serde::{Deserialize, Serialize};

use crate::synthbed::{BedLayout, Orientation, PartPlacement};

pub const DEFAULT_ROI_EDGE: usize = 50;

/// Binary design cube around one part, values 0 (powder) or 255 (part).
/// Axes follow the thermal voxel: part width, part length, height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryVoxel {
    pub part_id: u32,
    pub edge: usize,
    pub data: Vec<u8>,
}

impl GeometryVoxel {
    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> u8 {
        self.data[(i * self.edge + j) * self.edge + k]
    }

    pub fn filled(&self) -> usize {
        self.data.iter().filter(|&&v| v == 255).count()
    }
}

/// Per-layer design masks of a build, row-major `(y, x)`.
pub fn design_slices(layout: &BedLayout) -> Vec<Vec<bool>> {
    (0..layout.layers).map(|l| layout.occupancy(l)).collect()
}

fn cube_start(center: f64, edge: usize) -> i64 {
    (center - (edge as f64 - 1.0) / 2.0).round() as i64
}

/// Part-centred cube of edge `roi_edge` cut from the design slices.
/// Cells outside the bed read as powder.
pub fn voxelize_geometry(
    slices: &[Vec<bool>],
    bed_w: usize,
    bed_h: usize,
    placement: &PartPlacement,
    roi_edge: usize,
) -> GeometryVoxel {
    let (cx, cy, cz) = placement.center();
    let (sx, sy, sz) = (cube_start(cx, roi_edge), cube_start(cy, roi_edge), cube_start(cz, roi_edge));
    let e = roi_edge;
    let sample = |x: i64, y: i64, z: i64| -> u8 {
        let inside = x >= 0 && y >= 0 && z >= 0 && (x as usize) < bed_w && (y as usize) < bed_h && (z as usize) < slices.len();
        if inside && slices[z as usize][y as usize * bed_w + x as usize] {
            255
        } else {
            0
        }
    };
    let mut data = Vec::with_capacity(e * e * e);
    for i in 0..e as i64 {
        for j in 0..e as i64 {
            for k in 0..e as i64 {
                // i runs along the part's width, j along its length.
                let (x, y) = match placement.orientation {
                    Orientation::Horizontal => (sx + j, sy + i),
                    Orientation::Vertical => (sx + i, sy + j),
                };
                data.push(sample(x, y, sz + k));
            }
        }
    }
    GeometryVoxel {
        part_id: placement.id,
        edge: e,
        data,
    }
}
