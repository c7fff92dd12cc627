use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;
use crate::{Error, Result};

/// Nominal TRS-bar proxy size in voxel units at horizontal orientation.
pub const PART_LENGTH: usize = 35;
pub const PART_WIDTH: usize = 18;
pub const PART_HEIGHT: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Long axis along bed x.
    Horizontal,
    /// Long axis along bed y.
    Vertical,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Horizontal => "horizontal",
            Orientation::Vertical => "vertical",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "horizontal" => Some(Orientation::Horizontal),
            "vertical" => Some(Orientation::Vertical),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartPlacement {
    pub id: u32,
    /// Lowest bed x pixel covered by the footprint.
    pub x: usize,
    /// Lowest bed y pixel covered by the footprint.
    pub y: usize,
    /// First layer of the part.
    pub z: usize,
    pub orientation: Orientation,
}

impl PartPlacement {
    /// `(x extent, y extent)` in bed pixels.
    pub fn footprint(&self) -> (usize, usize) {
        match self.orientation {
            Orientation::Horizontal => (PART_LENGTH, PART_WIDTH),
            Orientation::Vertical => (PART_WIDTH, PART_LENGTH),
        }
    }

    /// Half-open `(x0, x1, y0, y1, z0, z1)`.
    pub fn bounds(&self) -> (usize, usize, usize, usize, usize, usize) {
        let (w, h) = self.footprint();
        (
            self.x,
            self.x + w,
            self.y,
            self.y + h,
            self.z,
            self.z + PART_HEIGHT,
        )
    }

    /// Geometric centre in continuous pixel coordinates.
    pub fn center(&self) -> (f64, f64, f64) {
        let (x0, x1, y0, y1, z0, z1) = self.bounds();
        (
            (x0 + x1 - 1) as f64 / 2.0,
            (y0 + y1 - 1) as f64 / 2.0,
            (z0 + z1 - 1) as f64 / 2.0,
        )
    }

    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        let (x0, x1, y0, y1, z0, z1) = self.bounds();
        (x0..x1).contains(&x) && (y0..y1).contains(&y) && (z0..z1).contains(&z)
    }

    fn overlaps(&self, other: &PartPlacement, gap: usize) -> bool {
        let (ax0, ax1, ay0, ay1, az0, az1) = self.bounds();
        let (bx0, bx1, by0, by1, bz0, bz1) = other.bounds();
        ax0 < bx1 + gap && bx0 < ax1 + gap && ay0 < by1 + gap && by0 < ay1 + gap && az0 < bz1 && bz0 < az1
    }
}

/// Print bed geometry plus every part placed in it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BedLayout {
    pub bed_w: usize,
    pub bed_h: usize,
    pub layers: usize,
    #[serde(default)]
    pub parts: Vec<PartPlacement>,
}

impl Default for BedLayout {
    fn default() -> Self {
        Self {
            bed_w: 160,
            bed_h: 120,
            layers: 64,
            parts: Vec::new(),
        }
    }
}

impl BedLayout {
    pub fn validate(&self) -> Result<()> {
        if self.bed_w == 0 || self.bed_h == 0 || self.layers == 0 {
            return Err(Error::InvalidArgument(format!(
                "bed dimensions must be positive, got {} x {} x {}",
                self.bed_w, self.bed_h, self.layers
            )));
        }
        for p in &self.parts {
            let (x0, x1, y0, y1, z0, z1) = p.bounds();
            if x1 > self.bed_w || y1 > self.bed_h || z1 > self.layers {
                return Err(Error::OutOfBed {
                    part: p.id.to_string(),
                    x0: x0 as i64,
                    x1: x1 as i64,
                    y0: y0 as i64,
                    y1: y1 as i64,
                    z0: z0 as i64,
                    z1: z1 as i64,
                    bed_w: self.bed_w,
                    bed_h: self.bed_h,
                    layers: self.layers,
                });
            }
        }
        for (i, a) in self.parts.iter().enumerate() {
            for b in &self.parts[i + 1..] {
                if a.id == b.id {
                    return Err(Error::InvalidArgument(format!("duplicate part id {}", a.id)));
                }
                if a.overlaps(b, 0) {
                    return Err(Error::Overlap(a.id.to_string(), b.id.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Row-major (`y`, `x`) part mask of one layer.
    pub fn occupancy(&self, layer: usize) -> Vec<bool> {
        let mut mask = vec![false; self.bed_w * self.bed_h];
        for p in &self.parts {
            let (x0, x1, y0, y1, z0, z1) = p.bounds();
            if !(z0..z1).contains(&layer) {
                continue;
            }
            for y in y0..y1.min(self.bed_h) {
                for x in x0..x1.min(self.bed_w) {
                    mask[y * self.bed_w + x] = true;
                }
            }
        }
        mask
    }

    /// Number of other parts sharing any layer with `part`.
    pub fn layer_neighbors(&self, part: &PartPlacement) -> usize {
        self.parts
            .iter()
            .filter(|o| o.id != part.id && o.z < part.z + PART_HEIGHT && part.z < o.z + PART_HEIGHT)
            .count()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let layout: BedLayout = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("layout serializes")
    }

    /// Random non-overlapping layout: parts stacked in slabs of
    /// `PART_HEIGHT` layers separated by one empty layer, with
    /// `per_slab.0..=per_slab.1` placement attempts per slab.
    pub fn random(
        bed_w: usize,
        bed_h: usize,
        layers: usize,
        per_slab: (usize, usize),
        rng: &mut StreamRng,
    ) -> Self {
        let mut parts: Vec<PartPlacement> = Vec::new();
        let mut next_id = 0u32;
        let margin = 2;
        let mut z = 0;
        while z + PART_HEIGHT <= layers {
            let want = rng.random_range(per_slab.0..=per_slab.1);
            let mut placed = 0;
            let mut tries = 0;
            while placed < want && tries < 400 {
                tries += 1;
                let orientation = if rng.random_bool(0.5) {
                    Orientation::Horizontal
                } else {
                    Orientation::Vertical
                };
                let probe = PartPlacement {
                    id: next_id,
                    x: 0,
                    y: 0,
                    z,
                    orientation,
                };
                let (w, h) = probe.footprint();
                if w + 2 * margin > bed_w || h + 2 * margin > bed_h {
                    break;
                }
                let cand = PartPlacement {
                    x: rng.random_range(margin..=bed_w - w - margin),
                    y: rng.random_range(margin..=bed_h - h - margin),
                    ..probe
                };
                if parts.iter().all(|p| !cand.overlaps(p, 2)) {
                    parts.push(cand);
                    next_id += 1;
                    placed += 1;
                }
            }
            z += PART_HEIGHT + 1;
        }
        Self {
            bed_w,
            bed_h,
            layers,
            parts,
        }
    }
}
