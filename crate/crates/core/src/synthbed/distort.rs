//! Forward radial lens model applied to synthetic frames.
//!
//! Coordinates are normalised about the frame centre by half the larger
//! frame dimension. The distorted image at `q` shows the scene point
//! `q · (1 + k1·r² + k2·r⁴)`, so distorting is a direct resample and
//! undistorting needs the inverse map.

use super::field::ThermalFrame;

#[derive(Clone, Copy, Debug)]
pub(crate) struct RadialFrame {
    pub cx: f64,
    pub cy: f64,
    pub scale: f64,
}

impl RadialFrame {
    pub fn of(width: usize, height: usize) -> Self {
        Self {
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            scale: width.max(height) as f64 / 2.0,
        }
    }

    #[inline]
    pub fn normalize(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.cx) / self.scale, (y - self.cy) / self.scale)
    }

    #[inline]
    pub fn to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        (self.cx + u * self.scale, self.cy + v * self.scale)
    }
}

#[inline]
pub(crate) fn radial_factor(r2: f64, k1: f64, k2: f64) -> f64 {
    1.0 + k1 * r2 + k2 * r2 * r2
}

/// Bilinear sample with edge replication.
pub fn sample_bilinear(frame: &ThermalFrame, x: f64, y: f64) -> f64 {
    let (w, h) = (frame.width, frame.height);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = frame.get(x0, y0) * (1.0 - fx) + frame.get(x1, y0) * fx;
    let bottom = frame.get(x0, y1) * (1.0 - fx) + frame.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Apply `r' = r·(1 + k1·r² + k2·r⁴)` about the frame centre.
pub fn distort(frame: &ThermalFrame, k1: f64, k2: f64) -> ThermalFrame {
    let geo = RadialFrame::of(frame.width, frame.height);
    let mut data = Vec::with_capacity(frame.data.len());
    for y in 0..frame.height {
        for x in 0..frame.width {
            let (u, v) = geo.normalize(x as f64, y as f64);
            let f = radial_factor(u * u + v * v, k1, k2);
            let (sx, sy) = geo.to_pixel(u * f, v * f);
            data.push(sample_bilinear(frame, sx, sy));
        }
    }
    ThermalFrame {
        data,
        ..frame.clone()
    }
}
