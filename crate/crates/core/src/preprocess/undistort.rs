use crate::synthbed::{radial_factor, sample_bilinear, RadialFrame, ThermalFrame};
use crate::{Error, Result};

pub const UNDISTORT_MAX_ITER: usize = 20;
pub const UNDISTORT_TOL: f64 = 1e-6;

/// Inverse of the radial lens model: the output at `p` reads the captured
/// frame at the `q` with `q·(1 + k1·|q|² + k2·|q|⁴) = p`, found by
/// fixed-point iteration in normalized coordinates.
pub fn undistort(frame: &ThermalFrame, k1: f64, k2: f64) -> Result<ThermalFrame> {
    let geo = RadialFrame::of(frame.width, frame.height);
    let mut data = Vec::with_capacity(frame.data.len());
    for y in 0..frame.height {
        for x in 0..frame.width {
            let (pu, pv) = geo.normalize(x as f64, y as f64);
            let (qu, qv) = invert_radial(pu, pv, k1, k2)?;
            let (sx, sy) = geo.to_pixel(qu, qv);
            data.push(sample_bilinear(frame, sx, sy));
        }
    }
    Ok(ThermalFrame {
        data,
        ..frame.clone()
    })
}

fn invert_radial(pu: f64, pv: f64, k1: f64, k2: f64) -> Result<(f64, f64)> {
    let (mut qu, mut qv) = (pu, pv);
    for _ in 0..UNDISTORT_MAX_ITER {
        let f = radial_factor(qu * qu + qv * qv, k1, k2);
        let (nu, nv) = (pu / f, pv / f);
        let step = ((nu - qu).powi(2) + (nv - qv).powi(2)).sqrt();
        qu = nu;
        qv = nv;
        if !step.is_finite() {
            break;
        }
        if step <= UNDISTORT_TOL {
            return Ok((qu, qv));
        }
    }
    Err(Error::UndistortDiverged {
        radius: (pu * pu + pv * pv).sqrt(),
    })
}

pub const DEAD_PIXEL_RANGE: (f64, f64) = (0.0, 400.0);

/// Replace readings outside [`DEAD_PIXEL_RANGE`] (or non-finite) with the
/// median of their valid 3×3 neighbours. A pixel with no valid neighbour
/// takes the median of the whole valid frame.
pub fn filter_dead_pixels(frame: &ThermalFrame) -> ThermalFrame {
    let ok = |v: f64| v.is_finite() && (DEAD_PIXEL_RANGE.0..=DEAD_PIXEL_RANGE.1).contains(&v);
    if frame.data.iter().all(|&v| ok(v)) {
        return frame.clone();
    }
    let (w, h) = (frame.width, frame.height);
    let mut out = frame.clone();
    let mut fallback = None;
    let mut window = Vec::with_capacity(9);
    for y in 0..h {
        for x in 0..w {
            if ok(frame.get(x, y)) {
                continue;
            }
            window.clear();
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in x.saturating_sub(1)..(x + 2).min(w) {
                    let v = frame.get(nx, ny);
                    if ok(v) {
                        window.push(v);
                    }
                }
            }
            out.data[y * w + x] = if window.is_empty() {
                *fallback.get_or_insert_with(|| {
                    let mut all: Vec<f64> = frame.data.iter().copied().filter(|&v| ok(v)).collect();
                    if all.is_empty() {
                        0.0
                    } else {
                        median(&mut all)
                    }
                })
            } else {
                median(&mut window)
            };
        }
    }
    out
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
