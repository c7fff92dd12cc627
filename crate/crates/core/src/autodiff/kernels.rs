//! Raw numeric kernels behind the graph operations.
//!
//! Matrix products go through `matrixmultiply`, which is single-threaded and
//! uses a fixed blocking order, so results are bit-reproducible run to run.

/// `c = a · b + beta · c` where `a` is `m × k` and `b` is `k × n`.
///
/// `a_t`/`b_t` mark operands stored transposed, i.e. `a` laid out as `k × m`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_t { (1, k) } else { (n, 1) };
    // SAFETY: the slices are sized for the stated dimensions and strides
    // (checked above), and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a single-sample 3-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    pub fn out_positions(&self) -> usize {
        self.output.iter().product()
    }

    pub fn in_positions(&self) -> usize {
        self.input.iter().product()
    }

    pub fn patch(&self) -> usize {
        self.c_in * self.kernel.iter().product::<usize>()
    }
}

/// Valid output range `[lo, hi)` along an axis for kernel offset `k`:
/// the positions whose input index `o·stride + k − pad` lies in `[0, n)`.
#[inline]
fn valid_range(n: usize, out: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if n + pad > k {
        ((n + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Unfold `x` (`c_in × D × H × W`) into a `patch × out_positions` matrix.
pub(crate) fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let [d, h, w] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let [sd, sh, sw] = g.stride;
    let p = g.out_positions();
    let mut row = 0;
    for ci in 0..g.c_in {
        let xc = &x[ci * d * h * w..(ci + 1) * d * h * w];
        for a in 0..kd {
            let (dlo, dhi) = valid_range(d, od, a, sd, g.pad[0]);
            for b in 0..kh {
                let (hlo, hhi) = valid_range(h, oh, b, sh, g.pad[1]);
                for c in 0..kw {
                    let (wlo, whi) = valid_range(w, ow, c, sw, g.pad[2]);
                    let out = &mut cols[row * p..(row + 1) * p];
                    out.fill(0.0);
                    for zd in dlo..dhi {
                        let id = zd * sd + a - g.pad[0];
                        for zh in hlo..hhi {
                            let ih = zh * sh + b - g.pad[1];
                            let src = &xc[(id * h + ih) * w..(id * h + ih + 1) * w];
                            let dst = &mut out[(zd * oh + zh) * ow..(zd * oh + zh + 1) * ow];
                            if sw == 1 {
                                let s0 = wlo + c - g.pad[2];
                                dst[wlo..whi].copy_from_slice(&src[s0..s0 + (whi - wlo)]);
                            } else {
                                for zw in wlo..whi {
                                    dst[zw] = src[zw * sw + c - g.pad[2]];
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `cols` back into `dx`.
pub(crate) fn col2im(g: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let [d, h, w] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let [sd, sh, sw] = g.stride;
    let p = g.out_positions();
    let mut row = 0;
    for ci in 0..g.c_in {
        let xc = &mut dx[ci * d * h * w..(ci + 1) * d * h * w];
        for a in 0..kd {
            let (dlo, dhi) = valid_range(d, od, a, sd, g.pad[0]);
            for b in 0..kh {
                let (hlo, hhi) = valid_range(h, oh, b, sh, g.pad[1]);
                for c in 0..kw {
                    let (wlo, whi) = valid_range(w, ow, c, sw, g.pad[2]);
                    let src = &cols[row * p..(row + 1) * p];
                    for zd in dlo..dhi {
                        let id = zd * sd + a - g.pad[0];
                        for zh in hlo..hhi {
                            let ih = zh * sh + b - g.pad[1];
                            let dst = &mut xc[(id * h + ih) * w..(id * h + ih + 1) * w];
                            let s = &src[(zd * oh + zh) * ow..(zd * oh + zh + 1) * ow];
                            if sw == 1 {
                                let d0 = wlo + c - g.pad[2];
                                for (o, v) in dst[d0..d0 + (whi - wlo)].iter_mut().zip(&s[wlo..whi]) {
                                    *o += v;
                                }
                            } else {
                                for zw in wlo..whi {
                                    dst[zw * sw + c - g.pad[2]] += s[zw];
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Nearest-neighbour source index when resizing an axis from `n_in` to `n_out`.
#[inline]
pub(crate) fn nearest_src(o: usize, n_in: usize, n_out: usize) -> usize {
    (o * n_in) / n_out
}
