//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use thermonet::autodiff::{check_gradients, Graph, Tensor, Var, FD_STEP};

pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(r: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| r.random_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Entries pushed at least `margin` away from zero, so ReLU kinks stay out
/// of reach of the finite-difference step.
pub fn away_from_zero(r: &mut ChaCha8Rng, shape: &[usize], margin: f64) -> Tensor {
    let mut t = random_tensor(r, shape, 1.0);
    for v in t.data_mut() {
        *v = v.signum() * (v.abs() + margin);
    }
    t
}

/// Nested-loop 3D convolution over `[C, D, H, W]` with zero padding.
pub fn conv3d_oracle(
    x: &[f64],
    xs: [usize; 4],
    k: &[f64],
    ks: [usize; 5],
    bias: Option<&[f64]>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> (Vec<f64>, [usize; 4]) {
    let [c, d, h, w] = xs;
    let [co, ci, kd, kh, kw] = ks;
    assert_eq!(c, ci);
    let out = |n: usize, k: usize, s: usize, p: usize| (n + 2 * p - k) / s + 1;
    let (od, oh, ow) = (out(d, kd, stride[0], pad[0]), out(h, kh, stride[1], pad[1]), out(w, kw, stride[2], pad[2]));
    let mut y = vec![0.0; co * od * oh * ow];
    for o in 0..co {
        for z in 0..od {
            for yy in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b[o]);
                    for i in 0..ci {
                        for a in 0..kd {
                            for b in 0..kh {
                                for e in 0..kw {
                                    let iz = (z * stride[0] + a) as isize - pad[0] as isize;
                                    let iy = (yy * stride[1] + b) as isize - pad[1] as isize;
                                    let ix = (xx * stride[2] + e) as isize - pad[2] as isize;
                                    if iz < 0 || iy < 0 || ix < 0 || iz >= d as isize || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = ((i * d + iz as usize) * h + iy as usize) * w + ix as usize;
                                    let ki = (((o * ci + i) * kd + a) * kh + b) * kw + e;
                                    acc += x[xi] * k[ki];
                                }
                            }
                        }
                    }
                    y[((o * od + z) * oh + yy) * ow + xx] = acc;
                }
            }
        }
    }
    (y, [co, od, oh, ow])
}

/// A random small convolution case: input, kernel, bias, stride, pad.
pub struct ConvCase {
    pub x: Tensor,
    pub k: Tensor,
    pub b: Option<Tensor>,
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

pub fn random_conv_case(r: &mut ChaCha8Rng) -> ConvCase {
    let ci = r.random_range(1..=3);
    let co = r.random_range(1..=3);
    let mut ext = [0; 3];
    let mut ker = [0; 3];
    let mut stride = [0; 3];
    let mut pad = [0; 3];
    for a in 0..3 {
        ext[a] = r.random_range(2..=6);
        ker[a] = r.random_range(1..=3.min(ext[a]));
        stride[a] = r.random_range(1..=2);
        pad[a] = r.random_range(0..=1);
    }
    ConvCase {
        x: random_tensor(r, &[ci, ext[0], ext[1], ext[2]], 1.0),
        k: random_tensor(r, &[co, ci, ker[0], ker[1], ker[2]], 1.0),
        b: r.random_bool(0.5).then(|| random_tensor(r, &[co], 1.0)),
        stride,
        pad,
    }
}

/// Largest absolute deviation of the engine's conv3d from the oracle.
pub fn conv_case_error(case: &ConvCase) -> f64 {
    let mut g = Graph::new();
    let x = g.constant(case.x.clone());
    let k = g.constant(case.k.clone());
    let b = case.b.clone().map(|t| g.constant(t));
    let y = g.conv3d(x, k, b, case.stride, case.pad).unwrap();
    let xs: [usize; 4] = case.x.shape().try_into().unwrap();
    let ks: [usize; 5] = case.k.shape().try_into().unwrap();
    let (want, shape) = conv3d_oracle(
        case.x.data(),
        xs,
        case.k.data(),
        ks,
        case.b.as_ref().map(|t| t.data()),
        case.stride,
        case.pad,
    );
    assert_eq!(g.shape(y), &shape[..]);
    g.value(y).data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Closed-form KL(N(μ, σ²) ‖ N(0, 1)) summed over dimensions.
pub fn kld_closed(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter().zip(logvar).map(|(m, l)| 0.5 * (m * m + l.exp() - l - 1.0)).sum()
}

/// Monte-Carlo KL estimate E_q[log q(z) − log p(z)] from `n` draws.
pub fn kld_monte_carlo(mu: &[f64], logvar: &[f64], n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut acc = 0.0;
    for _ in 0..n {
        for (m, l) in mu.iter().zip(logvar) {
            let e: f64 = r.sample(StandardNormal);
            let z = m + (0.5 * l).exp() * e;
            // log q − log p; the 2π terms cancel.
            acc += -0.5 * l - 0.5 * e * e + 0.5 * z * z;
        }
    }
    acc / n as f64
}

/// The engine's KL for one (μ, logvar) row.
pub fn kld_engine(mu: &[f64], logvar: &[f64]) -> f64 {
    let mut g = Graph::new();
    let m = g.constant(Tensor::new(vec![1, mu.len()], mu.to_vec()).unwrap());
    let l = g.constant(Tensor::new(vec![1, logvar.len()], logvar.to_vec()).unwrap());
    let k = g.kld(m, l).unwrap();
    g.item(k)
}

/// Gradient check of `f` at `inputs` with the default step and floor.
pub fn grad_err<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> thermonet::Result<Var>,
{
    let rep = check_gradients(inputs, FD_STEP, GRAD_FLOOR, f).unwrap();
    assert!(rep.compared > 0, "no gradient entries compared");
    rep.max_rel_err
}

/// Sum of `x ⊙ w` for a fixed random `w`, turning any node into a scalar
/// whose gradient exercises every output entry.
pub fn weighted_sum(g: &mut Graph, x: Var, seed: u64) -> thermonet::Result<Var> {
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let mut r = rng(seed);
    let w = Tensor::new(vec![n, 1], (0..n).map(|_| r.random_range(-1.0..1.0)).collect())?;
    let w = g.constant(w);
    let flat = g.reshape(x, &[1, n])?;
    let y = g.dense(flat, w, None)?;
    Ok(g.sum(y))
}

/// Finite-difference checks of every differentiable operation; returns
/// `(name, max relative error)` per operation.
pub fn per_op_gradient_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();

    let x = random_tensor(&mut r, &[3, 4], 1.0);
    let w = random_tensor(&mut r, &[4, 5], 1.0);
    let b = random_tensor(&mut r, &[5], 1.0);
    out.push(("dense", grad_err(&[x, w, b], |g, v| {
        let y = g.dense(v[0], v[1], Some(v[2]))?;
        weighted_sum(g, y, 1)
    })));

    let case = random_conv_case(&mut r);
    let mut inputs = vec![case.x.clone(), case.k.clone()];
    inputs.extend(case.b.clone());
    let (stride, pad) = (case.stride, case.pad);
    out.push(("conv3d", grad_err(&inputs, |g, v| {
        let y = g.conv3d(v[0], v[1], v.get(2).copied(), stride, pad)?;
        weighted_sum(g, y, 2)
    })));

    let xb = random_tensor(&mut r, &[2, 2, 4, 4, 3], 1.0);
    let kb = random_tensor(&mut r, &[3, 2, 3, 3, 2], 1.0);
    out.push(("conv3d batched", grad_err(&[xb, kb], |g, v| {
        let y = g.conv3d(v[0], v[1], None, [2, 2, 1], [1, 1, 0])?;
        weighted_sum(g, y, 3)
    })));

    let x = away_from_zero(&mut r, &[4, 3], 0.05);
    out.push(("relu", grad_err(&[x], |g, v| {
        let y = g.relu(v[0]);
        weighted_sum(g, y, 4)
    })));

    let x = random_tensor(&mut r, &[4, 3], 2.0);
    out.push(("tanh", grad_err(&[x], |g, v| {
        let y = g.tanh(v[0]);
        weighted_sum(g, y, 5)
    })));

    let x = random_tensor(&mut r, &[2, 3, 4], 1.0);
    out.push(("reshape+flatten", grad_err(&[x], |g, v| {
        let y = g.reshape(v[0], &[6, 4])?;
        let y = g.tanh(y);
        let y = g.flatten(y);
        weighted_sum(g, y, 6)
    })));

    let x = random_tensor(&mut r, &[2, 3, 2, 2], 1.0);
    out.push(("flatten_batch", grad_err(&[x], |g, v| {
        let y = g.flatten_batch(v[0]);
        let y = g.tanh(y);
        weighted_sum(g, y, 7)
    })));

    let a = random_tensor(&mut r, &[3, 2], 1.0);
    let b = random_tensor(&mut r, &[3, 4], 1.0);
    out.push(("concat", grad_err(&[a, b], |g, v| {
        let y = g.concat(v[0], v[1])?;
        let y = g.tanh(y);
        weighted_sum(g, y, 8)
    })));

    let a = random_tensor(&mut r, &[3, 4], 1.0);
    let b = random_tensor(&mut r, &[3, 4], 1.0);
    out.push(("add", grad_err(&[a, b], |g, v| {
        let y = g.add(v[0], v[1])?;
        let y = g.tanh(y);
        weighted_sum(g, y, 9)
    })));

    let x = random_tensor(&mut r, &[5], 1.0);
    out.push(("scale+sum", grad_err(&[x], |g, v| {
        let y = g.tanh(v[0]);
        let y = g.scale(y, -1.7);
        Ok(g.sum(y))
    })));

    let p = random_tensor(&mut r, &[3, 4], 1.0);
    let t = random_tensor(&mut r, &[3, 4], 1.0);
    out.push(("mse", grad_err(&[p, t], |g, v| g.mse(v[0], v[1]))));

    let m = random_tensor(&mut r, &[2, 3], 1.5);
    let l = random_tensor(&mut r, &[2, 3], 1.5);
    out.push(("kld", grad_err(&[m, l], |g, v| g.kld(v[0], v[1]))));

    let m = random_tensor(&mut r, &[2, 3], 1.5);
    let l = random_tensor(&mut r, &[2, 3], 1.5);
    let eps = random_tensor(&mut r, &[2, 3], 2.0);
    out.push(("reparameterize", grad_err(&[m, l], |g, v| {
        let z = g.reparameterize(v[0], v[1], &eps)?;
        weighted_sum(g, z, 10)
    })));

    let x = random_tensor(&mut r, &[2, 2, 3, 2], 1.0);
    out.push(("upsample_nearest", grad_err(&[x], |g, v| {
        let y = g.upsample_nearest(v[0], [5, 4, 3])?;
        weighted_sum(g, y, 11)
    })));

    out
}

/// A random small network drawn from `seed`: conv encoder, variational
/// bottleneck, dense head and mirrored decoder, trained on a fixed target.
pub fn composite_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let c1 = r.random_range(1..=3);
    let d = r.random_range(2..=4);
    let hidden = r.random_range(3..=6);
    let ext = [r.random_range(4..=6), r.random_range(4..=6), r.random_range(2..=3)];
    let x = random_tensor(&mut r, &[2, 1, ext[0], ext[1], ext[2]], 1.0);
    let k1 = random_tensor(&mut r, &[c1, 1, 3, 3, 2], 0.6);
    let b1 = random_tensor(&mut r, &[c1], 0.2);
    let mut g0 = Graph::new();
    let xv = g0.constant(x.clone());
    let kv = g0.constant(k1.clone());
    let conv = g0.conv3d(xv, kv, None, [2, 2, 1], [1, 1, 0]).unwrap();
    let conv_shape = g0.shape(conv).to_vec();
    let flat: usize = conv_shape[1..].iter().product();
    let wm = random_tensor(&mut r, &[flat, d], 0.5);
    let wl = random_tensor(&mut r, &[flat, d], 0.3);
    let wh = random_tensor(&mut r, &[d, hidden], 0.6);
    let wd = random_tensor(&mut r, &[hidden, flat], 0.4);
    let eps = random_tensor(&mut r, &[2, d], 1.5);
    let tgt = random_tensor(&mut r, &[2, 1, ext[0], ext[1], ext[2]], 1.0);
    let kd = random_tensor(&mut r, &[1, c1, 3, 3, 1], 0.5);
    let (w1, w2) = (r.random_range(0.5..2.0), r.random_range(0.01..0.5));
    let out = [ext[0], ext[1], ext[2]];
    let inner = conv_shape[1..].to_vec();
    let inputs = vec![k1, b1, wm, wl, wh, wd, kd];
    grad_err(&inputs, |g, v| {
        let xv = g.constant(x.clone());
        let h = g.conv3d(xv, v[0], Some(v[1]), [2, 2, 1], [1, 1, 0])?;
        let h = g.tanh(h);
        let f = g.flatten_batch(h);
        let mu = g.dense(f, v[2], None)?;
        let lv = g.dense(f, v[3], None)?;
        let z = g.reparameterize(mu, lv, &eps)?;
        let a = g.dense(z, v[4], None)?;
        let a = g.tanh(a);
        let dflat = g.dense(a, v[5], None)?;
        let mut shape = vec![2];
        shape.extend(&inner);
        let dv = g.reshape(dflat, &shape)?;
        let up = g.upsample_nearest(dv, out)?;
        let rec = g.conv3d(up, v[6], None, [1, 1, 1], [1, 1, 0])?;
        let t = g.constant(tgt.clone());
        let m = g.mse(rec, t)?;
        let m = g.scale(m, w1);
        let k = g.kld(mu, lv)?;
        let k = g.scale(k, w2);
        g.add(m, k)
    })
}
