//! Tape-based reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the tape order is already a
//! topological order and `backward` is a single reverse sweep.

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv3d {
        x: Var,
        k: Var,
        b: Option<Var>,
        geom: ConvGeom,
        batch: usize,
    },
    Relu(Var),
    Tanh(Var),
    Reshape(Var),
    Concat {
        a: Var,
        b: Var,
        rows: usize,
        wa: usize,
        wb: usize,
    },
    Add(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mse(Var, Var),
    Kld {
        mu: Var,
        logvar: Var,
    },
    Reparam {
        mu: Var,
        logvar: Var,
        eps: Vec<f64>,
    },
    Upsample {
        x: Var,
        lead: usize,
        input: [usize; 3],
        output: [usize; 3],
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A recorded computation: values for every node plus, after
/// [`Graph::backward`], gradients for nodes that require them.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Gradient of the last backward pass, if the node received one.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// `y[i, j] = Σ_k x[i, k] · w[k, j] + b[j]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::shape(
                "dense",
                format!("input {xs:?} is incompatible with weight {ws:?}"),
            ));
        }
        let (n, k, m) = (xs[0], xs[1], ws[1]);
        let mut y = vec![0.0; n * m];
        if let Some(b) = b {
            let bs = self.shape(b);
            if bs != [m] {
                return Err(Error::shape(
                    "dense",
                    format!("bias {bs:?} does not match output width {m}"),
                ));
            }
            let bv = self.value(b).data();
            for row in y.chunks_mut(m) {
                row.copy_from_slice(bv);
            }
        }
        kernels::gemm(
            n,
            k,
            m,
            self.value(x).data(),
            false,
            self.value(w).data(),
            false,
            if b.is_some() { 1.0 } else { 0.0 },
            &mut y,
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor::new([n, m], y)?, Op::Dense { x, w, b }, rg))
    }

    /// 3-D cross-correlation.
    ///
    /// `x` is `[C_in, D, H, W]` or batched `[N, C_in, D, H, W]`; `k` is
    /// `[C_out, C_in, kd, kh, kw]`; the optional bias is `[C_out]`.
    pub fn conv3d(
        &mut self,
        x: Var,
        k: Var,
        b: Option<Var>,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(k).to_vec();
        let (batch, spatial) = match xs.len() {
            4 => (None, &xs[..]),
            5 => (Some(xs[0]), &xs[1..]),
            _ => {
                return Err(Error::shape(
                    "conv3d",
                    format!("input must be rank 4 or 5, got {xs:?}"),
                ))
            }
        };
        if ks.len() != 5 || ks[1] != spatial[0] {
            return Err(Error::shape(
                "conv3d",
                format!("kernel {ks:?} does not match input {xs:?}"),
            ));
        }
        if stride.contains(&0) {
            return Err(Error::InvalidArgument("conv3d stride must be >= 1".into()));
        }
        let input = [spatial[1], spatial[2], spatial[3]];
        let kernel = [ks[2], ks[3], ks[4]];
        let mut output = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * pad[a];
            if kernel[a] > padded {
                return Err(Error::shape(
                    "conv3d",
                    format!(
                        "kernel {kernel:?} larger than padded input {:?}",
                        [
                            input[0] + 2 * pad[0],
                            input[1] + 2 * pad[1],
                            input[2] + 2 * pad[2]
                        ]
                    ),
                ));
            }
            output[a] = (padded - kernel[a]) / stride[a] + 1;
        }
        let geom = ConvGeom {
            c_in: ks[1],
            c_out: ks[0],
            input,
            kernel,
            stride,
            pad,
            output,
        };
        if let Some(b) = b {
            if self.shape(b) != [geom.c_out] {
                return Err(Error::shape(
                    "conv3d",
                    format!("bias {:?} does not match {} channels", self.shape(b), geom.c_out),
                ));
            }
        }
        let n = batch.unwrap_or(1);
        let (p, q) = (geom.out_positions(), geom.patch());
        let in_len = geom.c_in * geom.in_positions();
        let out_len = geom.c_out * p;
        let mut y = vec![0.0; n * out_len];
        let mut cols = vec![0.0; q * p];
        let xv = self.value(x).data();
        let kv = self.value(k).data();
        let bv = b.map(|b| self.value(b).data());
        for s in 0..n {
            kernels::im2col(&geom, &xv[s * in_len..(s + 1) * in_len], &mut cols);
            let ys = &mut y[s * out_len..(s + 1) * out_len];
            kernels::gemm(geom.c_out, q, p, kv, false, &cols, false, 0.0, ys);
            if let Some(bv) = bv {
                for (co, row) in ys.chunks_mut(p).enumerate() {
                    row.iter_mut().for_each(|v| *v += bv[co]);
                }
            }
        }
        let shape = match batch {
            Some(n) => vec![n, geom.c_out, output[0], output[1], output[2]],
            None => vec![geom.c_out, output[0], output[1], output[2]],
        };
        let rg = self.rg(x) || self.rg(k) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            Tensor::new(shape, y)?,
            Op::Conv3d {
                x,
                k,
                b,
                geom,
                batch: n,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.max(0.0)).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Relu(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.tanh()).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Tanh(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Flatten to one dimension, row-major.
    pub fn flatten(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        self.reshape(x, &[n]).expect("element count preserved")
    }

    /// Flatten everything but the leading (batch) axis.
    pub fn flatten_batch(&mut self, x: Var) -> Var {
        let s = self.shape(x);
        let n = s[0];
        let rest = s[1..].iter().product::<usize>().max(1);
        self.reshape(x, &[n, rest]).expect("element count preserved")
    }

    /// Concatenate along the last axis; `a` comes first in the output.
    ///
    /// Both operands must be rank 1, or rank 2 with equal row counts.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let (rows, wa, wb) = match (sa.as_slice(), sb.as_slice()) {
            ([wa], [wb]) => (1, *wa, *wb),
            ([ra, wa], [rb, wb]) if ra == rb => (*ra, *wa, *wb),
            _ => {
                return Err(Error::shape(
                    "concat",
                    format!("cannot concatenate {sa:?} with {sb:?}"),
                ))
            }
        };
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(rows * (wa + wb));
        for r in 0..rows {
            out.extend_from_slice(&av[r * wa..(r + 1) * wa]);
            out.extend_from_slice(&bv[r * wb..(r + 1) * wb]);
        }
        let shape = if sa.len() == 1 {
            vec![wa + wb]
        } else {
            vec![rows, wa + wb]
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat { a, b, rows, wa, wb },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|a| a * factor).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Scale(x, factor), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::shape(
                "mse",
                format!("{:?} vs {:?}", self.shape(pred), self.shape(target)),
            ));
        }
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let s: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let v = s / p.len() as f64;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(v), Op::Mse(pred, target), rg))
    }

    /// `0.5 · Σ (μ² + exp(logvar) − logvar − 1)` summed over every element,
    /// i.e. KL(N(μ, σ²) ‖ N(0, I)) for all rows together.
    pub fn kld(&mut self, mu: Var, logvar: Var) -> Result<Var> {
        if self.shape(mu) != self.shape(logvar) {
            return Err(Error::shape(
                "kld",
                format!("{:?} vs {:?}", self.shape(mu), self.shape(logvar)),
            ));
        }
        let m = self.value(mu).data();
        let l = self.value(logvar).data();
        let s: f64 = m
            .iter()
            .zip(l)
            .map(|(&m, &l)| m * m + l.exp() - l - 1.0)
            .sum();
        let rg = self.rg(mu) || self.rg(logvar);
        Ok(self.push(Tensor::scalar(0.5 * s), Op::Kld { mu, logvar }, rg))
    }

    /// `z = μ + exp(0.5 · logvar) ⊙ eps`; `eps` is recorded, never differentiated.
    pub fn reparameterize(&mut self, mu: Var, logvar: Var, eps: &Tensor) -> Result<Var> {
        if self.shape(mu) != self.shape(logvar) || self.shape(mu) != eps.shape() {
            return Err(Error::shape(
                "reparameterize",
                format!(
                    "mu {:?}, logvar {:?}, eps {:?}",
                    self.shape(mu),
                    self.shape(logvar),
                    eps.shape()
                ),
            ));
        }
        let m = self.value(mu).data();
        let l = self.value(logvar).data();
        let z = m
            .iter()
            .zip(l)
            .zip(eps.data())
            .map(|((&m, &l), &e)| m + (0.5 * l).exp() * e)
            .collect();
        let t = Tensor::new(self.shape(mu).to_vec(), z)?;
        let rg = self.rg(mu) || self.rg(logvar);
        Ok(self.push(
            t,
            Op::Reparam {
                mu,
                logvar,
                eps: eps.data().to_vec(),
            },
            rg,
        ))
    }

    /// Nearest-neighbour resize of the three trailing axes to `output`.
    pub fn upsample_nearest(&mut self, x: Var, output: [usize; 3]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 3 || output.contains(&0) {
            return Err(Error::shape(
                "upsample",
                format!("cannot resize {s:?} to {output:?}"),
            ));
        }
        let r = s.len() - 3;
        let input = [s[r], s[r + 1], s[r + 2]];
        let lead: usize = s[..r].iter().product();
        let (ni, no) = (
            input.iter().product::<usize>(),
            output.iter().product::<usize>(),
        );
        let xv = self.value(x).data();
        let mut y = vec![0.0; lead * no];
        for l in 0..lead {
            let src = &xv[l * ni..(l + 1) * ni];
            let dst = &mut y[l * no..(l + 1) * no];
            let mut o = 0;
            for a in 0..output[0] {
                let ia = kernels::nearest_src(a, input[0], output[0]);
                for b in 0..output[1] {
                    let ib = kernels::nearest_src(b, input[1], output[1]);
                    for c in 0..output[2] {
                        let ic = kernels::nearest_src(c, input[2], output[2]);
                        dst[o] = src[(ia * input[1] + ib) * input[2] + ic];
                        o += 1;
                    }
                }
            }
        }
        let mut shape = s[..r].to_vec();
        shape.extend_from_slice(&output);
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(shape, y)?,
            Op::Upsample {
                x,
                lead,
                input,
                output,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Afterwards every leaf created with `requires_grad` holds a gradient
    /// (zeros when it does not influence the loss).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        self.zero_grad();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.grads[i] = Some(g);
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && self.grads[i].is_none() {
                self.grads[i] = Some(vec![0.0; node.value.len()]);
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        // Zero-initialised gradient slot for `v`, or None if it needs none.
        let mut slot = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if nodes[v.0].requires_grad {
                let buf = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
                f(buf);
            }
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let xs = nodes[x.0].value.shape();
                let (n, k) = (xs[0], xs[1]);
                let m = nodes[w.0].value.shape()[1];
                slot(*x, &mut |dx| {
                    kernels::gemm(n, m, k, g, false, val(*w), true, 1.0, dx);
                });
                slot(*w, &mut |dw| {
                    kernels::gemm(k, n, m, val(*x), true, g, false, 1.0, dw);
                });
                if let Some(b) = b {
                    slot(*b, &mut |db| {
                        for row in g.chunks(m) {
                            db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                        }
                    });
                }
            }
            Op::Conv3d {
                x,
                k,
                b,
                geom,
                batch,
            } => {
                let (p, q) = (geom.out_positions(), geom.patch());
                let in_len = geom.c_in * geom.in_positions();
                let out_len = geom.c_out * p;
                let xv = val(*x);
                let kv = val(*k);
                let need_x = nodes[x.0].requires_grad;
                let need_k = nodes[k.0].requires_grad;
                let mut cols = vec![0.0; q * p];
                let mut dcols = vec![0.0; q * p];
                for s in 0..*batch {
                    let gs = &g[s * out_len..(s + 1) * out_len];
                    if need_k {
                        kernels::im2col(geom, &xv[s * in_len..(s + 1) * in_len], &mut cols);
                        slot(*k, &mut |dk| {
                            kernels::gemm(geom.c_out, p, q, gs, false, &cols, true, 1.0, dk);
                        });
                    }
                    if need_x {
                        kernels::gemm(q, geom.c_out, p, kv, true, gs, false, 0.0, &mut dcols);
                        slot(*x, &mut |dx| {
                            kernels::col2im(geom, &dcols, &mut dx[s * in_len..(s + 1) * in_len]);
                        });
                    }
                    if let Some(b) = b {
                        slot(*b, &mut |db| {
                            for (co, row) in gs.chunks(p).enumerate() {
                                db[co] += row.iter().sum::<f64>();
                            }
                        });
                    }
                }
            }
            Op::Relu(x) => {
                let xv = val(*x);
                slot(*x, &mut |dx| {
                    for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                        if xi > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Tanh(x) => {
                let yv = nodes[i].value.data();
                slot(*x, &mut |dx| {
                    for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(yv) {
                        *d += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::Reshape(x) => {
                slot(*x, &mut |dx| {
                    dx.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
                });
            }
            Op::Concat { a, b, rows, wa, wb } => {
                let w = wa + wb;
                slot(*a, &mut |da| {
                    for r in 0..*rows {
                        for j in 0..*wa {
                            da[r * wa + j] += g[r * w + j];
                        }
                    }
                });
                slot(*b, &mut |db| {
                    for r in 0..*rows {
                        for j in 0..*wb {
                            db[r * wb + j] += g[r * w + wa + j];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                slot(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, gi)| *d += gi));
                slot(*b, &mut |db| db.iter_mut().zip(g).for_each(|(d, gi)| *d += gi));
            }
            Op::Scale(x, f) => {
                slot(*x, &mut |dx| {
                    dx.iter_mut().zip(g).for_each(|(d, gi)| *d += gi * f);
                });
            }
            Op::Sum(x) => {
                slot(*x, &mut |dx| dx.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (val(*p), val(*t));
                let c = 2.0 * g[0] / pv.len() as f64;
                slot(*p, &mut |dp| {
                    for ((d, a), b) in dp.iter_mut().zip(pv).zip(tv) {
                        *d += c * (a - b);
                    }
                });
                slot(*t, &mut |dt| {
                    for ((d, a), b) in dt.iter_mut().zip(pv).zip(tv) {
                        *d -= c * (a - b);
                    }
                });
            }
            Op::Kld { mu, logvar } => {
                let (mv, lv) = (val(*mu), val(*logvar));
                slot(*mu, &mut |dm| {
                    for (d, m) in dm.iter_mut().zip(mv) {
                        *d += g[0] * m;
                    }
                });
                slot(*logvar, &mut |dl| {
                    for (d, l) in dl.iter_mut().zip(lv) {
                        *d += g[0] * 0.5 * (l.exp() - 1.0);
                    }
                });
            }
            Op::Reparam { mu, logvar, eps } => {
                let lv = val(*logvar);
                slot(*mu, &mut |dm| dm.iter_mut().zip(g).for_each(|(d, gi)| *d += gi));
                slot(*logvar, &mut |dl| {
                    for (((d, gi), l), e) in dl.iter_mut().zip(g).zip(lv).zip(eps) {
                        *d += gi * 0.5 * (0.5 * l).exp() * e;
                    }
                });
            }
            Op::Upsample {
                x,
                lead,
                input,
                output,
            } => {
                let ni = input.iter().product::<usize>();
                let no = output.iter().product::<usize>();
                slot(*x, &mut |dx| {
                    for l in 0..*lead {
                        let dst = &mut dx[l * ni..(l + 1) * ni];
                        let src = &g[l * no..(l + 1) * no];
                        let mut o = 0;
                        for a in 0..output[0] {
                            let ia = kernels::nearest_src(a, input[0], output[0]);
                            for b in 0..output[1] {
                                let ib = kernels::nearest_src(b, input[1], output[1]);
                                for c in 0..output[2] {
                                    let ic = kernels::nearest_src(c, input[2], output[2]);
                                    dst[(ia * input[1] + ib) * input[2] + ic] += src[o];
                                    o += 1;
                                }
                            }
                        }
                    }
                });
            }
        }
    }
}
