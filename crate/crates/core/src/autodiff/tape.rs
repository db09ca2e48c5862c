//! Reverse-mode differentiation over a linear tape.
//!
//! Every op appends one node holding its output value and whatever it needs
//! for the backward rule. Nodes only reference earlier nodes, so a single
//! reverse sweep visits them in a valid topological order.

use super::kernels::{self, ConvGeom};
use crate::error::{Error, Result};
use crate::regularization::plane_extrema;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnRunning {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnRunning {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Normalize by batch statistics; optionally fold them into the running
    /// estimates.
    Train { track_running: bool },
    /// Normalize by the running estimates.
    Eval,
}

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        geom: ConvGeom,
    },
    ChannelBias {
        x: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Tanh {
        x: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    /// Elementwise product with a constant tensor.
    Multiply {
        x: Var,
        factor: Vec<f64>,
    },
    /// Per-plane min-max normalization followed by an elementwise constant
    /// factor.
    NormalizeMultiply {
        x: Var,
        plane: usize,
        factor: Vec<f64>,
        normalized: Vec<f64>,
        extrema: Vec<Option<(usize, usize, f64)>>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    WeightedSum {
        x: Var,
        weights: Vec<f64>,
    },
    Reshape {
        x: Var,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of executed operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a backward sweep: one optional gradient per tape entry.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::for_conv(self.value(x).dims4()?, self.value(w).dims4()?, stride, pad)?;
        let (out, cols) =
            kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), &geom);
        let value = Tensor::new(vec![geom.n, geom.c_out, geom.oh, geom.ow], out)?;
        let rg = self.any_grad(&[x, w]);
        // Unfolded input is only needed for the kernel gradient.
        let cols = if self.requires_grad(w) { cols } else { Vec::new() };
        Ok(self.push(value, rg, Op::Conv2d { x, w, geom, cols }))
    }

    /// Transposed convolution. `w` has layout `(c_in of x, c_out, kh, kw)`,
    /// identical to the kernel of the convolution it transposes.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom =
            ConvGeom::for_transpose(self.value(x).dims4()?, self.value(w).dims4()?, stride, pad)?;
        let out =
            kernels::conv_transpose2d_forward(self.value(x).data(), self.value(w).data(), &geom);
        let value = Tensor::new(vec![geom.n, geom.c_in, geom.h, geom.w], out)?;
        let rg = self.any_grad(&[x, w]);
        Ok(self.push(value, rg, Op::ConvTranspose2d { x, w, geom }))
    }

    /// Adds a per-channel bias of shape `[c]` to an NCHW tensor.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        if self.value(b).shape() != [c] {
            return Err(Error::ShapeMismatch {
                op: "channel_bias",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let bias = self.value(b).data();
        let mut out = self.value(x).clone();
        let p = h * w;
        for ni in 0..n {
            for ci in 0..c {
                for v in &mut out.data_mut()[(ni * c + ci) * p..][..p] {
                    *v += bias[ci];
                }
            }
        }
        let rg = self.any_grad(&[x, b]);
        Ok(self.push(out, rg, Op::ChannelBias { x, b }))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &mut BnRunning,
        mode: BatchNormMode,
        momentum: f64,
        eps: f64,
    ) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        for p in [gamma, beta] {
            if self.value(p).shape() != [c] {
                return Err(Error::ShapeMismatch {
                    op: "batch_norm",
                    lhs: self.value(x).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
        }
        if running.mean.len() != c || running.var.len() != c {
            return Err(Error::ShapeMismatch {
                op: "batch_norm running stats",
                lhs: vec![c],
                rhs: vec![running.mean.len()],
            });
        }
        let p = h * w;
        let count = (n * p) as f64;
        let xd = self.value(x).data();
        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            BatchNormMode::Train { .. } => (0..c)
                .map(|ci| {
                    let mut s = 0.0;
                    for ni in 0..n {
                        s += xd[(ni * c + ci) * p..][..p].iter().sum::<f64>();
                    }
                    let mean = s / count;
                    let mut sq = 0.0;
                    for ni in 0..n {
                        sq += xd[(ni * c + ci) * p..][..p]
                            .iter()
                            .map(|v| (v - mean) * (v - mean))
                            .sum::<f64>();
                    }
                    (mean, sq / count)
                })
                .unzip(),
            BatchNormMode::Eval => (running.mean.clone(), running.var.clone()),
        };
        if let BatchNormMode::Train {
            track_running: true,
        } = mode
        {
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            for ci in 0..c {
                running.mean[ci] = (1.0 - momentum) * running.mean[ci] + momentum * mean[ci];
                running.var[ci] =
                    (1.0 - momentum) * running.var[ci] + momentum * var[ci] * unbias;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * p;
                for i in base..base + p {
                    xhat[i] = (xd[i] - mean[ci]) * inv_std[ci];
                    out[i] = g[ci] * xhat[i] + bt[ci];
                }
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            value,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: matches!(mode, BatchNormMode::Train { .. }),
            },
        ))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            if *v < 0.0 {
                *v *= slope;
            }
        }
        let rg = self.requires_grad(x);
        self.push(out, rg, Op::LeakyRelu { x, slope })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = v.tanh();
        }
        let rg = self.requires_grad(x);
        self.push(out, rg, Op::Tanh { x })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v *= factor;
        }
        let rg = self.requires_grad(x);
        self.push(out, rg, Op::Scale { x, factor })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, rg, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("sub", a, b)?;
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o -= v;
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, rg, Op::Sub { a, b }))
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    /// `x ⊙ factor` for a constant `factor` (dropout-style masks with their
    /// rescaling folded in).
    pub fn multiply_const(&mut self, x: Var, factor: Vec<f64>) -> Result<Var> {
        if factor.len() != self.value(x).len() {
            return Err(Error::ShapeMismatch {
                op: "multiply_const",
                lhs: self.value(x).shape().to_vec(),
                rhs: vec![factor.len()],
            });
        }
        let mut out = self.value(x).clone();
        for (o, f) in out.data_mut().iter_mut().zip(&factor) {
            *o *= f;
        }
        let rg = self.requires_grad(x);
        Ok(self.push(out, rg, Op::Multiply { x, factor }))
    }

    /// Min-max normalizes every contiguous plane of `plane` elements to
    /// `[0, 1]` (constant planes map to zero) and multiplies by `factor`.
    pub fn normalize_multiply(&mut self, x: Var, plane: usize, factor: Vec<f64>) -> Result<Var> {
        let len = self.value(x).len();
        if plane == 0 || len % plane != 0 || factor.len() != len {
            return Err(Error::ShapeMismatch {
                op: "normalize_multiply",
                lhs: self.value(x).shape().to_vec(),
                rhs: vec![plane, factor.len()],
            });
        }
        let xd = self.value(x).data();
        let mut normalized = vec![0.0; len];
        let mut extrema = Vec::with_capacity(len / plane);
        for (src, dst) in xd.chunks(plane).zip(normalized.chunks_mut(plane)) {
            let ext = plane_extrema(src);
            if let Some((imin, _, range)) = ext {
                let lo = src[imin];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = (s - lo) / range;
                }
            }
            extrema.push(ext);
        }
        let out: Vec<f64> = normalized.iter().zip(&factor).map(|(n, f)| n * f).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), out)?;
        let rg = self.requires_grad(x);
        Ok(self.push(
            value,
            rg,
            Op::NormalizeMultiply {
                x,
                plane,
                factor,
                normalized,
                extrema,
            },
        ))
    }

    /// Mean negative log-softmax probability of `targets`. `logits` must be
    /// `[n, classes]` or `[n, classes, 1, 1]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.value(logits).shape();
        let (n, k) = match *shape {
            [n, k] | [n, k, 1, 1] => (n, k),
            _ => {
                return Err(Error::invalid(format!(
                    "softmax_cross_entropy expects [n, classes] logits, got {shape:?}"
                )))
            }
        };
        if targets.len() != n {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy targets",
                lhs: shape.to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::invalid(format!(
                "target index {t} out of range for {k} classes"
            )));
        }
        let ld = self.value(logits).data();
        let mut probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = &ld[i * k..(i + 1) * k];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[i * k + j] = e;
                z += e;
            }
            for p in &mut probs[i * k..(i + 1) * k] {
                *p /= z;
            }
            loss += z.ln() + max - row[t];
        }
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Tensor::scalar(loss / n as f64),
            rg,
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// `Σ_i x_i · weights_i` as a scalar.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                lhs: self.value(x).shape().to_vec(),
                rhs: vec![weights.len()],
            });
        }
        let s = self
            .value(x)
            .data()
            .iter()
            .zip(&weights)
            .map(|(a, b)| a * b)
            .sum();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::scalar(s), rg, Op::WeightedSum { x, weights }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        self.weighted_sum(x, vec![1.0; n])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, rg, Op::Reshape { x }))
    }

    /// Back-propagates from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, data: Vec<f64>) -> Result<()> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        let t = Tensor::new(self.value(v).shape().to_vec(), data)?;
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&t),
            slot @ None => *slot = Some(t),
        }
        Ok(())
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, geom, cols } => {
                let (dx, dw) = kernels::conv2d_backward(
                    gd,
                    self.value(*w).data(),
                    cols,
                    geom,
                    self.requires_grad(*x),
                    self.requires_grad(*w),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx)?;
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw)?;
                }
            }
            Op::ConvTranspose2d { x, w, geom } => {
                let (dx, dw) = kernels::conv_transpose2d_backward(
                    gd,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    geom,
                    self.requires_grad(*x),
                    self.requires_grad(*w),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx)?;
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw)?;
                }
            }
            Op::ChannelBias { x, b } => {
                let [n, c, h, w] = g.dims4()?;
                let p = h * w;
                let mut db = vec![0.0; c];
                for ni in 0..n {
                    for (ci, d) in db.iter_mut().enumerate() {
                        *d += gd[(ni * c + ci) * p..][..p].iter().sum::<f64>();
                    }
                }
                self.accumulate(grads, *x, gd.to_vec())?;
                self.accumulate(grads, *b, db)?;
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let [n, c, h, w] = g.dims4()?;
                let p = h * w;
                let count = (n * p) as f64;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * p;
                        for i in base..base + p {
                            dbeta[ci] += gd[i];
                            dgamma[ci] += gd[i] * xhat[i];
                        }
                    }
                }
                if self.requires_grad(*x) {
                    let mut dx = vec![0.0; gd.len()];
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * p;
                            for i in base..base + p {
                                dx[i] = if *batch_stats {
                                    gam[ci] * inv_std[ci] / count
                                        * (count * gd[i] - dbeta[ci] - xhat[i] * dgamma[ci])
                                } else {
                                    gam[ci] * inv_std[ci] * gd[i]
                                };
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx)?;
                }
                self.accumulate(grads, *gamma, dgamma)?;
                self.accumulate(grads, *beta, dbeta)?;
            }
            Op::LeakyRelu { x, slope } => {
                let xd = self.value(*x).data();
                let dx = gd
                    .iter()
                    .zip(xd)
                    .map(|(g, v)| if *v < 0.0 { g * slope } else { *g })
                    .collect();
                self.accumulate(grads, *x, dx)?;
            }
            Op::Tanh { x } => {
                let yd = node.value.data();
                let dx = gd.iter().zip(yd).map(|(g, y)| g * (1.0 - y * y)).collect();
                self.accumulate(grads, *x, dx)?;
            }
            Op::Scale { x, factor } => {
                self.accumulate(grads, *x, gd.iter().map(|g| g * factor).collect())?;
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, gd.to_vec())?;
                self.accumulate(grads, *b, gd.to_vec())?;
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, gd.to_vec())?;
                self.accumulate(grads, *b, gd.iter().map(|g| -g).collect())?;
            }
            Op::Multiply { x, factor } => {
                let dx = gd.iter().zip(factor).map(|(g, f)| g * f).collect();
                self.accumulate(grads, *x, dx)?;
            }
            Op::NormalizeMultiply {
                x,
                plane,
                factor,
                normalized,
                extrema,
            } => {
                let mut dx = vec![0.0; gd.len()];
                for (pi, ext) in extrema.iter().enumerate() {
                    let Some((imin, imax, range)) = *ext else {
                        continue;
                    };
                    let r = pi * plane..(pi + 1) * plane;
                    let (gp, fp, np) = (&gd[r.clone()], &factor[r.clone()], &normalized[r.clone()]);
                    let dxp = &mut dx[r];
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for i in 0..*plane {
                        let gf = gp[i] * fp[i];
                        dxp[i] = gf / range;
                        s1 += gf;
                        s2 += gf * np[i];
                    }
                    dxp[imin] += (s2 - s1) / range;
                    dxp[imax] -= s2 / range;
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let n = targets.len();
                let k = probs.len() / n;
                let scale = gd[0] / n as f64;
                let mut dl = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    dl[i * k + t] -= 1.0;
                }
                for v in &mut dl {
                    *v *= scale;
                }
                self.accumulate(grads, *logits, dl)?;
            }
            Op::WeightedSum { x, weights } => {
                self.accumulate(grads, *x, weights.iter().map(|w| w * gd[0]).collect())?;
            }
            Op::Reshape { x } => {
                self.accumulate(grads, *x, gd.to_vec())?;
            }
        }
        Ok(())
    }
}
