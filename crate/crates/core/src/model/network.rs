use rand::Rng as _;
use rand_distr::StandardNormal;

use super::arch::{Activation, ConvKind, LayerPlan, Norm};
use crate::autodiff::{BatchNormMode, BnRunning, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::regularization::{apply_on_tape, RegularizerConfig};
use crate::rng;
use crate::tensor::Tensor;

/// How a forward pass treats batch norm and the regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Batch statistics and an active regularizer seeded by `seed`.
    Train { track_running: bool, seed: u64 },
    /// Running statistics, regularizer off.
    Eval,
}

impl Phase {
    fn bn_mode(self) -> BatchNormMode {
        match self {
            Phase::Train { track_running, .. } => BatchNormMode::Train { track_running },
            Phase::Eval => BatchNormMode::Eval,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LayerParams {
    weight: usize,
    bias: Option<usize>,
    /// `(gamma, beta, running slot)`
    bn: Option<(usize, usize, usize)>,
}

/// Parameters, batch-norm statistics and layer plans of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub params: ParamSet,
    pub running: Vec<BnRunning>,
    body: Vec<LayerPlan>,
    heads: Vec<LayerPlan>,
    slots: Vec<LayerParams>,
    bn_momentum: f64,
    bn_eps: f64,
}

impl Network {
    pub(crate) fn build(
        body: Vec<LayerPlan>,
        heads: Vec<LayerPlan>,
        init_std: f64,
        bn_momentum: f64,
        bn_eps: f64,
        rng: &mut rng::Rng,
    ) -> Self {
        let mut params = ParamSet::new();
        let mut running = Vec::new();
        let mut slots = Vec::new();
        for l in body.iter().chain(&heads) {
            let shape = l.weight_shape();
            let n: usize = shape.iter().product();
            let w: Vec<f64> = (0..n).map(|_| init_std * rng.sample::<f64, _>(StandardNormal)).collect();
            let weight = params.push(format!("{}.weight", l.name), Tensor::new(shape, w).unwrap());
            let c = l.out_channels;
            let (bias, bn) = match l.norm {
                Norm::None => (None, None),
                Norm::Bias => (Some(params.push(format!("{}.bias", l.name), Tensor::zeros(&[c]))), None),
                Norm::BatchNorm => {
                    let g = params.push(format!("{}.bn.gamma", l.name), Tensor::full(&[c], 1.0));
                    let b = params.push(format!("{}.bn.beta", l.name), Tensor::zeros(&[c]));
                    running.push(BnRunning::new(c));
                    (None, Some((g, b, running.len() - 1)))
                }
            };
            slots.push(LayerParams { weight, bias, bn });
        }
        Self {
            params,
            running,
            body,
            heads,
            slots,
            bn_momentum,
            bn_eps,
        }
    }

    pub fn body(&self) -> &[LayerPlan] {
        &self.body
    }

    pub fn heads(&self) -> &[LayerPlan] {
        &self.heads
    }

    /// Parameter count of the body layers only.
    pub fn body_numel(&self) -> usize {
        let n_body = self.body.len();
        self.slots[..n_body]
            .iter()
            .map(|s| {
                let mut n = self.params.get(s.weight).len();
                if let Some(b) = s.bias {
                    n += self.params.get(b).len();
                }
                if let Some((g, b, _)) = s.bn {
                    n += self.params.get(g).len() + self.params.get(b).len();
                }
                n
            })
            .sum()
    }

    fn layer(
        &mut self,
        tape: &mut Tape,
        vars: &[Var],
        idx: usize,
        plan: &LayerPlan,
        x: Var,
        phase: Phase,
        reg: &RegularizerConfig,
    ) -> Result<Var> {
        let slot = &self.slots[idx];
        let w = vars[slot.weight];
        let mut h = match plan.kind {
            ConvKind::Conv => tape.conv2d(x, w, plan.stride, plan.pad)?,
            ConvKind::Transpose => tape.conv_transpose2d(x, w, plan.stride, plan.pad)?,
        };
        if let Some(b) = slot.bias {
            h = tape.channel_bias(h, vars[b])?;
        }
        if let Some((g, b, r)) = slot.bn {
            h = tape.batch_norm(
                h,
                vars[g],
                vars[b],
                &mut self.running[r],
                phase.bn_mode(),
                self.bn_momentum,
                self.bn_eps,
            )?;
        }
        h = match plan.activation {
            Activation::Identity => h,
            Activation::LeakyRelu(s) => tape.leaky_relu(h, s),
            Activation::Relu => tape.relu(h),
            Activation::HalfTanh => {
                let t = tape.tanh(h);
                tape.scale(t, 0.5)
            }
        };
        if plan.regularize {
            if let Phase::Train { seed, .. } = phase {
                h = apply_on_tape(tape, h, reg, rng::mix_seed(&[seed, idx as u64]), true)?;
            }
        }
        Ok(h)
    }

    /// Runs the body, then every head on the body output. Head outputs are
    /// reshaped to `[n, logits]`; without heads the body output is returned.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        phase: Phase,
        reg: &RegularizerConfig,
    ) -> Result<Vec<Var>> {
        if vars.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "network has {} parameters, {} vars supplied",
                self.params.len(),
                vars.len()
            )));
        }
        let first = &self.body[0];
        let shape = tape.value(x).shape().to_vec();
        let expect = [first.in_channels, first.in_size, first.in_size];
        if shape.len() != 4 || shape[1..] != expect {
            return Err(Error::ShapeMismatch {
                op: "network input",
                lhs: shape,
                rhs: expect.to_vec(),
            });
        }
        let n = shape[0];
        let mut h = x;
        let body = self.body.clone();
        for (i, plan) in body.iter().enumerate() {
            h = self.layer(tape, vars, i, plan, h, phase, reg)?;
        }
        if self.heads.is_empty() {
            return Ok(vec![h]);
        }
        let heads = self.heads.clone();
        let mut outs = Vec::with_capacity(heads.len());
        for (j, plan) in heads.iter().enumerate() {
            let o = self.layer(tape, vars, body.len() + j, plan, h, phase, reg)?;
            outs.push(tape.reshape(o, &[n, plan.out_channels])?);
        }
        Ok(outs)
    }
}
