//! Conditional generator and discriminator.
//!
//! The generator receives noise with a one-hot class code appended along
//! the channel axis. The discriminator's head layout depends on the loss
//! mode; see [`ArchConfig::head_outputs`].

pub mod arch;
pub mod checkpoint;
pub mod losses;
pub mod network;

use rand::Rng as _;
use rand_distr::StandardNormal;

pub use arch::{ArchConfig, LayerPlan, LossMode};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use losses::{
    acgan_losses, adgan_d_loss, adgan_g_loss, vanilla_gan_losses, AcganInputs, AcganLosses,
};
pub use network::{Network, Phase};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::regularization::RegularizerConfig;
use crate::rng;
use crate::tensor::Tensor;

/// Discriminator outputs. `logits` holds the K+1 joint logits in ADGAN
/// mode and the K class logits otherwise; `source` is the 2-way head.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscOutput {
    pub logits: Tensor,
    pub source: Option<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdganModel {
    pub arch: ArchConfig,
    pub generator: Network,
    pub discriminator: Network,
    training: bool,
}

impl AdganModel {
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut g_rng = rng::stream(&[seed, 0x6e]);
        let mut d_rng = rng::stream(&[seed, 0xd1]);
        let generator = Network::build(
            arch.generator_layers(),
            Vec::new(),
            arch.init_std,
            arch.bn_momentum,
            arch.bn_eps,
            &mut g_rng,
        );
        let discriminator = Network::build(
            arch.discriminator_body(),
            arch.discriminator_heads(),
            arch.init_std,
            arch.bn_momentum,
            arch.bn_eps,
            &mut d_rng,
        );
        Ok(Self {
            arch,
            generator,
            discriminator,
            training: false,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    /// Marks the model as being optimized. Scene classification refuses a
    /// model in this state.
    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn is_finite(&self) -> bool {
        let bn_ok = |n: &Network| {
            n.running
                .iter()
                .all(|r| r.mean.iter().chain(&r.var).all(|v| v.is_finite()))
        };
        self.generator.params.is_finite()
            && self.discriminator.params.is_finite()
            && bn_ok(&self.generator)
            && bn_ok(&self.discriminator)
    }

    /// Standard normal noise of shape `[n, noise_dim, 1, 1]`.
    pub fn sample_noise(&self, n: usize, rng: &mut rng::Rng) -> Tensor {
        let d = self.arch.noise_dim;
        let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        Tensor::new(vec![n, d, 1, 1], data).unwrap()
    }

    /// Noise with the one-hot code of `classes` appended along channels.
    pub fn generator_input(&self, z: &Tensor, classes: &[u16]) -> Result<Tensor> {
        let d = self.arch.noise_dim;
        let k = self.arch.num_classes;
        let n = classes.len();
        if z.shape() != [n, d, 1, 1] {
            return Err(Error::ShapeMismatch {
                op: "generator_input",
                lhs: z.shape().to_vec(),
                rhs: vec![n, d, 1, 1],
            });
        }
        let mut data = Vec::with_capacity(n * (d + k));
        for (i, &c) in classes.iter().enumerate() {
            if c == 0 || c as usize > k {
                return Err(Error::invalid(format!("class id {c} outside 1..={k}")));
            }
            data.extend_from_slice(&z.data()[i * d..(i + 1) * d]);
            data.extend((1..=k).map(|j| if j == c as usize { 1.0 } else { 0.0 }));
        }
        Tensor::new(vec![n, d + k, 1, 1], data)
    }

    /// Generated patches `[n, channels, S, S]` for `classes`.
    pub fn generate(&mut self, z: &Tensor, classes: &[u16], phase: Phase, reg: &RegularizerConfig) -> Result<Tensor> {
        let input = self.generator_input(z, classes)?;
        let mut tape = Tape::new();
        let vars = self.generator.params.register(&mut tape, false);
        let x = tape.leaf(input, false);
        let out = self.generator.forward(&mut tape, &vars, x, phase, reg)?;
        Ok(tape.value(out[0]).clone())
    }

    pub fn discriminate(&mut self, x: &Tensor, phase: Phase, reg: &RegularizerConfig) -> Result<DiscOutput> {
        let mut tape = Tape::new();
        let vars = self.discriminator.params.register(&mut tape, false);
        let xv = tape.leaf(x.clone(), false);
        let outs = self.discriminator.forward(&mut tape, &vars, xv, phase, reg)?;
        Ok(match self.arch.loss_mode {
            LossMode::Adgan => DiscOutput {
                logits: tape.value(outs[0]).clone(),
                source: None,
            },
            LossMode::Acgan | LossMode::Vanilla => DiscOutput {
                logits: tape.value(outs[1]).clone(),
                source: Some(tape.value(outs[0]).clone()),
            },
        })
    }

    /// Eval-mode class predictions (`1..=K`) for a batch. In ADGAN mode the
    /// fake logit only competes when `include_fake` is set, in which case a
    /// fake verdict is reported as `K + 1`.
    pub fn predict(&mut self, x: &Tensor, include_fake: bool) -> Result<Vec<u16>> {
        let out = self.discriminate(x, Phase::Eval, &RegularizerConfig::default())?;
        let k = self.arch.num_classes;
        let width = out.logits.shape()[1];
        let take = if self.arch.loss_mode == LossMode::Adgan && include_fake { k + 1 } else { k };
        Ok(out
            .logits
            .data()
            .chunks(width)
            .map(|row| {
                let mut best = 0;
                for j in 1..take {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best as u16 + 1
            })
            .collect())
    }
}

/// Row-wise softmax of `[n, k]` logits.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let k = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}
