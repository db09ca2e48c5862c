//! Alternating discriminator/generator optimization.
//!
//! Each step updates D once on a real batch plus an equally sized generated
//! batch, then updates G once on a fresh generated batch. Epoch checkpoints
//! are kept and the one with the lowest epoch-mean D loss is returned.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, Tape, Var};
use crate::data::patches::PatchSet;
use crate::error::{Error, Result};
use crate::evaluation::{confusion_for, metrics, ClassifyOptions};
use crate::model::{
    acgan_losses, adgan_d_loss, adgan_g_loss, save_checkpoint, vanilla_gan_losses, AcganInputs, AdganModel,
    ArchConfig, Checkpoint, CheckpointMeta, LossMode, Phase,
};
use crate::regularization::RegularizerConfig;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FakeClassSampling {
    /// Every class equally often.
    Uniform,
    /// Proportional to the training-set class frequencies.
    MatchEmpirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub regularizer: RegularizerConfig,
    pub fake_classes: FakeClassSampling,
    pub seed: u64,
    /// Write an epoch checkpoint every this many epochs (0 = never).
    pub checkpoint_every: usize,
    /// Validation metrics every this many epochs (0 = never).
    pub validate_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            epochs: 100,
            batch_size: 100,
            adam: AdamConfig::default(),
            regularizer: RegularizerConfig::default(),
            fake_classes: FakeClassSampling::Uniform,
            seed: 0,
            checkpoint_every: 1,
            validate_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.regularizer.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2 for batch norm, got {}",
                self.batch_size
            )));
        }
        let a = &self.adam;
        if !(a.lr >= 0.0 && a.lr.is_finite())
            || !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || a.eps <= 0.0
        {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

/// Model with both optimizers.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: AdganModel,
    pub g_opt: AdamState,
    pub d_opt: AdamState,
    pub step: u64,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let model = AdganModel::new(cfg.arch.clone(), cfg.seed)?;
        Ok(Self {
            g_opt: AdamState::new(&model.generator.params, cfg.adam),
            d_opt: AdamState::new(&model.discriminator.params, cfg.adam),
            model,
            step: 0,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Self {
        Self {
            model: ck.model,
            g_opt: ck.g_opt,
            d_opt: ck.d_opt,
            step: ck.meta.step,
        }
    }

    pub fn checkpoint(&self, meta: CheckpointMeta) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            g_opt: self.g_opt.clone(),
            d_opt: self.d_opt.clone(),
            meta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

/// Draws class ids `1..=K` for generated batches.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassSampler {
    cumulative: Vec<f64>,
}

impl ClassSampler {
    pub fn uniform(k: usize) -> Self {
        Self::weighted(&vec![1.0; k])
    }

    pub fn weighted(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub fn for_config(cfg: &TrainConfig, labels: &[u16]) -> Self {
        let k = cfg.arch.num_classes;
        match cfg.fake_classes {
            FakeClassSampling::Uniform => Self::uniform(k),
            FakeClassSampling::MatchEmpirical => {
                let mut counts = vec![0.0; k];
                for &l in labels {
                    if (1..=k).contains(&(l as usize)) {
                        counts[l as usize - 1] += 1.0;
                    }
                }
                if counts.iter().all(|&c| c == 0.0) {
                    Self::uniform(k)
                } else {
                    Self::weighted(&counts)
                }
            }
        }
    }

    pub fn sample(&self, n: usize, r: &mut rng::Rng) -> Vec<u16> {
        (0..n)
            .map(|_| {
                let u: f64 = r.random();
                let i = self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1);
                i as u16 + 1
            })
            .collect()
    }
}

fn finite(v: f64, what: &str, step: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} at step {step}")))
    }
}

/// Real-batch logits from the D update, reused as constants by the
/// generator objective of the two-head modes.
struct RealLogits {
    source: Tensor,
    class: Tensor,
}

fn d_update(
    st: &mut TrainState,
    cfg: &TrainConfig,
    real: &Tensor,
    labels: &[u16],
    fake_classes: &[u16],
    r: &mut rng::Rng,
    seeds: [u64; 3],
) -> Result<(f64, Option<RealLogits>)> {
    let model = &mut st.model;
    let z = model.sample_noise(fake_classes.len(), r);
    let fake = model.generate(
        &z,
        fake_classes,
        Phase::Train {
            track_running: false,
            seed: seeds[0],
        },
        &cfg.regularizer,
    )?;

    let mut tape = Tape::new();
    let dv = model.discriminator.params.register(&mut tape, true);
    let xr = tape.leaf(real.clone(), false);
    let xf = tape.leaf(fake, false);
    let reg = &cfg.regularizer;
    let out_r = model.discriminator.forward(
        &mut tape,
        &dv,
        xr,
        Phase::Train {
            track_running: true,
            seed: seeds[1],
        },
        reg,
    )?;
    let out_f = model.discriminator.forward(
        &mut tape,
        &dv,
        xf,
        Phase::Train {
            track_running: false,
            seed: seeds[2],
        },
        reg,
    )?;
    let (loss, real_logits) = match cfg.arch.loss_mode {
        LossMode::Adgan => (adgan_d_loss(&mut tape, out_r[0], labels, out_f[0])?, None),
        LossMode::Acgan => {
            let l = acgan_losses(
                &mut tape,
                &AcganInputs {
                    source_real: out_r[0],
                    source_fake: out_f[0],
                    class_real: out_r[1],
                    class_fake: out_f[1],
                    labels_real: labels,
                    labels_fake: fake_classes,
                },
            )?;
            (l.d_objective, Some(()))
        }
        LossMode::Vanilla => {
            let (ld, _) = vanilla_gan_losses(&mut tape, out_r[0], out_f[0])?;
            let cls = class_term(&mut tape, out_r[1], labels)?;
            (tape.add(ld, cls)?, Some(()))
        }
    };
    let real_logits = real_logits.map(|()| RealLogits {
        source: tape.value(out_r[0]).clone(),
        class: tape.value(out_r[1]).clone(),
    });
    let value = finite(tape.value(loss).item(), "discriminator loss", st.step)?;
    let mut grads = tape.backward(loss)?;
    let g = model.discriminator.params.collect_grads(&dv, &mut grads)?;
    st.d_opt.update_owned(&mut model.discriminator.params, &g)?;
    Ok((value, real_logits))
}

/// Class cross-entropy on real samples for the two-head modes.
fn class_term(tape: &mut Tape, class_logits: Var, labels: &[u16]) -> Result<Var> {
    let t: Vec<usize> = labels.iter().map(|&c| c as usize - 1).collect();
    tape.softmax_cross_entropy(class_logits, &t)
}

fn g_update(
    st: &mut TrainState,
    cfg: &TrainConfig,
    classes: &[u16],
    real_labels: &[u16],
    real_logits: Option<RealLogits>,
    r: &mut rng::Rng,
    seeds: [u64; 2],
) -> Result<f64> {
    let model = &mut st.model;
    let z = model.sample_noise(classes.len(), r);
    let input = model.generator_input(&z, classes)?;
    let mut tape = Tape::new();
    let gv = model.generator.params.register(&mut tape, true);
    let dv = model.discriminator.params.register(&mut tape, false);
    let x = tape.leaf(input, false);
    let reg = &cfg.regularizer;
    let fake = model.generator.forward(
        &mut tape,
        &gv,
        x,
        Phase::Train {
            track_running: true,
            seed: seeds[0],
        },
        reg,
    )?[0];
    let out = model.discriminator.forward(
        &mut tape,
        &dv,
        fake,
        Phase::Train {
            track_running: false,
            seed: seeds[1],
        },
        reg,
    )?;
    let loss = match cfg.arch.loss_mode {
        LossMode::Adgan => adgan_g_loss(&mut tape, out[0], classes)?,
        LossMode::Acgan => {
            let rl = real_logits.expect("two-head modes keep real logits");
            let sr = tape.leaf(rl.source, false);
            let cr = tape.leaf(rl.class, false);
            acgan_losses(
                &mut tape,
                &AcganInputs {
                    source_real: sr,
                    source_fake: out[0],
                    class_real: cr,
                    class_fake: out[1],
                    labels_real: real_labels,
                    labels_fake: classes,
                },
            )?
            .g_objective
        }
        LossMode::Vanilla => {
            let rl = real_logits.expect("two-head modes keep real logits");
            let sr = tape.leaf(rl.source, false);
            vanilla_gan_losses(&mut tape, sr, out[0])?.1
        }
    };
    let value = finite(tape.value(loss).item(), "generator loss", st.step)?;
    let mut grads = tape.backward(loss)?;
    let g = model.generator.params.collect_grads(&gv, &mut grads)?;
    st.g_opt.update_owned(&mut model.generator.params, &g)?;
    Ok(value)
}

/// One D update followed by one G update. Randomness comes only from
/// `seed`, so identical inputs give identical results.
pub fn train_step(
    st: &mut TrainState,
    real: &Tensor,
    labels: &[u16],
    cfg: &TrainConfig,
    sampler: &ClassSampler,
    seed: u64,
) -> Result<StepLosses> {
    let k = cfg.arch.num_classes;
    if let Some(&l) = labels.iter().find(|&&l| l == 0 || l as usize > k) {
        return Err(Error::invalid(format!("batch label {l} outside 1..={k}")));
    }
    if real.shape().first() != Some(&labels.len()) {
        return Err(Error::ShapeMismatch {
            op: "train_step batch",
            lhs: real.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    let n = labels.len();
    let mut r = rng::stream(&[seed, 0x5e]);
    let s = |i: u64| rng::mix_seed(&[seed, i]);
    let fake_classes = sampler.sample(n, &mut r);
    let (d_loss, real_logits) = d_update(st, cfg, real, labels, &fake_classes, &mut r, [s(1), s(2), s(3)])?;
    let g_classes = sampler.sample(n, &mut r);
    let g_loss = g_update(st, cfg, &g_classes, labels, real_logits, &mut r, [s(4), s(5)])?;
    st.step += 1;
    Ok(StepLosses { d_loss, g_loss })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_d_loss: f64,
    pub mean_g_loss: f64,
    pub validation: Option<ValidationRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub batch_size: usize,
    /// Not reproducible across runs; excluded from [`TrainLog::to_csv`].
    pub wall_time_secs: f64,
}

impl TrainLog {
    /// `step,epoch,d_loss,g_loss` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,epoch,d_loss,g_loss\n");
        for r in &self.steps {
            let _ = writeln!(s, "{},{},{},{}", r.step, r.epoch, r.d_loss, r.g_loss);
        }
        s
    }

    /// Summary JSON with the epoch records (step records live in the CSV).
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            epochs: &'a [EpochRecord],
            best_epoch: usize,
            batch_size: usize,
            steps: usize,
            wall_time_secs: f64,
        }
        Ok(serde_json::to_string_pretty(&Summary {
            epochs: &self.epochs,
            best_epoch: self.best_epoch,
            batch_size: self.batch_size,
            steps: self.steps.len(),
            wall_time_secs: self.wall_time_secs,
        })?)
    }
}

pub struct TrainOutcome {
    /// Checkpoint of the epoch with the lowest mean D loss.
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: TrainLog,
}

fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:04}.ckpt"))
}

/// Trains on `train_set`. With `ckpt_dir`, epoch checkpoints go there per
/// `checkpoint_every`, plus `best.ckpt` and `last.ckpt` at the end.
pub fn train(
    train_set: &PatchSet,
    val_set: Option<&PatchSet>,
    cfg: &TrainConfig,
    ckpt_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = train_set.len();
    if n == 0 {
        return Err(Error::invalid("training split is empty"));
    }
    if n < 2 {
        return Err(Error::invalid("batch norm needs at least 2 training samples"));
    }
    if train_set.size != cfg.arch.patch_size || train_set.bands != cfg.arch.channels {
        return Err(Error::ShapeMismatch {
            op: "train patches",
            lhs: vec![train_set.bands, train_set.size],
            rhs: vec![cfg.arch.channels, cfg.arch.patch_size],
        });
    }
    let k = cfg.arch.num_classes;
    if let Some(&l) = train_set.labels.iter().find(|&&l| l == 0 || l as usize > k) {
        return Err(Error::invalid(format!("training label {l} outside 1..={k}")));
    }
    let batch_size = if cfg.batch_size > n {
        log::warn!(
            "batch size {} exceeds the {n} training samples; using full batches",
            cfg.batch_size
        );
        n
    } else {
        cfg.batch_size
    };

    let start = Instant::now();
    let mut st = TrainState::new(cfg)?;
    let sampler = ClassSampler::for_config(cfg, &train_set.labels);
    let mut log = TrainLog {
        steps: Vec::new(),
        epochs: Vec::new(),
        best_epoch: 0,
        batch_size,
        wall_time_secs: 0.0,
    };
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        st.model.set_training(true);
        order.sort_unstable();
        order.shuffle(&mut rng::stream(&[cfg.seed, 0x5f, epoch as u64]));
        let (mut d_sum, mut g_sum, mut count) = (0.0, 0.0, 0usize);
        for idx in order.chunks(batch_size) {
            let x = train_set.batch(idx)?;
            let labels: Vec<u16> = idx.iter().map(|&i| train_set.labels[i]).collect();
            let step_seed = rng::mix_seed(&[cfg.seed, 0x57, st.step]);
            let l = train_step(&mut st, &x, &labels, cfg, &sampler, step_seed)?;
            log.steps.push(StepRecord {
                step: st.step,
                epoch,
                d_loss: l.d_loss,
                g_loss: l.g_loss,
            });
            d_sum += l.d_loss;
            g_sum += l.g_loss;
            count += 1;
        }
        st.model.set_training(false);
        let mean_d = d_sum / count as f64;
        let mean_g = g_sum / count as f64;
        let validation = match val_set {
            Some(v) if cfg.validate_every > 0 && epoch % cfg.validate_every == 0 && !v.is_empty() => {
                let rep = metrics(&confusion_for(&mut st.model, v, &ClassifyOptions::default())?)?;
                Some(ValidationRecord {
                    oa: rep.oa,
                    aa: rep.aa,
                    kappa: rep.kappa,
                })
            }
            _ => None,
        };
        log::info!("epoch {epoch}: d_loss {mean_d:.4} g_loss {mean_g:.4}");
        log.epochs.push(EpochRecord {
            epoch,
            mean_d_loss: mean_d,
            mean_g_loss: mean_g,
            validation,
        });
        let ck = st.checkpoint(CheckpointMeta {
            epoch,
            step: st.step,
            d_loss: mean_d,
            g_loss: mean_g,
        });
        if let Some(dir) = ckpt_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                save_checkpoint(&checkpoint_path(dir, epoch), &ck)?;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| mean_d < *b) {
            log.best_epoch = epoch;
            best = Some((mean_d, ck));
        }
    }
    let last = st.checkpoint(CheckpointMeta {
        epoch: cfg.epochs,
        step: st.step,
        d_loss: log.epochs.last().unwrap().mean_d_loss,
        g_loss: log.epochs.last().unwrap().mean_g_loss,
    });
    let best = best.unwrap().1;
    if let Some(dir) = ckpt_dir {
        save_checkpoint(&dir.join("best.ckpt"), &best)?;
        save_checkpoint(&dir.join("last.ckpt"), &last)?;
    }
    log.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(TrainOutcome { best, last, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(mode: LossMode) -> TrainConfig {
        TrainConfig {
            arch: ArchConfig {
                num_classes: 2,
                patch_size: 7,
                base_width: 2,
                noise_dim: 4,
                depth: 3,
                min_spatial: 3,
                g_reg_layer: 2,
                d_reg_layer: 2,
                loss_mode: mode,
                ..ArchConfig::default()
            },
            regularizer: RegularizerConfig {
                b_size: 3,
                ..RegularizerConfig::default()
            },
            epochs: 2,
            batch_size: 4,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn tiny_set(n: usize) -> PatchSet {
        let mut r = rng::seeded(1);
        let mut set = PatchSet::empty(7, 3);
        for i in 0..n {
            let c = 1 + (i % 2) as u16;
            let base = if c == 1 { -0.3 } else { 0.3 };
            set.data.extend((0..147).map(|_| base + 0.1 * (r.random::<f64>() - 0.5)));
            set.labels.push(c);
            set.centers.push((i, 0));
        }
        set
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        for mode in [LossMode::Adgan, LossMode::Acgan, LossMode::Vanilla] {
            let mut cfg = tiny_cfg(mode);
            cfg.adam.lr = 0.0;
            let mut st = TrainState::new(&cfg).unwrap();
            let before = st.model.clone();
            let set = tiny_set(4);
            let x = set.batch(&[0, 1, 2, 3]).unwrap();
            let l = train_step(&mut st, &x, &set.labels, &cfg, &ClassSampler::uniform(2), 9).unwrap();
            assert!(l.d_loss.is_finite() && l.g_loss.is_finite());
            assert_eq!(st.model.generator.params, before.generator.params);
            assert_eq!(st.model.discriminator.params, before.discriminator.params);
        }
    }

    #[test]
    fn step_is_deterministic() {
        let cfg = tiny_cfg(LossMode::Adgan);
        let set = tiny_set(4);
        let x = set.batch(&[0, 1, 2, 3]).unwrap();
        let run = || {
            let mut st = TrainState::new(&cfg).unwrap();
            train_step(&mut st, &x, &set.labels, &cfg, &ClassSampler::uniform(2), 5).unwrap();
            st
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn log_has_one_record_per_batch() {
        let cfg = tiny_cfg(LossMode::Adgan);
        let out = train(&tiny_set(10), None, &cfg, None).unwrap();
        assert_eq!(out.log.steps.len(), 2 * 3);
        assert_eq!(out.log.epochs.len(), 2);
        assert!(out.log.steps.windows(2).all(|w| w[1].step == w[0].step + 1));
        assert!(!out.best.model.is_training());
    }

    #[test]
    fn oversized_batch_falls_back_to_full_batch() {
        let mut cfg = tiny_cfg(LossMode::Acgan);
        cfg.batch_size = 50;
        cfg.epochs = 1;
        let out = train(&tiny_set(6), None, &cfg, None).unwrap();
        assert_eq!(out.log.batch_size, 6);
        assert_eq!(out.log.steps.len(), 1);
        assert_eq!(out.best.meta.epoch, 1);
    }

    #[test]
    fn bad_labels_are_rejected() {
        let cfg = tiny_cfg(LossMode::Adgan);
        let mut st = TrainState::new(&cfg).unwrap();
        let set = tiny_set(4);
        let x = set.batch(&[0, 1, 2, 3]).unwrap();
        assert!(train_step(&mut st, &x, &[1, 2, 3, 1], &cfg, &ClassSampler::uniform(2), 1).is_err());
    }

    #[test]
    fn sampler_covers_classes() {
        let s = ClassSampler::uniform(3);
        let mut r = rng::seeded(4);
        let draws = s.sample(3000, &mut r);
        for c in 1..=3 {
            let n = draws.iter().filter(|&&d| d == c).count();
            assert!((900..1100).contains(&n), "{c}: {n}");
        }
        let w = ClassSampler::weighted(&[0.0, 1.0]);
        assert!(w.sample(100, &mut r).iter().all(|&d| d == 2));
    }
}
