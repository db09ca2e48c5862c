//! Adversarial objectives, all expressed as quantities to minimize.
//!
//! Class ids are `1..=K`. In ADGAN mode the logit rows have `K + 1`
//! entries and the last one is the fake class. Source heads use index 0 for
//! real and 1 for fake.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

pub const SOURCE_REAL: usize = 0;
pub const SOURCE_FAKE: usize = 1;

fn rows(tape: &Tape, logits: Var) -> Result<(usize, usize)> {
    match *tape.value(logits).shape() {
        [n, k] | [n, k, 1, 1] => Ok((n, k)),
        ref s => Err(Error::invalid(format!("expected [n, classes] logits, got {s:?}"))),
    }
}

/// Zero-based targets for class ids `1..=k`.
fn class_targets(labels: &[u16], k: usize) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&c| {
            if c == 0 || c as usize > k {
                Err(Error::invalid(format!("class id {c} outside 1..={k}")))
            } else {
                Ok(c as usize - 1)
            }
        })
        .collect()
}

/// Cross-entropy of real rows against their classes plus cross-entropy of
/// generated rows against the fake class.
pub fn adgan_d_loss(tape: &mut Tape, logits_real: Var, labels: &[u16], logits_fake: Var) -> Result<Var> {
    let (_, k1) = rows(tape, logits_real)?;
    let (nf, k1f) = rows(tape, logits_fake)?;
    if k1 != k1f || k1 < 3 {
        return Err(Error::ShapeMismatch {
            op: "adgan_d_loss",
            lhs: vec![k1],
            rhs: vec![k1f],
        });
    }
    let real = tape.softmax_cross_entropy(logits_real, &class_targets(labels, k1 - 1)?)?;
    let fake = tape.softmax_cross_entropy(logits_fake, &vec![k1 - 1; nf])?;
    tape.add(real, fake)
}

/// Cross-entropy of generated rows against the class they were asked to
/// depict. Requesting the fake class is an error.
pub fn adgan_g_loss(tape: &mut Tape, logits_fake: Var, desired: &[u16]) -> Result<Var> {
    let (_, k1) = rows(tape, logits_fake)?;
    if let Some(&c) = desired.iter().find(|&&c| c as usize == k1) {
        return Err(Error::invalid(format!(
            "generator target {c} is the fake class"
        )));
    }
    let t = class_targets(desired, k1 - 1)?;
    tape.softmax_cross_entropy(logits_fake, &t)
}

/// Components of the auxiliary-classifier objective. `l_s` and `l_c` are
/// the log-likelihoods of the correct source and class (each ≤ 0).
#[derive(Clone, Copy, Debug)]
pub struct AcganLosses {
    pub l_s: Var,
    pub l_c: Var,
    /// `-(L_S + L_C)`, minimized by the discriminator.
    pub d_objective: Var,
    /// `-(L_C - L_S)`, minimized by the generator.
    pub g_objective: Var,
}

pub struct AcganInputs<'a> {
    pub source_real: Var,
    pub source_fake: Var,
    pub class_real: Var,
    pub class_fake: Var,
    pub labels_real: &'a [u16],
    pub labels_fake: &'a [u16],
}

pub fn acgan_losses(tape: &mut Tape, x: &AcganInputs<'_>) -> Result<AcganLosses> {
    let (nr, sr) = rows(tape, x.source_real)?;
    let (nf, sf) = rows(tape, x.source_fake)?;
    if sr != 2 || sf != 2 {
        return Err(Error::ShapeMismatch {
            op: "acgan source head",
            lhs: vec![sr],
            rhs: vec![2],
        });
    }
    let (_, k) = rows(tape, x.class_real)?;
    let ce_sr = tape.softmax_cross_entropy(x.source_real, &vec![SOURCE_REAL; nr])?;
    let ce_sf = tape.softmax_cross_entropy(x.source_fake, &vec![SOURCE_FAKE; nf])?;
    let ce_cr = tape.softmax_cross_entropy(x.class_real, &class_targets(x.labels_real, k)?)?;
    let ce_cf = tape.softmax_cross_entropy(x.class_fake, &class_targets(x.labels_fake, k)?)?;
    let nll_s = tape.add(ce_sr, ce_sf)?;
    let nll_c = tape.add(ce_cr, ce_cf)?;
    let l_s = tape.scale(nll_s, -1.0);
    let l_c = tape.scale(nll_c, -1.0);
    let d_objective = tape.add(nll_s, nll_c)?;
    let g_objective = tape.sub(nll_c, nll_s)?;
    Ok(AcganLosses {
        l_s,
        l_c,
        d_objective,
        g_objective,
    })
}

/// Two-player source objective: the discriminator's cross-entropy on both
/// sources, and the non-saturating generator loss `-log P(real | fake)`.
pub fn vanilla_gan_losses(tape: &mut Tape, source_real: Var, source_fake: Var) -> Result<(Var, Var)> {
    let (nr, _) = rows(tape, source_real)?;
    let (nf, _) = rows(tape, source_fake)?;
    let ce_r = tape.softmax_cross_entropy(source_real, &vec![SOURCE_REAL; nr])?;
    let ce_f = tape.softmax_cross_entropy(source_fake, &vec![SOURCE_FAKE; nf])?;
    let l_d = tape.add(ce_r, ce_f)?;
    let l_g = tape.softmax_cross_entropy(source_fake, &vec![SOURCE_REAL; nf])?;
    Ok((l_d, l_g))
}
