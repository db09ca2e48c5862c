//! Dropout, DropBlock and AdapDrop as feature-map transforms.
//!
//! All three work on independent `h × w` planes (one per sample and channel)
//! and are the identity outside training. DropBlock and AdapDrop share the
//! block-center sampling: centers are Bernoulli(γ) draws restricted to the
//! positions where a full `b × b` block fits inside the plane.
//!
//! AdapDrop first min-max normalizes the plane, then inside each sampled
//! block zeroes the `ceil(k/100 · b²)` largest normalized values (ties go to
//! the smallest linear index) and finally rescales the masked, normalized
//! plane by `count(M) / count_ones(M)`. The output therefore lives on the
//! normalized scale; `denormalize_after_drop` is an opt-in extension that
//! applies the same mask and scale to the raw plane instead.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    None,
    Dropout,
    Dropblock,
    Adapdrop,
}

impl std::str::FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "dropout" => Ok(Self::Dropout),
            "dropblock" => Ok(Self::Dropblock),
            "adapdrop" => Ok(Self::Adapdrop),
            other => Err(Error::Config(format!("unknown regularizer `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizerConfig {
    pub kind: RegularizerKind,
    /// Side of the square block (odd).
    pub b_size: usize,
    /// Percent of each block's elements to drop (AdapDrop).
    pub k: f64,
    /// Target keep probability; sets γ for the block methods and `1 - p`
    /// for plain dropout.
    pub keep_prob: f64,
    /// Extension: apply the AdapDrop mask to the raw plane rather than the
    /// normalized one.
    pub denormalize_after_drop: bool,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            kind: RegularizerKind::Adapdrop,
            b_size: 7,
            k: 40.0,
            keep_prob: 0.9,
            denormalize_after_drop: false,
        }
    }
}

impl RegularizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b_size == 0 || self.b_size % 2 == 0 {
            return Err(Error::Config(format!(
                "b_size must be a positive odd integer, got {}",
                self.b_size
            )));
        }
        if !(0.0..=100.0).contains(&self.k) {
            return Err(Error::Config(format!("k must lie in [0, 100], got {}", self.k)));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::Config(format!(
                "keep_prob must lie in (0, 1], got {}",
                self.keep_prob
            )));
        }
        Ok(())
    }
}

/// Bernoulli rate for block centers on a square `feat_size` plane:
/// `γ = (1 − keep_prob)/b² · feat²/(feat − b + 1)²`.
pub fn compute_gamma(keep_prob: f64, b_size: usize, feat_size: usize) -> Result<f64> {
    if b_size == 0 || b_size > feat_size {
        return Err(Error::invalid(format!(
            "block size {b_size} does not fit a feature map of size {feat_size}"
        )));
    }
    plane_gamma(keep_prob, b_size, feat_size, feat_size)
}

/// [`compute_gamma`] for rectangular planes.
pub fn plane_gamma(keep_prob: f64, b_size: usize, h: usize, w: usize) -> Result<f64> {
    if b_size == 0 || b_size > h || b_size > w {
        return Err(Error::invalid(format!(
            "block size {b_size} does not fit a {h}x{w} plane"
        )));
    }
    let b2 = (b_size * b_size) as f64;
    let valid = ((h - b_size + 1) * (w - b_size + 1)) as f64;
    Ok((1.0 - keep_prob) / b2 * (h * w) as f64 / valid)
}

/// Largest odd block size not exceeding `b_size` that fits an `h × w` plane.
pub fn effective_block_size(b_size: usize, h: usize, w: usize) -> usize {
    let limit = h.min(w);
    let b = b_size.min(limit);
    if b % 2 == 0 {
        b.saturating_sub(1).max(1)
    } else {
        b.max(1)
    }
}

/// Index of the first minimum, first maximum and the range of a plane, or
/// `None` when the plane is constant.
pub(crate) fn plane_extrema(plane: &[f64]) -> Option<(usize, usize, f64)> {
    let (mut imin, mut imax) = (0, 0);
    for (i, &v) in plane.iter().enumerate() {
        if v < plane[imin] {
            imin = i;
        }
        if v > plane[imax] {
            imax = i;
        }
    }
    let range = plane.get(imax)? - plane[imin];
    (range > 0.0).then_some((imin, imax, range))
}

/// `(A − min)/(max − min)`; a constant plane maps to zeros.
pub fn normalize_feature(plane: &[f64]) -> Vec<f64> {
    match plane_extrema(plane) {
        Some((imin, _, range)) => {
            let lo = plane[imin];
            plane.iter().map(|v| (v - lo) / range).collect()
        }
        None => vec![0.0; plane.len()],
    }
}

/// Binary drop mask over one `h × w` plane.
#[derive(Clone, Debug, PartialEq)]
pub struct DropMask {
    pub h: usize,
    pub w: usize,
    /// Row-major, `true` = kept.
    pub keep: Vec<bool>,
    /// Sampled block centers as `(row, col)`.
    pub centers: Vec<(usize, usize)>,
    pub b_size: usize,
    pub k: f64,
}

impl DropMask {
    pub fn all_ones(h: usize, w: usize, b_size: usize, k: f64) -> Self {
        Self {
            h,
            w,
            keep: vec![true; h * w],
            centers: Vec::new(),
            b_size,
            k,
        }
    }

    pub fn count(&self) -> usize {
        self.keep.len()
    }

    pub fn count_ones(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// `count(M)/count_ones(M)`, or 0 when every element was dropped.
    pub fn scale(&self) -> f64 {
        match self.count_ones() {
            0 => 0.0,
            ones => self.count() as f64 / ones as f64,
        }
    }

    /// Mask value times scale for every element.
    pub fn factors(&self) -> Vec<f64> {
        let s = self.scale();
        self.keep.iter().map(|&k| if k { s } else { 0.0 }).collect()
    }
}

/// Draws Bernoulli(γ) centers at the positions whose `b × b` block lies
/// inside the plane, scanning row-major.
pub fn sample_centers<R: Rng + ?Sized>(
    h: usize,
    w: usize,
    b_size: usize,
    gamma: f64,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let half = b_size / 2;
    if b_size > h || b_size > w || gamma <= 0.0 {
        return Vec::new();
    }
    let gamma = gamma.min(1.0);
    let mut centers = Vec::new();
    for r in half..h - half {
        for c in half..w - half {
            if rng.random::<f64>() < gamma {
                centers.push((r, c));
            }
        }
    }
    centers
}

/// Number of elements AdapDrop zeroes inside one `b × b` block.
pub fn drop_count(k: f64, b_size: usize) -> usize {
    let b2 = b_size * b_size;
    ((k * b2 as f64) / 100.0).ceil().clamp(0.0, b2 as f64) as usize
}

fn block_indices(center: (usize, usize), b_size: usize, w: usize) -> impl Iterator<Item = usize> {
    let half = b_size / 2;
    let (r0, c0) = (center.0 - half, center.1 - half);
    (r0..r0 + b_size).flat_map(move |r| (c0..c0 + b_size).map(move |c| r * w + c))
}

/// Zeroes whole blocks around each center.
pub fn block_mask(h: usize, w: usize, centers: &[(usize, usize)], b_size: usize) -> DropMask {
    let mut mask = DropMask::all_ones(h, w, b_size, 100.0);
    for &c in centers {
        for i in block_indices(c, b_size, w) {
            mask.keep[i] = false;
        }
    }
    mask.centers = centers.to_vec();
    mask
}

/// Zeroes the top-`k` percent of `normalized` inside each block.
pub fn adaptive_mask(
    normalized: &[f64],
    h: usize,
    w: usize,
    centers: &[(usize, usize)],
    b_size: usize,
    k: f64,
) -> DropMask {
    let mut mask = DropMask::all_ones(h, w, b_size, k);
    let n_drop = drop_count(k, b_size);
    if n_drop > 0 {
        let mut block: Vec<usize> = Vec::with_capacity(b_size * b_size);
        for &c in centers {
            block.clear();
            block.extend(block_indices(c, b_size, w));
            block.sort_by(|&a, &b| normalized[b].total_cmp(&normalized[a]).then(a.cmp(&b)));
            for &i in &block[..n_drop] {
                mask.keep[i] = false;
            }
        }
    }
    mask.centers = centers.to_vec();
    mask
}

/// AdapDrop on one plane with given centers. Returns the output plane and
/// the mask.
pub fn adapdrop_with_centers(
    plane: &[f64],
    h: usize,
    w: usize,
    centers: &[(usize, usize)],
    b_size: usize,
    k: f64,
) -> (Vec<f64>, DropMask) {
    let normalized = normalize_feature(plane);
    let mask = adaptive_mask(&normalized, h, w, centers, b_size, k);
    let out = normalized
        .iter()
        .zip(mask.factors())
        .map(|(n, f)| n * f)
        .collect();
    (out, mask)
}

fn plane_dims(a: &Tensor) -> Result<(usize, usize, usize)> {
    match *a.shape() {
        [h, w] => Ok((1, h, w)),
        [n, c, h, w] => Ok((n * c, h, w)),
        _ => Err(Error::invalid(format!(
            "regularizers expect an [h, w] plane or NCHW tensor, got {:?}",
            a.shape()
        ))),
    }
}

fn plane_rng(seed: u64, plane: usize) -> rng::Rng {
    rng::stream(&[seed, plane as u64])
}

/// Samples one mask per plane of `a` for the block-structured methods.
/// Blocks larger than the plane are rejected.
pub fn sample_masks(a: &Tensor, cfg: &RegularizerConfig, seed: u64) -> Result<Vec<DropMask>> {
    let (planes, h, w) = plane_dims(a)?;
    masks_for(a.data(), planes, h, w, cfg, cfg.b_size, seed)
}

fn masks_for(
    data: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    cfg: &RegularizerConfig,
    b_size: usize,
    seed: u64,
) -> Result<Vec<DropMask>> {
    let gamma = plane_gamma(cfg.keep_prob, b_size, h, w)?;
    let plane_len = h * w;
    (0..planes)
        .map(|p| {
            let mut r = plane_rng(seed, p);
            let centers = sample_centers(h, w, b_size, gamma, &mut r);
            Ok(match cfg.kind {
                RegularizerKind::Adapdrop => {
                    let normalized = normalize_feature(&data[p * plane_len..][..plane_len]);
                    adaptive_mask(&normalized, h, w, &centers, b_size, cfg.k)
                }
                _ => block_mask(h, w, &centers, b_size),
            })
        })
        .collect()
}

/// AdapDrop over every plane of `a` (training-mode transform).
pub fn adapdrop(a: &Tensor, cfg: &RegularizerConfig, seed: u64) -> Result<Tensor> {
    let cfg = RegularizerConfig {
        kind: RegularizerKind::Adapdrop,
        ..cfg.clone()
    };
    let (_, h, w) = plane_dims(a)?;
    let masks = sample_masks(a, &cfg, seed)?;
    let mut out = Vec::with_capacity(a.len());
    for (plane, mask) in a.data().chunks(h * w).zip(&masks) {
        let f = mask.factors();
        if cfg.denormalize_after_drop {
            out.extend(plane.iter().zip(&f).map(|(v, f)| v * f));
        } else {
            out.extend(normalize_feature(plane).iter().zip(&f).map(|(v, f)| v * f));
        }
    }
    Tensor::new(a.shape().to_vec(), out)
}

/// DropBlock over every plane of `a`: whole blocks zeroed, count-based
/// rescaling, no normalization.
pub fn dropblock(a: &Tensor, cfg: &RegularizerConfig, seed: u64) -> Result<Tensor> {
    let cfg = RegularizerConfig {
        kind: RegularizerKind::Dropblock,
        ..cfg.clone()
    };
    let (_, h, w) = plane_dims(a)?;
    let masks = sample_masks(a, &cfg, seed)?;
    let mut out = Vec::with_capacity(a.len());
    for (plane, mask) in a.data().chunks(h * w).zip(&masks) {
        out.extend(plane.iter().zip(mask.factors()).map(|(v, f)| v * f));
    }
    Tensor::new(a.shape().to_vec(), out)
}

fn dropout_factors(len: usize, plane: usize, p: f64, seed: u64) -> Vec<f64> {
    let keep = 1.0 - p;
    let mut out = Vec::with_capacity(len);
    for pi in 0..len.div_ceil(plane) {
        let mut r = plane_rng(seed, pi);
        let n = plane.min(len - pi * plane);
        out.extend((0..n).map(|_| if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 }));
    }
    out
}

/// Inverted dropout with drop probability `p ∈ [0, 1)`.
pub fn dropout(a: &Tensor, p: f64, seed: u64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout probability must lie in [0, 1), got {p}")));
    }
    if p == 0.0 {
        return Ok(a.clone());
    }
    let plane = match *a.shape() {
        [.., h, w] => h * w,
        _ => a.len(),
    };
    let f = dropout_factors(a.len(), plane, p, seed);
    let out = a.data().iter().zip(f).map(|(v, f)| v * f).collect();
    Tensor::new(a.shape().to_vec(), out)
}

/// Applies the configured regularizer to an NCHW tape value. Outside
/// training, or with `kind = none`, returns `x` unchanged. Blocks larger
/// than the feature map shrink to the largest odd size that fits.
pub fn apply_on_tape(
    tape: &mut Tape,
    x: Var,
    cfg: &RegularizerConfig,
    seed: u64,
    train: bool,
) -> Result<Var> {
    if !train || cfg.kind == RegularizerKind::None {
        return Ok(x);
    }
    let [n, c, h, w] = tape.value(x).dims4()?;
    let planes = n * c;
    let len = tape.value(x).len();
    match cfg.kind {
        RegularizerKind::None => Ok(x),
        RegularizerKind::Dropout => {
            let f = dropout_factors(len, h * w, 1.0 - cfg.keep_prob, seed);
            tape.multiply_const(x, f)
        }
        RegularizerKind::Dropblock | RegularizerKind::Adapdrop => {
            let b = effective_block_size(cfg.b_size, h, w);
            let masks = masks_for(tape.value(x).data(), planes, h, w, cfg, b, seed)?;
            let f: Vec<f64> = masks.iter().flat_map(DropMask::factors).collect();
            if cfg.kind == RegularizerKind::Adapdrop && !cfg.denormalize_after_drop {
                tape.normalize_multiply(x, h * w, f)
            } else {
                tape.multiply_const(x, f)
            }
        }
    }
}
