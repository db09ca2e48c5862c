//! Deterministic synthetic hyperspectral scenes.
//!
//! Each class occupies a set of irregular blobs grown by randomized flood
//! fill, and owns a smooth spectral signature. Pixels carry their class
//! signature modulated by a class-specific spatial texture plus white
//! noise; both perturbations scale with `noise`, so at `noise = 0` every
//! pixel of a class has exactly the class signature.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::cube::{HsiCube, HsiDataset, LabelRaster};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    /// Labeled pixel count for classes `1..=K`.
    pub class_counts: Vec<usize>,
    /// Target pixel count of one blob.
    pub blob_size: usize,
    /// Strength of texture and additive noise (0 = clean).
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 48,
            height: 48,
            bands: 32,
            class_counts: vec![500, 500, 25],
            blob_size: 60,
            noise: 0.3,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.bands == 0 {
            return Err(Error::Config("synth dimensions must be positive".into()));
        }
        if self.class_counts.is_empty() || self.class_counts.iter().any(|&c| c == 0) {
            return Err(Error::Config("every synthetic class needs at least one pixel".into()));
        }
        if self.class_counts.len() > u16::MAX as usize {
            return Err(Error::Config("too many classes".into()));
        }
        let labeled: usize = self.class_counts.iter().sum();
        if labeled > self.width * self.height {
            return Err(Error::Config(format!(
                "{labeled} labeled pixels do not fit a {}x{} scene",
                self.width, self.height
            )));
        }
        if self.blob_size == 0 {
            return Err(Error::Config("blob_size must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

fn grow_labels(spec: &SynthSpec, r: &mut rng::Rng) -> Vec<u16> {
    let (w, h) = (spec.width, spec.height);
    let mut labels = vec![0u16; w * h];
    let mut blobs: Vec<(u16, usize)> = Vec::new();
    for (ci, &count) in spec.class_counts.iter().enumerate() {
        let n_blobs = count.div_ceil(spec.blob_size);
        let base = count / n_blobs;
        let extra = count % n_blobs;
        for b in 0..n_blobs {
            blobs.push((ci as u16 + 1, base + usize::from(b < extra)));
        }
    }
    blobs.shuffle(r);

    let mut free: Vec<usize> = (0..w * h).collect();
    free.shuffle(r);
    let mut free_cursor = 0;
    for (class, size) in blobs {
        let mut placed = 0;
        while placed < size {
            // Fresh seed pixel.
            while labels[free[free_cursor]] != 0 {
                free_cursor += 1;
            }
            let seed = free[free_cursor];
            labels[seed] = class;
            placed += 1;
            let mut frontier = vec![seed];
            while placed < size && !frontier.is_empty() {
                let fi = r.random_range(0..frontier.len());
                let p = frontier[fi];
                let (y, x) = (p / w, p % w);
                let mut nbrs = [None; 4];
                if y > 0 {
                    nbrs[0] = Some(p - w);
                }
                if y + 1 < h {
                    nbrs[1] = Some(p + w);
                }
                if x > 0 {
                    nbrs[2] = Some(p - 1);
                }
                if x + 1 < w {
                    nbrs[3] = Some(p + 1);
                }
                let open: Vec<usize> = nbrs.iter().flatten().copied().filter(|&q| labels[q] == 0).collect();
                if open.is_empty() {
                    frontier.swap_remove(fi);
                    continue;
                }
                let q = open[r.random_range(0..open.len())];
                labels[q] = class;
                placed += 1;
                frontier.push(q);
            }
        }
    }
    labels
}

fn signature(bands: usize, r: &mut rng::Rng) -> Vec<f64> {
    let bumps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                r.random_range(0.2..1.0),
                r.random_range(0.0..1.0),
                r.random_range(0.05..0.2),
            )
        })
        .collect();
    let offset = r.random_range(0.2..0.8);
    (0..bands)
        .map(|b| {
            let t = b as f64 / (bands.max(2) - 1) as f64;
            offset
                + bumps
                    .iter()
                    .map(|&(a, mu, s)| a * (-(t - mu).powi(2) / (2.0 * s * s)).exp())
                    .sum::<f64>()
        })
        .collect()
}

struct Texture {
    fx: f64,
    fy: f64,
    phase: f64,
}

impl Texture {
    fn new(r: &mut rng::Rng) -> Self {
        Self {
            fx: r.random_range(-0.6..0.6),
            fy: r.random_range(-0.6..0.6),
            phase: r.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn at(&self, y: usize, x: usize) -> f64 {
        (self.fx * x as f64 + self.fy * y as f64 + self.phase).sin()
    }
}

/// Builds the scene described by `spec`. Values are rounded to f32 so the
/// result round-trips through the HSC container bit-exactly.
pub fn synth_dataset(spec: &SynthSpec) -> Result<HsiDataset> {
    spec.validate()?;
    let k = spec.class_counts.len();
    let mut layout_rng = rng::stream(&[spec.seed, 1]);
    let labels = grow_labels(spec, &mut layout_rng);

    let mut spec_rng = rng::stream(&[spec.seed, 2]);
    // Index 0 is the unlabeled background.
    let signatures: Vec<Vec<f64>> = (0..=k).map(|_| signature(spec.bands, &mut spec_rng)).collect();
    let textures: Vec<Texture> = (0..=k).map(|_| Texture::new(&mut spec_rng)).collect();

    let mut noise_rng = rng::stream(&[spec.seed, 3]);
    let p = spec.width * spec.height;
    let mut data = vec![0.0; spec.bands * p];
    for (i, &l) in labels.iter().enumerate() {
        let (y, x) = (i / spec.width, i % spec.width);
        let sig = &signatures[l as usize];
        let tex = 1.0 + 0.5 * spec.noise * textures[l as usize].at(y, x);
        for b in 0..spec.bands {
            let eps: f64 = noise_rng.sample(StandardNormal);
            let v = sig[b] * tex + 0.25 * spec.noise * eps;
            data[b * p + i] = v as f32 as f64;
        }
    }
    let cube = HsiCube::new(spec.width, spec.height, spec.bands, data)?;
    let labels = LabelRaster::new(spec.width, spec.height, labels)?;
    let mut ds = HsiDataset::new(cube, labels)?;
    ds.class_names = Some((1..=k).map(|c| format!("class_{c}")).collect());
    Ok(ds)
}
