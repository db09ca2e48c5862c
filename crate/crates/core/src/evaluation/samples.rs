//! Inspection of generated samples.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::data::patches::PatchSet;
use crate::error::{Error, Result};
use crate::model::{AdganModel, Phase};
use crate::regularization::RegularizerConfig;
use crate::rng;
use crate::tensor::Tensor;

/// `n` eval-mode samples of `class`, drawn from noise stream `(seed, class)`.
pub fn generate_class(model: &mut AdganModel, class: u16, n: usize, seed: u64) -> Result<Tensor> {
    let mut r = rng::stream(&[seed, 0x9a, class as u64]);
    let z = model.sample_noise(n, &mut r);
    model.generate(&z, &vec![class; n], Phase::Eval, &RegularizerConfig::default())
}

fn to_byte(v: f64) -> u8 {
    ((v + 0.5).clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Grid image: one row per class, `n` samples per row. The first three
/// channels are shown as RGB (a single channel as gray).
pub fn sample_grid(model: &mut AdganModel, classes: &[u16], n: usize, seed: u64) -> Result<RgbImage> {
    let s = model.arch.patch_size;
    let ch = model.arch.channels;
    let plane = s * s;
    let mut img = RgbImage::new((n * s) as u32, (classes.len() * s) as u32);
    for (row, &c) in classes.iter().enumerate() {
        let x = generate_class(model, c, n, seed)?;
        for col in 0..n {
            let sample = &x.data()[col * ch * plane..(col + 1) * ch * plane];
            for y in 0..s {
                for xx in 0..s {
                    let at = |b: usize| to_byte(sample[b.min(ch - 1) * plane + y * s + xx]);
                    let px = [at(0), at(1), at(2)];
                    img.put_pixel((col * s + xx) as u32, (row * s + y) as u32, image::Rgb(px));
                }
            }
        }
    }
    Ok(img)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean Euclidean distance over all unordered pairs.
pub fn mean_pairwise_distance(samples: &[&[f64]]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid(format!("pairwise distance needs at least 2 samples, got {n}")));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += dist(samples[i], samples[j]);
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Mean per-element variance across samples.
pub fn sample_variance(samples: &[&[f64]]) -> f64 {
    let n = samples.len() as f64;
    let d = samples.first().map_or(0, |s| s.len());
    if samples.len() < 2 || d == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..d {
        // Shifted by the first sample so identical columns give exactly 0.
        let x0 = samples[0][j];
        let m = samples.iter().map(|s| s[j] - x0).sum::<f64>() / n;
        total += samples.iter().map(|s| (s[j] - x0 - m).powi(2)).sum::<f64>() / (n - 1.0);
    }
    total / d as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearestReal {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub class: u16,
    pub n: usize,
    pub mean_pairwise_distance: f64,
    pub sample_variance: f64,
    /// Distance from each generated sample to its nearest real patch of the
    /// same class.
    pub nearest_real: Option<NearestReal>,
}

pub fn diversity_report(
    model: &mut AdganModel,
    class: u16,
    n: usize,
    seed: u64,
    real: Option<&PatchSet>,
) -> Result<DiversityReport> {
    if n < 2 {
        return Err(Error::invalid(format!("diversity needs n >= 2, got {n}")));
    }
    let x = generate_class(model, class, n, seed)?;
    let len = x.len() / n;
    let samples: Vec<&[f64]> = x.data().chunks(len).collect();
    let nearest_real = match real {
        Some(set) => {
            let reals: Vec<&[f64]> = (0..set.len())
                .filter(|&i| set.labels[i] == class)
                .map(|i| set.patch(i))
                .collect();
            if reals.is_empty() {
                None
            } else {
                let d: Vec<f64> = samples
                    .iter()
                    .map(|s| reals.iter().map(|r| dist(s, r)).fold(f64::INFINITY, f64::min))
                    .collect();
                Some(NearestReal {
                    mean: d.iter().sum::<f64>() / d.len() as f64,
                    min: d.iter().copied().fold(f64::INFINITY, f64::min),
                    max: d.iter().copied().fold(0.0, f64::max),
                })
            }
        }
        None => None,
    };
    Ok(DiversityReport {
        class,
        n,
        mean_pairwise_distance: mean_pairwise_distance(&samples)?,
        sample_variance: sample_variance(&samples),
        nearest_real,
    })
}

/// Within-class mean pairwise distance of real patches, using at most
/// `limit` patches per class (the first ones in set order).
pub fn real_within_class_distance(set: &PatchSet, class: u16, limit: usize) -> Result<f64> {
    let reals: Vec<&[f64]> = (0..set.len())
        .filter(|&i| set.labels[i] == class)
        .take(limit)
        .map(|i| set.patch(i))
        .collect();
    mean_pairwise_distance(&reals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn identical_samples_have_zero_distance() {
        let a = vec![0.1, -0.2, 0.3];
        let s: Vec<&[f64]> = vec![&a, &a, &a];
        assert_eq!(mean_pairwise_distance(&s).unwrap(), 0.0);
        assert_eq!(sample_variance(&s), 0.0);
        assert!(mean_pairwise_distance(&s[..1]).is_err());
    }

    #[test]
    fn permutation_invariant() {
        let mut r = rng::seeded(2);
        let v: Vec<Vec<f64>> = (0..6).map(|_| (0..10).map(|_| r.random::<f64>()).collect()).collect();
        let a: Vec<&[f64]> = v.iter().map(Vec::as_slice).collect();
        let b: Vec<&[f64]> = v.iter().rev().map(Vec::as_slice).collect();
        assert!((mean_pairwise_distance(&a).unwrap() - mean_pairwise_distance(&b).unwrap()).abs() < 1e-12);
    }
}
