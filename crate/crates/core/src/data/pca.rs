//! Spectral PCA and per-band range normalization.

use nalgebra::{DMatrix, SymmetricEigen};

use super::cube::HsiCube;
use crate::error::{Error, Result};

/// Principal axes of the band covariance, sorted by nonincreasing variance.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Unit eigenvectors, one per row (`bands` rows). The largest-magnitude
    /// loading of each is positive.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn fit(cube: &HsiCube) -> Result<Self> {
        let p = cube.pixels();
        if p < 2 {
            return Err(Error::invalid("PCA needs at least two pixels"));
        }
        let bands = cube.bands;
        let mean: Vec<f64> = (0..bands)
            .map(|b| cube.band(b).iter().sum::<f64>() / p as f64)
            .collect();
        let centered = DMatrix::from_fn(bands, p, |b, i| cube.band(b)[i] - mean[b]);
        let cov = (&centered * centered.transpose()) / (p - 1) as f64;
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..bands).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut components = Vec::with_capacity(bands);
        let mut eigenvalues = Vec::with_capacity(bands);
        for &j in &order {
            let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
            orient(&mut v);
            components.push(v);
            eigenvalues.push(eig.eigenvalues[j].max(0.0));
        }
        Ok(Self {
            mean,
            components,
            eigenvalues,
        })
    }

    /// Projects `cube` onto the first `n` components.
    pub fn project(&self, cube: &HsiCube, n: usize) -> Result<HsiCube> {
        if n == 0 || n > self.components.len() {
            return Err(Error::invalid(format!(
                "requested {n} components from a {}-band cube",
                self.components.len()
            )));
        }
        let p = cube.pixels();
        let mut data = vec![0.0; n * p];
        for (c, comp) in self.components[..n].iter().enumerate() {
            let out = &mut data[c * p..(c + 1) * p];
            for (b, &load) in comp.iter().enumerate() {
                let mu = self.mean[b];
                for (o, &v) in out.iter_mut().zip(cube.band(b)) {
                    *o += load * (v - mu);
                }
            }
        }
        HsiCube::new(cube.width, cube.height, n, data)
    }
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
pub(crate) fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Mean-centered projection of `cube` onto its top `components` principal axes.
pub fn pca_reduce(cube: &HsiCube, components: usize) -> Result<HsiCube> {
    if components > cube.bands {
        return Err(Error::invalid(format!(
            "cannot keep {components} components of a {}-band cube",
            cube.bands
        )));
    }
    PcaModel::fit(cube)?.project(cube, components)
}

/// Maps each band affinely onto `[-0.5, 0.5]`; constant bands become 0.
pub fn normalize_range(cube: &HsiCube) -> HsiCube {
    let mut out = cube.clone();
    for b in 0..cube.bands {
        let band = out.band_mut(b);
        let lo = band.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = band.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            let range = hi - lo;
            for v in band.iter_mut() {
                *v = if *v == hi { 0.5 } else { (*v - lo) / range - 0.5 };
            }
        } else {
            band.fill(0.0);
        }
    }
    out
}
