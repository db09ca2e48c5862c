use super::cube::{HsiCube, LabelRaster};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Square patches centered on labeled pixels, stored `(n, bands, s, s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub size: usize,
    pub bands: usize,
    pub data: Vec<f64>,
    pub labels: Vec<u16>,
    /// `(y, x)` of each patch center.
    pub centers: Vec<(usize, usize)>,
}

impl PatchSet {
    pub fn empty(size: usize, bands: usize) -> Self {
        Self {
            size,
            bands,
            data: Vec::new(),
            labels: Vec::new(),
            centers: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn patch_len(&self) -> usize {
        self.bands * self.size * self.size
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.data[i * self.patch_len()..(i + 1) * self.patch_len()]
    }

    pub fn num_classes(&self) -> u16 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Patches at `indices` as an NCHW batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.patch_len());
        for &i in indices {
            data.extend_from_slice(self.patch(i));
        }
        Tensor::new(vec![indices.len(), self.bands, self.size, self.size], data)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::empty(self.size, self.bands);
        for &i in indices {
            out.data.extend_from_slice(self.patch(i));
            out.labels.push(self.labels[i]);
            out.centers.push(self.centers[i]);
        }
        out
    }
}

/// Reflection about the edge pixel (edge not repeated): -1 -> 1, n -> n-2.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

pub(crate) fn check_patch_size(cube: &HsiCube, size: usize) -> Result<()> {
    if size % 2 == 0 {
        return Err(Error::invalid(format!("patch size must be odd, got {size}")));
    }
    if size > 2 * cube.width.min(cube.height) {
        return Err(Error::invalid(format!(
            "patch size {size} exceeds twice the smaller image side ({}x{})",
            cube.width, cube.height
        )));
    }
    Ok(())
}

/// Writes the `bands × size × size` window centered at `(y, x)` into `out`,
/// mirror-padding at the borders.
pub fn extract_patch(cube: &HsiCube, y: usize, x: usize, size: usize, out: &mut [f64]) {
    let half = (size / 2) as isize;
    let mut o = 0;
    for b in 0..cube.bands {
        let band = cube.band(b);
        for dy in -half..=half {
            let yy = reflect(y as isize + dy, cube.height);
            for dx in -half..=half {
                let xx = reflect(x as isize + dx, cube.width);
                out[o] = band[yy * cube.width + xx];
                o += 1;
            }
        }
    }
}

/// One patch per labeled pixel, ordered by row-major center index.
pub fn extract_patches(cube: &HsiCube, labels: &LabelRaster, size: usize) -> Result<PatchSet> {
    if cube.width != labels.width || cube.height != labels.height {
        return Err(Error::ShapeMismatch {
            op: "extract_patches",
            lhs: vec![cube.height, cube.width],
            rhs: vec![labels.height, labels.width],
        });
    }
    check_patch_size(cube, size)?;
    let mut set = PatchSet::empty(size, cube.bands);
    let plen = set.patch_len();
    for y in 0..cube.height {
        for x in 0..cube.width {
            let l = labels.get(y, x);
            if l == 0 {
                continue;
            }
            let start = set.data.len();
            set.data.resize(start + plen, 0.0);
            extract_patch(cube, y, x, size, &mut set.data[start..]);
            set.labels.push(l);
            set.centers.push((y, x));
        }
    }
    Ok(set)
}
