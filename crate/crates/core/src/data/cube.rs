//! In-memory cubes and the on-disk HSC container.
//!
//! An HSC container is a directory with:
//! - `meta.json`: `{width, height, bands, dtype: "f32", version: 1, class_names?}`
//! - `cube.bin`: little-endian f32, band-sequential, row-major within a band
//! - `labels.bin`: little-endian u16, row-major, 0 = unlabeled

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const HSC_VERSION: u32 = 1;

/// Spectral cube stored band-sequential: `data[b·h·w + y·w + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub data: Vec<f64>,
}

impl HsiCube {
    pub fn new(width: usize, height: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::invalid("cube dimensions must be positive"));
        }
        if data.len() != width * height * bands {
            return Err(Error::ShapeMismatch {
                op: "HsiCube::new",
                lhs: vec![bands, height, width],
                rhs: vec![data.len()],
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cube element {i}")));
        }
        Ok(Self {
            width,
            height,
            bands,
            data,
        })
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn band(&self, b: usize) -> &[f64] {
        &self.data[b * self.pixels()..(b + 1) * self.pixels()]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f64] {
        let p = self.pixels();
        &mut self.data[b * p..(b + 1) * p]
    }

    pub fn at(&self, band: usize, y: usize, x: usize) -> f64 {
        self.data[band * self.pixels() + y * self.width + x]
    }

    /// Spectrum of pixel `(y, x)`.
    pub fn spectrum(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.bands).map(|b| self.at(b, y, x)).collect()
    }

    /// Bytes of `cube.bin` for this cube.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()
    }

    pub fn sha256(&self) -> String {
        hex_digest(&self.to_le_bytes())
    }
}

/// Per-pixel class ids, 0 = unlabeled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u16>,
}

impl LabelRaster {
    pub fn new(width: usize, height: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::ShapeMismatch {
                op: "LabelRaster::new",
                lhs: vec![height, width],
                rhs: vec![labels.len()],
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn unlabeled(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    pub fn num_classes(&self) -> u16 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Pixel count per class id `1..=K` (index 0 holds class 1).
    pub fn class_counts(&self) -> Vec<usize> {
        let k = self.num_classes() as usize;
        let mut counts = vec![0; k];
        for &l in &self.labels {
            if l > 0 {
                counts[l as usize - 1] += 1;
            }
        }
        counts
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.labels.iter().flat_map(|l| l.to_le_bytes()).collect()
    }

    pub fn sha256(&self) -> String {
        hex_digest(&self.to_le_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HscMeta {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub dtype: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

/// A cube with its labels, as stored in one HSC container.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiDataset {
    pub cube: HsiCube,
    pub labels: LabelRaster,
    pub class_names: Option<Vec<String>>,
}

impl HsiDataset {
    pub fn new(cube: HsiCube, labels: LabelRaster) -> Result<Self> {
        if cube.width != labels.width || cube.height != labels.height {
            return Err(Error::ShapeMismatch {
                op: "HsiDataset::new",
                lhs: vec![cube.height, cube.width],
                rhs: vec![labels.height, labels.width],
            });
        }
        Ok(Self {
            cube,
            labels,
            class_names: None,
        })
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `ds` as an HSC container at `dir` (created if needed).
pub fn save_hsc(dir: &Path, ds: &HsiDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = HscMeta {
        width: ds.cube.width,
        height: ds.cube.height,
        bands: ds.cube.bands,
        dtype: "f32".into(),
        version: HSC_VERSION,
        class_names: ds.class_names.clone(),
    };
    write(&dir.join("meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    write(&dir.join("cube.bin"), &ds.cube.to_le_bytes())?;
    write(&dir.join("labels.bin"), &ds.labels.to_le_bytes())?;
    Ok(())
}

/// Loads and validates an HSC container.
pub fn load_hsc(dir: &Path) -> Result<HsiDataset> {
    let meta_path = dir.join("meta.json");
    let meta: HscMeta = serde_json::from_slice(&read(&meta_path)?)
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
    if meta.version != HSC_VERSION {
        return Err(Error::format(
            &meta_path,
            format!("unsupported version {} (expected {HSC_VERSION})", meta.version),
        ));
    }
    if meta.dtype != "f32" {
        return Err(Error::format(&meta_path, format!("unsupported dtype `{}`", meta.dtype)));
    }
    if meta.width == 0 || meta.height == 0 || meta.bands == 0 {
        return Err(Error::format(&meta_path, "dimensions must be positive"));
    }
    let pixels = meta.width * meta.height;

    let cube_path = dir.join("cube.bin");
    let bytes = read(&cube_path)?;
    let expected = pixels * meta.bands * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            &cube_path,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(&cube_path, format!("non-finite value at element {i}")));
    }

    let labels_path = dir.join("labels.bin");
    let bytes = read(&labels_path)?;
    if bytes.len() != pixels * 2 {
        return Err(Error::format(
            &labels_path,
            format!("expected {} bytes, found {}", pixels * 2, bytes.len()),
        ));
    }
    let labels: Vec<u16> = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    if let Some(names) = &meta.class_names {
        let max = labels.iter().copied().max().unwrap_or(0) as usize;
        if max > names.len() {
            return Err(Error::format(
                &labels_path,
                format!("label {max} exceeds the {} class names", names.len()),
            ));
        }
    }

    Ok(HsiDataset {
        cube: HsiCube::new(meta.width, meta.height, meta.bands, data)?,
        labels: LabelRaster::new(meta.width, meta.height, labels)?,
        class_names: meta.class_names,
    })
}
