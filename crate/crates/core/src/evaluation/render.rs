//! Class maps and sample grids as PNG.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::data::cube::LabelRaster;
use crate::error::{Error, Result};

/// RGB color per class id, index 0 = unlabeled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    pub colors: Vec<[u8; 3]>,
}

const BASE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

impl Palette {
    /// Black for class 0, a fixed 16-color table, then golden-angle hues.
    pub fn default_for(k: usize) -> Self {
        let mut colors = vec![[0, 0, 0]];
        for c in 0..k {
            if c < BASE.len() {
                colors.push(BASE[c]);
            } else {
                let hue = (c as f64 * 137.507_764) % 360.0;
                colors.push(hsv(hue, 0.75, 0.9));
            }
        }
        let mut p = Self { colors };
        p.dedupe();
        p
    }

    // Keeps colors distinct so maps stay invertible.
    fn dedupe(&mut self) {
        for i in 1..self.colors.len() {
            while self.colors[..i].contains(&self.colors[i]) {
                let c = &mut self.colors[i];
                c[2] = c[2].wrapping_add(1);
            }
        }
    }

    /// One `r g b` line per class id starting at 0.
    pub fn to_text(&self) -> String {
        self.colors
            .iter()
            .map(|c| format!("{} {} {}\n", c[0], c[1], c[2]))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut colors = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let rgb: std::result::Result<Vec<u8>, _> = parts.iter().map(|p| p.parse::<u8>()).collect();
            match rgb {
                Ok(v) if v.len() == 3 => colors.push([v[0], v[1], v[2]]),
                _ => {
                    return Err(Error::invalid(format!(
                        "palette line {}: expected three values 0-255, got `{line}`",
                        n + 1
                    )))
                }
            }
        }
        Ok(Self { colors })
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let q = |u: f64| ((u + m) * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

pub fn map_image(raster: &LabelRaster, palette: &Palette) -> Result<RgbImage> {
    if let Some(&l) = raster.labels.iter().find(|&&l| l as usize >= palette.colors.len()) {
        return Err(Error::invalid(format!(
            "palette has {} entries, raster uses class {l}",
            palette.colors.len()
        )));
    }
    let mut img = RgbImage::new(raster.width as u32, raster.height as u32);
    for (i, &l) in raster.labels.iter().enumerate() {
        let (x, y) = ((i % raster.width) as u32, (i / raster.width) as u32);
        img.put_pixel(x, y, image::Rgb(palette.colors[l as usize]));
    }
    Ok(img)
}

pub fn png_bytes(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    fs::write(path, png_bytes(img)?).map_err(|e| Error::io(path, e))
}

/// Writes the class map of `raster` as a PNG, one pixel per cell.
pub fn render_map(raster: &LabelRaster, palette: &Palette, path: &Path) -> Result<()> {
    write_png(path, &map_image(raster, palette)?)
}

/// Recovers class ids from a rendered map. Colors absent from the palette
/// are rejected.
pub fn invert_map(img: &RgbImage, palette: &Palette) -> Result<LabelRaster> {
    let mut labels = Vec::with_capacity((img.width() * img.height()) as usize);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let c = img.get_pixel(x, y).0;
            let id = palette
                .colors
                .iter()
                .position(|p| *p == c)
                .ok_or_else(|| Error::invalid(format!("color {c:?} at ({x}, {y}) is not in the palette")))?;
            labels.push(id as u16);
        }
    }
    LabelRaster::new(img.width() as usize, img.height() as usize, labels)
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}
