//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the library's kernels.

#![allow(dead_code)]

use adgan_core::data::{HsiCube, LabelRaster};

/// Direct-loop NCHW convolution.
pub fn naive_conv2d(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 4],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = xs;
    let [o, ci, kh, kw] = ws;
    assert_eq!(c, ci);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for b in 0..n {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = 0.0;
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xx * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                s += x[((b * c + ic) * h + iy as usize) * wd + ix as usize]
                                    * w[((oc * c + ic) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((b * o + oc) * oh + y) * ow + xx] = s;
                }
            }
        }
    }
    (out, [n, o, oh, ow])
}

/// Transposed convolution by scattering each input element; weights are
/// `(in, out, kh, kw)`.
pub fn naive_conv_transpose2d(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 4],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = xs;
    let [ci, o, kh, kw] = ws;
    assert_eq!(c, ci);
    let oh = (h - 1) * stride + kh - 2 * pad;
    let ow = (wd - 1) * stride + kw - 2 * pad;
    let mut out = vec![0.0; n * o * oh * ow];
    for b in 0..n {
        for ic in 0..c {
            for y in 0..h {
                for xx in 0..wd {
                    let v = x[((b * c + ic) * h + y) * wd + xx];
                    for oc in 0..o {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let oy = (y * stride + ky) as isize - pad as isize;
                                let ox = (xx * stride + kx) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                out[((b * o + oc) * oh + oy as usize) * ow + ox as usize] +=
                                    v * w[((ic * o + oc) * kh + ky) * kw + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    (out, [n, o, oh, ow])
}

/// Brute-force AdapDrop on one plane: min-max normalize, then for every
/// block repeatedly pick the largest remaining value (lowest index on ties)
/// until `ceil(k·b²/100)` are marked, then rescale by total/kept.
/// `k_percent` must be an integer percentage.
pub fn brute_adapdrop(
    plane: &[f64],
    h: usize,
    w: usize,
    centers: &[(usize, usize)],
    b: usize,
    k_percent: u32,
) -> (Vec<f64>, Vec<bool>) {
    let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let normed: Vec<f64> = if hi > lo {
        plane.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; plane.len()]
    };
    let per_block = ((k_percent as usize) * b * b).div_ceil(100);
    let mut keep = vec![true; h * w];
    let r = b / 2;
    for &(cy, cx) in centers {
        let mut cells = Vec::new();
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                cells.push(y * w + x);
            }
        }
        let mut taken = vec![false; cells.len()];
        for _ in 0..per_block {
            let mut best: Option<usize> = None;
            for (j, &i) in cells.iter().enumerate() {
                if taken[j] {
                    continue;
                }
                best = match best {
                    None => Some(j),
                    Some(bj) => {
                        let bi = cells[bj];
                        if normed[i] > normed[bi] || (normed[i] == normed[bi] && i < bi) {
                            Some(j)
                        } else {
                            Some(bj)
                        }
                    }
                };
            }
            let j = best.unwrap();
            taken[j] = true;
            keep[cells[j]] = false;
        }
    }
    let kept = keep.iter().filter(|&&k| k).count();
    let scale = if kept == 0 { 0.0 } else { (h * w) as f64 / kept as f64 };
    let out = normed
        .iter()
        .zip(&keep)
        .map(|(v, &k)| if k { v * scale } else { 0.0 })
        .collect();
    (out, keep)
}

/// OA, AA, κ, total and per-class support from a row-major `k × k`
/// confusion matrix (rows = reference), floating point throughout.
pub struct OracleMetrics {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    pub total: u64,
    pub support: Vec<u64>,
    pub per_class: Vec<Option<f64>>,
}

pub fn oracle_metrics(k: usize, m: &[u64]) -> OracleMetrics {
    let total: u64 = m.iter().sum();
    let support: Vec<u64> = (0..k).map(|i| (0..k).map(|j| m[i * k + j]).sum()).collect();
    let cols: Vec<u64> = (0..k).map(|j| (0..k).map(|i| m[i * k + j]).sum()).collect();
    let diag: u64 = (0..k).map(|i| m[i * k + i]).sum();
    let t = total as f64;
    let oa = diag as f64 / t;
    let per_class: Vec<Option<f64>> = (0..k)
        .map(|i| (support[i] > 0).then(|| m[i * k + i] as f64 / support[i] as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let aa = present.iter().sum::<f64>() / present.len() as f64;
    let pe: f64 = (0..k).map(|i| support[i] as f64 * cols[i] as f64).sum::<f64>() / (t * t);
    let kappa = if pe == 1.0 {
        if oa == 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (oa - pe) / (1.0 - pe)
    };
    OracleMetrics {
        oa,
        aa,
        kappa,
        total,
        support,
        per_class,
    }
}

/// Leading eigenvector of a symmetric matrix by power iteration.
pub fn power_iteration(a: &[Vec<f64>], iters: usize) -> (f64, Vec<f64>) {
    let n = a.len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let mut nv = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                nv[i] += a[i][j] * v[j];
            }
        }
        let norm = nv.iter().map(|x| x * x).sum::<f64>().sqrt();
        lambda = norm;
        v = nv.into_iter().map(|x| x / norm).collect();
    }
    (lambda, v)
}

/// Sample covariance of the bands of `cube`.
pub fn band_covariance(cube: &HsiCube) -> Vec<Vec<f64>> {
    let p = cube.pixels();
    let means: Vec<f64> = (0..cube.bands).map(|b| cube.band(b).iter().sum::<f64>() / p as f64).collect();
    let mut cov = vec![vec![0.0; cube.bands]; cube.bands];
    for i in 0..cube.bands {
        for j in 0..cube.bands {
            let (bi, bj) = (cube.band(i), cube.band(j));
            cov[i][j] = (0..p).map(|q| (bi[q] - means[i]) * (bj[q] - means[j])).sum::<f64>() / (p - 1) as f64;
        }
    }
    cov
}

/// Nearest-class-centroid accuracy on the labeled pixels of a cube.
pub fn nearest_centroid_accuracy(cube: &HsiCube, labels: &LabelRaster) -> f64 {
    let k = labels.num_classes() as usize;
    let mut sums = vec![vec![0.0; cube.bands]; k];
    let mut counts = vec![0usize; k];
    for y in 0..cube.height {
        for x in 0..cube.width {
            let l = labels.get(y, x) as usize;
            if l == 0 {
                continue;
            }
            counts[l - 1] += 1;
            for (b, s) in sums[l - 1].iter_mut().enumerate() {
                *s += cube.at(b, y, x);
            }
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c.max(1) as f64;
        }
    }
    let (mut right, mut total) = (0usize, 0usize);
    for y in 0..cube.height {
        for x in 0..cube.width {
            let l = labels.get(y, x) as usize;
            if l == 0 {
                continue;
            }
            let spec = cube.spectrum(y, x);
            let best = (0..k)
                .min_by(|&a, &b| {
                    let da: f64 = spec.iter().zip(&sums[a]).map(|(p, q)| (p - q).powi(2)).sum();
                    let db: f64 = spec.iter().zip(&sums[b]).map(|(p, q)| (p - q).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            right += usize::from(best + 1 == l);
            total += 1;
        }
    }
    right as f64 / total as f64
}
