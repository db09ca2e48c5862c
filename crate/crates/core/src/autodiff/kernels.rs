//! Raw convolution kernels: im2col/col2im plus a strided dgemm wrapper.
//!
//! Layouts are NCHW for activations and OIHW for kernels. A transposed
//! convolution reuses the geometry of the forward convolution whose
//! input-gradient it computes.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Upper bound on op-level worker threads, from `ADGAN_THREADS` (default 1).
pub fn op_threads() -> usize {
    static THREADS: OnceLock<usize> = OnceLock::new();
    *THREADS.get_or_init(|| {
        std::env::var("ADGAN_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or(1)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SendPtr(*mut f64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

/// `C = A·B + beta·C` with `A: m×k`, `B: k×n`, `C: m×n`, arbitrary strides.
///
/// Work is split over column blocks of `C` when more than one thread is
/// allowed. Each output element sees the same reduction order regardless of
/// the split, so results do not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let threads = op_threads().min(n / 64).max(1);
    let c_ptr = SendPtr(c.as_mut_ptr());
    // SAFETY: callers pass slices whose extents cover every strided index
    // touched for the given m, k, n; column blocks of C are disjoint.
    let run = |col0: usize, cols: usize| unsafe {
        let cp = c_ptr;
        matrixmultiply::dgemm(
            m,
            k,
            cols,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr().offset(col0 as isize * csb),
            rsb,
            csb,
            beta,
            cp.0.offset(col0 as isize * csc),
            rsc,
            csc,
        );
    };
    if threads == 1 {
        run(0, n);
        return;
    }
    let chunk = n.div_ceil(threads);
    std::thread::scope(|s| {
        for t in 0..threads {
            let col0 = t * chunk;
            if col0 >= n {
                break;
            }
            let cols = chunk.min(n - col0);
            s.spawn(move || run(col0, cols));
        }
    });
}

/// Geometry of a 2-d cross-correlation `input (n,c_in,h,w) -> output (n,c_out,oh,ow)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn for_conv(input: [usize; 4], kernel: [usize; 4], stride: usize, pad: usize) -> Result<Self> {
        let [n, c, h, w] = input;
        let [o, i, kh, kw] = kernel;
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        if c != i {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::ShapeMismatch {
                op: "conv2d (kernel larger than padded input)",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        Ok(Self {
            n,
            c_in: c,
            h,
            w,
            c_out: o,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        })
    }

    /// Geometry of the convolution whose input-gradient is the transposed
    /// convolution of `input` by `kernel`. Kernel layout is shared: its first
    /// axis matches the channels of `input`.
    pub fn for_transpose(input: [usize; 4], kernel: [usize; 4], stride: usize, pad: usize) -> Result<Self> {
        let [n, c, h, w] = input;
        let [o, i, kh, kw] = kernel;
        if stride == 0 {
            return Err(Error::invalid("conv_transpose2d stride must be positive"));
        }
        if c != o {
            return Err(Error::ShapeMismatch {
                op: "conv_transpose2d",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        let full_h = (h - 1) * stride + kh;
        let full_w = (w - 1) * stride + kw;
        if full_h <= 2 * pad || full_w <= 2 * pad {
            return Err(Error::ShapeMismatch {
                op: "conv_transpose2d (padding removes the whole output)",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        Ok(Self {
            n,
            c_in: i,
            h: full_h - 2 * pad,
            w: full_w - 2 * pad,
            c_out: o,
            kh,
            kw,
            stride,
            pad,
            oh: h,
            ow: w,
        })
    }

    pub fn in_plane(&self) -> usize {
        self.h * self.w
    }

    pub fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    pub fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.n * self.out_plane()
    }
}

/// Unfolds `x (n,c_in,h,w)` into `[c_in·kh·kw, n·oh·ow]`.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let ncols = g.col_cols();
    let p = g.out_plane();
    let mut cols = vec![0.0; g.col_rows() * ncols];
    for c in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst_row = &mut cols[row * ncols..(row + 1) * ncols];
                for n in 0..g.n {
                    let src = &x[(n * g.c_in + c) * g.in_plane()..][..g.in_plane()];
                    let dst = &mut dst_row[n * p..(n + 1) * p];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * g.w..][..g.w];
                        let dst_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: folds `[c_in·kh·kw, n·oh·ow]` back into `(n,c_in,h,w)`.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let ncols = g.col_cols();
    let p = g.out_plane();
    let mut x = vec![0.0; g.n * g.c_in * g.in_plane()];
    for c in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src_row = &cols[row * ncols..(row + 1) * ncols];
                for n in 0..g.n {
                    let dst = &mut x[(n * g.c_in + c) * g.in_plane()..][..g.in_plane()];
                    let src = &src_row[n * p..(n + 1) * p];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[iy as usize * g.w..][..g.w];
                        let src_row = &src[oy * g.ow..(oy + 1) * g.ow];
                        for (ox, s) in src_row.iter().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst_row[ix as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// `(n, c, p)` -> `(c, n·p)`.
pub(crate) fn nchw_to_cm(x: &[f64], n: usize, c: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ni in 0..n {
        for ci in 0..c {
            out[ci * n * p + ni * p..][..p].copy_from_slice(&x[(ni * c + ci) * p..][..p]);
        }
    }
    out
}

/// `(c, n·p)` -> `(n, c, p)`.
pub(crate) fn cm_to_nchw(x: &[f64], n: usize, c: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ni in 0..n {
        for ci in 0..c {
            out[(ni * c + ci) * p..][..p].copy_from_slice(&x[ci * n * p + ni * p..][..p]);
        }
    }
    out
}

/// Returns the output and the unfolded input (kept for the backward pass).
pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], g: &ConvGeom) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(x, g);
    let (m, k, n) = (g.c_out, g.col_rows(), g.col_cols());
    let mut out_cm = vec![0.0; m * n];
    gemm(m, k, n, w, k as isize, 1, &cols, n as isize, 1, &mut out_cm, n as isize, 1, 0.0);
    (cm_to_nchw(&out_cm, g.n, g.c_out, g.out_plane()), cols)
}

/// Gradients of a convolution with respect to its input and kernel.
pub(crate) fn conv2d_backward(
    dout: &[f64],
    w: &[f64],
    cols: &[f64],
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let (m, k, n) = (g.c_out, g.col_rows(), g.col_cols());
    let dout_cm = nchw_to_cm(dout, g.n, g.c_out, g.out_plane());
    let dw = need_dw.then(|| {
        let mut dw = vec![0.0; m * k];
        // dW = dOut · colsᵀ
        gemm(m, n, k, &dout_cm, n as isize, 1, cols, 1, n as isize, &mut dw, k as isize, 1, 0.0);
        dw
    });
    let dx = need_dx.then(|| {
        let mut dcols = vec![0.0; k * n];
        // dCols = Wᵀ · dOut
        gemm(k, m, n, w, 1, k as isize, &dout_cm, n as isize, 1, &mut dcols, n as isize, 1, 0.0);
        col2im(&dcols, g)
    });
    (dx, dw)
}

/// Transposed convolution: the input-gradient map of the convolution `g`.
/// `x` has shape `(n, c_out, oh, ow)` and the result `(n, c_in, h, w)`.
pub(crate) fn conv_transpose2d_forward(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (m, k, n) = (g.c_out, g.col_rows(), g.col_cols());
    let x_cm = nchw_to_cm(x, g.n, g.c_out, g.out_plane());
    let mut cols = vec![0.0; k * n];
    gemm(k, m, n, w, 1, k as isize, &x_cm, n as isize, 1, &mut cols, n as isize, 1, 0.0);
    col2im(&cols, g)
}

pub(crate) fn conv_transpose2d_backward(
    dout: &[f64],
    x: &[f64],
    w: &[f64],
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let (m, k, n) = (g.c_out, g.col_rows(), g.col_cols());
    let dcols = im2col(dout, g);
    let dx = need_dx.then(|| {
        let mut dx_cm = vec![0.0; m * n];
        gemm(m, k, n, w, k as isize, 1, &dcols, n as isize, 1, &mut dx_cm, n as isize, 1, 0.0);
        cm_to_nchw(&dx_cm, g.n, g.c_out, g.out_plane())
    });
    let dw = need_dw.then(|| {
        let x_cm = nchw_to_cm(x, g.n, g.c_out, g.out_plane());
        let mut dw = vec![0.0; m * k];
        gemm(m, n, k, &x_cm, n as isize, 1, &dcols, 1, n as isize, &mut dw, k as isize, 1, 0.0);
        dw
    });
    (dx, dw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_product() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i % 7) as f64 - 3.0).collect();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, k as isize, 1, &b, n as isize, 1, &mut c, n as isize, 1, 0.0);
        for i in 0..m {
            for j in 0..n {
                let expect: f64 = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
                assert_eq!(c[i * n + j], expect);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom::for_conv([2, 2, 5, 4], [3, 2, 3, 2], 2, 1).unwrap();
        let x: Vec<f64> = (0..2 * 2 * 5 * 4).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..g.col_rows() * g.col_cols())
            .map(|i| ((i * 13) % 7) as f64 - 3.0)
            .collect();
        let lhs: f64 = im2col(&x, &g).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, &g)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn transpose_geometry_inverts_conv_shape() {
        let g = ConvGeom::for_transpose([1, 4, 1, 1], [4, 7, 4, 4], 1, 0).unwrap();
        assert_eq!((g.h, g.w, g.c_in), (4, 4, 7));
        let g = ConvGeom::for_transpose([1, 4, 6, 6], [4, 2, 5, 5], 2, 1).unwrap();
        assert_eq!((g.h, g.w), (13, 13));
        let back = ConvGeom::for_conv([1, 2, 13, 13], [4, 2, 5, 5], 2, 1).unwrap();
        assert_eq!((back.oh, back.ow), (6, 6));
    }
}
