//! Dense kernels behind the convolution ops: im2col/col2im lowering and a
//! thin GEMM wrapper (ndarray dispatches `f32`/`f64` to `matrixmultiply`).

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use crate::scalar::Real;

/// `c = a' * b' + beta * c` where `a'`/`b'` are optionally transposed.
/// `a` is stored `[a_rows, a_cols]`, `b` is stored `[b_rows, b_cols]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    a: &[T],
    a_rows: usize,
    a_cols: usize,
    trans_a: bool,
    b: &[T],
    b_rows: usize,
    b_cols: usize,
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    let a = ArrayView2::from_shape((a_rows, a_cols), a).expect("gemm lhs shape");
    let b = ArrayView2::from_shape((b_rows, b_cols), b).expect("gemm rhs shape");
    let a = if trans_a { a.reversed_axes() } else { a };
    let b = if trans_b { b.reversed_axes() } else { b };
    let (m, n) = (a.nrows(), b.ncols());
    let mut c = ArrayViewMut2::from_shape((m, n), c).expect("gemm out shape");
    general_mat_mul(T::one(), &a, &b, beta, &mut c);
}

/// Geometry of a strided, zero-padded 2-D cross-correlation mapping
/// `[n, c, h, w]` to `[n, k, oh, ow]` with a `[k, c, kh, kw]` kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    /// Rows of the lowered patch matrix.
    pub fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    /// Columns of the lowered patch matrix.
    pub fn cols(&self) -> usize {
        self.n * self.oh * self.ow
    }
}

/// Lower `[n, c, h, w]` into a `[c*kh*kw, n*oh*ow]` patch matrix.
pub(crate) fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let cols = g.cols();
    let plane = g.oh * g.ow;
    let mut out = vec![T::zero(); g.patch() * cols];
    for ci in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst_row = &mut out[row * cols..(row + 1) * cols];
                for ni in 0..g.n {
                    let src = &x[(ni * g.c + ci) * g.h * g.w..][..g.h * g.w];
                    let dst = &mut dst_row[ni * plane..(ni + 1) * plane];
                    for oi in 0..g.oh {
                        let ih = (oi * g.stride + ki) as isize - g.pad as isize;
                        if ih < 0 || ih >= g.h as isize {
                            continue;
                        }
                        let src_row = &src[ih as usize * g.w..][..g.w];
                        let dst_row = &mut dst[oi * g.ow..(oi + 1) * g.ow];
                        for (oj, d) in dst_row.iter_mut().enumerate() {
                            let iw = (oj * g.stride + kj) as isize - g.pad as isize;
                            if iw >= 0 && iw < g.w as isize {
                                *d = src_row[iw as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatter-add a patch matrix back to `[n, c, h, w]`.
pub(crate) fn col2im<T: Real>(cols_mat: &[T], g: &ConvGeom) -> Vec<T> {
    let cols = g.cols();
    let plane = g.oh * g.ow;
    let mut out = vec![T::zero(); g.n * g.c * g.h * g.w];
    for ci in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src_row = &cols_mat[row * cols..(row + 1) * cols];
                for ni in 0..g.n {
                    let dst = &mut out[(ni * g.c + ci) * g.h * g.w..][..g.h * g.w];
                    let src = &src_row[ni * plane..(ni + 1) * plane];
                    for oi in 0..g.oh {
                        let ih = (oi * g.stride + ki) as isize - g.pad as isize;
                        if ih < 0 || ih >= g.h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[ih as usize * g.w..][..g.w];
                        let src_row = &src[oi * g.ow..(oi + 1) * g.ow];
                        for (oj, &s) in src_row.iter().enumerate() {
                            let iw = (oj * g.stride + kj) as isize - g.pad as isize;
                            if iw >= 0 && iw < g.w as isize {
                                dst_row[iw as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// `[n, k, p]` -> `[k, n*p]`.
pub(crate) fn batch_to_channel_major<T: Real>(x: &[T], n: usize, k: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ni in 0..n {
        for ki in 0..k {
            out[ki * n * p + ni * p..][..p].copy_from_slice(&x[(ni * k + ki) * p..][..p]);
        }
    }
    out
}

/// `[k, n*p]` -> `[n, k, p]`.
pub(crate) fn channel_to_batch_major<T: Real>(x: &[T], n: usize, k: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ni in 0..n {
        for ki in 0..k {
            out[(ni * k + ki) * p..][..p].copy_from_slice(&x[ki * n * p + ni * p..][..p]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3x4
        let mut c = vec![0.0; 8];
        gemm(&a, 2, 3, false, &b, 3, 4, false, 0.0, &mut c);
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], want);
            }
        }
        // transposed lhs: (3x2)^T stored as 3x2
        let at: Vec<f64> = (0..3)
            .flat_map(|k| (0..2).map(move |i| (i * 3 + k) as f64))
            .collect();
        let mut c2 = vec![0.0; 8];
        gemm(&at, 3, 2, true, &b, 3, 4, false, 0.0, &mut c2);
        assert_eq!(c, c2);
    }

    #[test]
    fn permutations_are_inverse() {
        let x: Vec<f64> = (0..24).map(|v| v as f64).collect();
        let y = batch_to_channel_major(&x, 2, 3, 4);
        assert_eq!(channel_to_batch_major(&y, 2, 3, 4), x);
    }
}
