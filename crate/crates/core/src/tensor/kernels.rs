//! Raw forward/backward kernels on flat slices.
//!
//! These carry no shape bookkeeping of their own; the graph validates
//! shapes before calling them.

use alloc::vec::Vec;

use super::{gemm, Real};

/// Output length of a convolution along one axis, `None` when the
/// kernel does not fit.
pub fn conv_out_dim(n: usize, f: usize, pad: usize, stride: usize) -> Option<usize> {
    if stride == 0 || n + 2 * pad < f {
        return None;
    }
    Some((n + 2 * pad - f) / stride + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub f: usize,
    pub pad: usize,
    pub stride: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(
        c_in: usize,
        h: usize,
        w: usize,
        c_out: usize,
        f: usize,
        pad: usize,
        stride: usize,
    ) -> Option<Self> {
        let ho = conv_out_dim(h, f, pad, stride)?;
        let wo = conv_out_dim(w, f, pad, stride)?;
        Some(Self {
            c_in,
            h,
            w,
            c_out,
            f,
            pad,
            stride,
            ho,
            wo,
        })
    }

    #[inline]
    fn is_pointwise(&self) -> bool {
        self.f == 1 && self.pad == 0 && self.stride == 1
    }

    #[inline]
    fn patch(&self) -> usize {
        self.c_in * self.f * self.f
    }

    #[inline]
    fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }
}

/// Unfolds `x[c_in, h, w]` into `cols[c_in*f*f, ho*wo]`.
pub fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let n = g.out_pixels();
    for ci in 0..g.c_in {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.f {
            for kx in 0..g.f {
                let row = (ci * g.f + ky) * g.f + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.ho {
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out_row.iter_mut().for_each(|v| *v = T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.stride == 1 {
                        // valid ox satisfy 0 <= ox + kx - pad < w
                        let lo = g.pad.saturating_sub(kx).min(g.wo);
                        let hi = (g.w + g.pad).saturating_sub(kx).min(g.wo).max(lo);
                        out_row[..lo].iter_mut().for_each(|v| *v = T::ZERO);
                        out_row[hi..].iter_mut().for_each(|v| *v = T::ZERO);
                        let start = lo + kx - g.pad;
                        out_row[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for (ox, v) in out_row.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            *v = if ix < 0 || ix >= g.w as isize {
                                T::ZERO
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into `dx`.
pub fn col2im<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let n = g.out_pixels();
    for ci in 0..g.c_in {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.f {
            for kx in 0..g.f {
                let row = (ci * g.f + ky) * g.f + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let in_row = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let col_row = &src[oy * g.wo..(oy + 1) * g.wo];
                    if g.stride == 1 {
                        let lo = g.pad.saturating_sub(kx).min(g.wo);
                        let hi = (g.w + g.pad).saturating_sub(kx).min(g.wo).max(lo);
                        let start = lo + kx - g.pad;
                        for (d, &v) in in_row[start..start + (hi - lo)]
                            .iter_mut()
                            .zip(&col_row[lo..hi])
                        {
                            *d += v;
                        }
                        continue;
                    }
                    for (ox, &v) in col_row.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            in_row[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Grows `buf` to at least `len` elements and returns that prefix. Old
/// contents are kept, so callers must overwrite what they read.
pub fn scratch<T: Real>(buf: &mut Vec<T>, len: usize) -> &mut [T] {
    if buf.len() < len {
        buf.resize(len, T::ZERO);
    }
    &mut buf[..len]
}

/// Cross-correlation `y[co] = sum_ci k[co,ci] * x[ci] + b[co]`.
/// `buf` is reusable im2col scratch space.
pub fn conv2d_forward<T: Real>(
    x: &[T],
    kernel: &[T],
    bias: &[T],
    g: &ConvGeom,
    buf: &mut Vec<T>,
) -> Vec<T> {
    let n = g.out_pixels();
    let mut y = Vec::with_capacity(g.c_out * n);
    for &b in &bias[..g.c_out] {
        y.extend(core::iter::repeat(b).take(n));
    }
    if g.is_pointwise() {
        gemm(false, false, g.c_out, g.c_in, n, kernel, x, &mut y, true);
    } else {
        let cols = scratch(buf, g.patch() * n);
        im2col(x, g, cols);
        gemm(
            false,
            false,
            g.c_out,
            g.patch(),
            n,
            kernel,
            cols,
            &mut y,
            true,
        );
    }
    y
}

/// Gradients of [`conv2d_forward`]. `dx` is only computed when requested.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Real>(
    x: &[T],
    kernel: &[T],
    dy: &[T],
    g: &ConvGeom,
    dx: Option<&mut [T]>,
    dkernel: Option<&mut [T]>,
    dbias: Option<&mut [T]>,
    buf: &mut Vec<T>,
) {
    let n = g.out_pixels();
    if let Some(db) = dbias {
        for (co, row) in dy.chunks(n).enumerate() {
            db[co] += row.iter().copied().sum::<T>();
        }
    }
    if g.is_pointwise() {
        if let Some(dk) = dkernel {
            gemm(false, true, g.c_out, n, g.c_in, dy, x, dk, true);
        }
        if let Some(dx) = dx {
            gemm(true, false, g.c_in, g.c_out, n, kernel, dy, dx, true);
        }
        return;
    }
    let cols = scratch(buf, g.patch() * n);
    if let Some(dk) = dkernel {
        im2col(x, g, cols);
        gemm(false, true, g.c_out, n, g.patch(), dy, cols, dk, true);
    }
    if let Some(dx) = dx {
        gemm(true, false, g.patch(), g.c_out, n, kernel, dy, cols, false);
        col2im(cols, g, dx);
    }
}

/// Layer normalization over all `c * s` values with per-row (`c`) affine
/// parameters. Returns `(y, mean, rstd)`.
pub fn layer_norm_forward<T: Real>(
    x: &[T],
    c: usize,
    gain: &[T],
    bias: &[T],
    eps: T,
) -> (Vec<T>, T, T) {
    let n = x.len();
    let s = n / c;
    let nf = T::from_f64(n as f64);
    let mean = x.iter().copied().sum::<T>() / nf;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
    let rstd = T::ONE / (var + eps).sqrt();
    let mut y = Vec::with_capacity(n);
    for ch in 0..c {
        let (gn, bs) = (gain[ch], bias[ch]);
        y.extend(
            x[ch * s..(ch + 1) * s]
                .iter()
                .map(|&v| gn * ((v - mean) * rstd) + bs),
        );
    }
    (y, mean, rstd)
}

#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward<T: Real>(
    x: &[T],
    c: usize,
    gain: &[T],
    mean: T,
    rstd: T,
    dy: &[T],
    dx: Option<&mut [T]>,
    dgain: Option<&mut [T]>,
    dbias: Option<&mut [T]>,
) {
    let n = x.len();
    let s = n / c;
    if let Some(dg) = dgain {
        for ch in 0..c {
            let r = ch * s..(ch + 1) * s;
            dg[ch] += x[r.clone()]
                .iter()
                .zip(&dy[r])
                .map(|(&v, &d)| d * ((v - mean) * rstd))
                .sum::<T>();
        }
    }
    if let Some(db) = dbias {
        for ch in 0..c {
            db[ch] += dy[ch * s..(ch + 1) * s].iter().copied().sum::<T>();
        }
    }
    if let Some(dx) = dx {
        // dxhat = dy * gain; dx = rstd/N * (N dxhat - sum(dxhat) - xhat * sum(dxhat xhat))
        let mut sum_d = T::ZERO;
        let mut sum_dx = T::ZERO;
        for ch in 0..c {
            let gn = gain[ch];
            for i in ch * s..(ch + 1) * s {
                let d = dy[i] * gn;
                sum_d += d;
                sum_dx += d * ((x[i] - mean) * rstd);
            }
        }
        let nf = T::from_f64(n as f64);
        let k = rstd / nf;
        for ch in 0..c {
            let gn = gain[ch];
            for i in ch * s..(ch + 1) * s {
                let xhat = (x[i] - mean) * rstd;
                dx[i] += k * (nf * dy[i] * gn - sum_d - xhat * sum_dx);
            }
        }
    }
}

/// Non-overlapping 2x2 max pooling with floor semantics. Returns the
/// pooled values and, per output, the flat input index of the maximum.
pub fn max_pool2_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let i0 = base + 2 * oy * w + 2 * ox;
                let mut best = i0;
                for cand in [i0 + 1, i0 + w, i0 + w + 1] {
                    if x[cand] > x[best] {
                        best = cand;
                    }
                }
                y.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (y, arg)
}

/// Sampling table for half-pixel bilinear 2x upsampling along one axis:
/// output `i` reads input `i/2 - 0.25` clamped to `[0, n-1]`.
pub fn upsample_axis<T: Real>(n: usize) -> Vec<(usize, usize, T)> {
    (0..2 * n)
        .map(|i| {
            let src = (i as f64 * 0.5 - 0.25).clamp(0.0, (n - 1) as f64);
            let i0 = src as usize; // src >= 0
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, T::from_f64(src - i0 as f64))
        })
        .collect()
}

pub fn upsample2_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let ty = upsample_axis::<T>(h);
    let tx = upsample_axis::<T>(w);
    let mut y = Vec::with_capacity(c * 4 * h * w);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, wy) in &ty {
            let r0 = &plane[y0 * w..(y0 + 1) * w];
            let r1 = &plane[y1 * w..(y1 + 1) * w];
            for &(x0, x1, wx) in &tx {
                let top = r0[x0] + (r0[x1] - r0[x0]) * wx;
                let bot = r1[x0] + (r1[x1] - r1[x0]) * wx;
                y.push(top + (bot - top) * wy);
            }
        }
    }
    y
}

pub fn upsample2_backward<T: Real>(dy: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let ty = upsample_axis::<T>(h);
    let tx = upsample_axis::<T>(w);
    let wo = 2 * w;
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        let grad = &dy[ch * 4 * h * w..(ch + 1) * 4 * h * w];
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            let grow = &grad[oy * wo..(oy + 1) * wo];
            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                let g = grow[ox];
                let gt = g * (T::ONE - wy);
                let gb = g * wy;
                plane[y0 * w + x0] += gt * (T::ONE - wx);
                plane[y0 * w + x1] += gt * wx;
                plane[y1 * w + x0] += gb * (T::ONE - wx);
                plane[y1 * w + x1] += gb * wx;
            }
        }
    }
}
