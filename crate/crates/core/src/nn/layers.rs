//! Layer kernels over flat row-major buffers.
//!
//! Activations are laid out batch-major; feature maps are channel-major
//! `[batch, channel, row, col]`. Every `backward` accumulates parameter
//! gradients into `dp` (same layout as the parameter slice) and writes the
//! input gradient into `dx` when one is requested.

use super::gemm::gemm;

/// Defines a function whose body is additionally compiled with AVX2 enabled
/// and selected at runtime. Only the vector width changes; the order of
/// floating-point operations is fixed by the source, so both versions give
/// bit-identical results.
macro_rules! wide_simd {
    ($(#[$m:meta])* fn $name:ident($($arg:ident: $ty:ty),* $(,)?) $body:block) => {
        $(#[$m])*
        fn $name($($arg: $ty),*) {
            #[inline(always)]
            fn imp($($arg: $ty),*) $body
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2")]
                unsafe fn wide($($arg: $ty),*) {
                    imp($($arg),*)
                }
                if std::arch::is_x86_feature_detected!("avx2") {
                    // SAFETY: the CPU supports the enabled feature.
                    return unsafe { wide($($arg),*) };
                }
            }
            imp($($arg),*)
        }
    };
}

/// Fully connected layer `y = x·W + b` with `W` stored `[inp × out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub inp: usize,
    pub out: usize,
}

impl Dense {
    pub const fn new(inp: usize, out: usize) -> Self {
        Self { inp, out }
    }

    pub fn weight_len(&self) -> usize {
        self.inp * self.out
    }

    pub fn param_len(&self) -> usize {
        self.inp * self.out + self.out
    }

    pub fn forward(&self, p: &[f64], x: &[f64], batch: usize, y: &mut [f64]) {
        let (w, b) = p.split_at(self.weight_len());
        for row in y[..batch * self.out].chunks_exact_mut(self.out) {
            row.copy_from_slice(&b[..self.out]);
        }
        gemm(batch, self.inp, self.out, 1.0, x, false, w, false, 1.0, y);
    }

    pub fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], batch: usize, dp: &mut [f64], dx: Option<&mut [f64]>) {
        let (dw, db) = dp.split_at_mut(self.weight_len());
        gemm(self.inp, batch, self.out, 1.0, x, true, dy, false, 1.0, dw);
        for row in dy[..batch * self.out].chunks_exact(self.out) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        if let Some(dx) = dx {
            gemm(batch, self.out, self.inp, 1.0, dy, false, &p[..self.weight_len()], true, 0.0, dx);
        }
    }
}

/// Square-kernel 2-D convolution, stride 1, symmetric zero padding.
///
/// Maps are channel-major `[batch, channel, row, col]` and weights are
/// stored `[c_out, c_in, ky, kx]`. Inputs are copied into zero-padded maps
/// so every output row is a plain sliding-window sum; the input gradient is
/// the same correlation with the kernel flipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub rows: usize,
    pub cols: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn out_rows(&self) -> usize {
        self.rows + 2 * self.pad + 1 - self.kernel
    }

    pub fn out_cols(&self) -> usize {
        self.cols + 2 * self.pad + 1 - self.kernel
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.c_in
    }

    pub fn weight_len(&self) -> usize {
        self.patch_len() * self.c_out
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.c_out
    }

    pub fn in_len(&self) -> usize {
        self.rows * self.cols * self.c_in
    }

    pub fn out_len(&self) -> usize {
        self.out_rows() * self.out_cols() * self.c_out
    }

    pub fn forward(&self, p: &[f64], x: &[f64], batch: usize, y: &mut [f64]) {
        let (k, kk) = (self.kernel, self.kernel * self.kernel);
        let (w, bias) = p.split_at(self.weight_len());
        let (oh, ow) = (self.out_rows(), self.out_cols());
        let plane = oh * ow;
        let pw = self.cols + 2 * self.pad;
        let pmap = (self.rows + 2 * self.pad) * pw;
        let xp = pad_maps(&x[..batch * self.in_len()], self.rows, self.cols, self.pad);
        for (m, out) in y[..batch * self.out_len()].chunks_exact_mut(plane).enumerate() {
            let (b, co) = (m / self.c_out, m % self.c_out);
            out.fill(bias[co]);
            for ci in 0..self.c_in {
                let src = &xp[(b * self.c_in + ci) * pmap..][..pmap];
                correlate_add(src, pw, &w[(co * self.c_in + ci) * kk..][..kk], k, out, ow);
            }
        }
    }

    pub fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], batch: usize, dp: &mut [f64], dx: Option<&mut [f64]>) {
        let (k, kk) = (self.kernel, self.kernel * self.kernel);
        let (oh, ow) = (self.out_rows(), self.out_cols());
        let plane = oh * ow;
        let pw = self.cols + 2 * self.pad;
        let pmap = (self.rows + 2 * self.pad) * pw;
        let dy = &dy[..batch * self.out_len()];
        let xp = pad_maps(&x[..batch * self.in_len()], self.rows, self.cols, self.pad);
        let (dw, db) = dp.split_at_mut(self.weight_len());
        for (m, g) in dy.chunks_exact(plane).enumerate() {
            let (b, co) = (m / self.c_out, m % self.c_out);
            db[co] += g.iter().sum::<f64>();
            for ci in 0..self.c_in {
                let src = &xp[(b * self.c_in + ci) * pmap..][..pmap];
                correlate_grad(g, ow, src, pw, k, &mut dw[(co * self.c_in + ci) * kk..][..kk]);
            }
        }
        if let Some(dx) = dx {
            // dx = dy (padded by k − 1 − pad) correlated with the flipped kernel.
            let q = k - 1 - self.pad;
            let dyp = pad_maps(dy, oh, ow, q);
            let qw = ow + 2 * q;
            let qmap = (oh + 2 * q) * qw;
            let w = &p[..self.weight_len()];
            let mut flipped = vec![0.0; kk];
            let in_plane = self.rows * self.cols;
            for (m, out) in dx[..batch * self.in_len()].chunks_exact_mut(in_plane).enumerate() {
                let (b, ci) = (m / self.c_in, m % self.c_in);
                out.fill(0.0);
                for co in 0..self.c_out {
                    let wk = &w[(co * self.c_in + ci) * kk..][..kk];
                    for (f, v) in flipped.iter_mut().zip(wk.iter().rev()) {
                        *f = *v;
                    }
                    let src = &dyp[(b * self.c_out + co) * qmap..][..qmap];
                    correlate_add(src, qw, &flipped, k, out, self.cols);
                }
            }
        }
    }
}

/// Copies each `rows × cols` map into a zero border of width `pad`.
fn pad_maps(x: &[f64], rows: usize, cols: usize, pad: usize) -> Vec<f64> {
    let pw = cols + 2 * pad;
    let pmap = (rows + 2 * pad) * pw;
    let maps = x.len() / (rows * cols);
    let mut out = vec![0.0; maps * pmap];
    for (src, dst) in x.chunks_exact(rows * cols).zip(out.chunks_exact_mut(pmap)) {
        for r in 0..rows {
            dst[(r + pad) * pw + pad..][..cols].copy_from_slice(&src[r * cols..][..cols]);
        }
    }
    out
}

wide_simd! {
/// `out[y][x] += Σ w[ky][kx]·src[y + ky][x + kx]` over a padded source map
/// of row width `sw`; `out` has row width `ow`.
fn correlate_add(src: &[f64], sw: usize, w: &[f64], k: usize, out: &mut [f64], ow: usize) {
    for (y, row) in out.chunks_exact_mut(ow).enumerate() {
        if k == 3 {
            let r0 = &src[y * sw..][..ow + 2];
            let r1 = &src[(y + 1) * sw..][..ow + 2];
            let r2 = &src[(y + 2) * sw..][..ow + 2];
            let w: &[f64; 9] = w.try_into().expect("3×3 kernel");
            for i in 0..ow {
                row[i] += w[0] * r0[i]
                    + w[1] * r0[i + 1]
                    + w[2] * r0[i + 2]
                    + w[3] * r1[i]
                    + w[4] * r1[i + 1]
                    + w[5] * r1[i + 2]
                    + w[6] * r2[i]
                    + w[7] * r2[i + 1]
                    + w[8] * r2[i + 2];
            }
        } else {
            for ky in 0..k {
                for kx in 0..k {
                    axpy(w[ky * k + kx], &src[(y + ky) * sw + kx..][..ow], row);
                }
            }
        }
    }
}
}

wide_simd! {
    /// `dw[ky][kx] += Σ g[y][x]·src[y + ky][x + kx]`, the weight gradient of
    /// [`correlate_add`].
    fn correlate_grad(g: &[f64], ow: usize, src: &[f64], sw: usize, k: usize, dw: &mut [f64]) {
        let oh = g.len() / ow;
        // Lane-wise partial sums run over the whole map and are reduced once
        // per tap.
        let mut acc = vec![[0.0f64; 8]; k * k];
        let mut tail = vec![0.0f64; k * k];
        for oy in 0..oh {
            let gr = &g[oy * ow..][..ow];
            for ky in 0..k {
                let sr = &src[(oy + ky) * sw..][..ow + k - 1];
                for kx in 0..k {
                    let s = &sr[kx..kx + ow];
                    let a = &mut acc[ky * k + kx];
                    let (cg, cs) = (gr.chunks_exact(8), s.chunks_exact(8));
                    let (rg, rs) = (cg.remainder(), cs.remainder());
                    for (x, y) in cg.zip(cs) {
                        for j in 0..8 {
                            a[j] += x[j] * y[j];
                        }
                    }
                    tail[ky * k + kx] += rg.iter().zip(rs).map(|(x, y)| x * y).sum::<f64>();
                }
            }
        }
        for ((d, a), t) in dw.iter_mut().zip(&acc).zip(&tail) {
            *d += ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7])) + t;
        }
    }
}

#[inline(always)]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (o, v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// Non-overlapping 2×2 max pooling over channel-major maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2 {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

impl MaxPool2 {
    pub fn in_len(&self) -> usize {
        self.rows * self.cols * self.channels
    }

    pub fn out_len(&self) -> usize {
        (self.rows / 2) * (self.cols / 2) * self.channels
    }

    /// Writes the pooled maps and, per output cell, the flat input index of
    /// the maximum (first in row-major window order on ties).
    pub fn forward(&self, x: &[f64], batch: usize, y: &mut [f64], argmax: &mut [u32]) {
        let (oh, ow) = (self.rows / 2, self.cols / 2);
        for m in 0..batch * self.channels {
            let base = m * self.rows * self.cols;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * oy + dy) * self.cols + 2 * ox + dx;
                        if x[i] > best {
                            best = x[i];
                            at = i;
                        }
                    }
                    let o = (m * oh + oy) * ow + ox;
                    y[o] = best;
                    argmax[o] = at as u32;
                }
            }
        }
    }

    pub fn backward(&self, dy: &[f64], argmax: &[u32], batch: usize, dx: &mut [f64]) {
        dx[..batch * self.in_len()].fill(0.0);
        for (d, &i) in dy[..batch * self.out_len()].iter().zip(argmax) {
            dx[i as usize] += d;
        }
    }
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `dy` by the ReLU output `y`; the derivative at 0 is taken as 0.
pub fn relu_backward(y: &[f64], dy: &mut [f64]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
}

/// `y = bound·tanh(z)` per column.
pub fn scaled_tanh(z: &[f64], bounds: &[f64], y: &mut [f64]) {
    let n = bounds.len();
    for (i, (o, &v)) in y.iter_mut().zip(z).enumerate() {
        *o = bounds[i % n] * v.tanh();
    }
}

pub fn scaled_tanh_backward(z: &[f64], bounds: &[f64], dy: &[f64], dz: &mut [f64]) {
    let n = bounds.len();
    for (i, ((g, &d), &v)) in dz.iter_mut().zip(dy).zip(z).enumerate() {
        let t = v.tanh();
        *g = d * bounds[i % n] * (1.0 - t * t);
    }
}
