//! Raw CPU kernels for convolution and pooling on NCHW buffers.

use crate::gemm::{sgemm, Layout};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(
        c: usize,
        (h, w): (usize, usize),
        (kh, kw): (usize, usize),
        (sh, sw): (usize, usize),
        (ph, pw): (usize, usize),
    ) -> Self {
        assert!(h + 2 * ph >= kh && w + 2 * pw >= kw, "kernel larger than padded input");
        let oh = (h + 2 * ph - kh) / sh + 1;
        let ow = (w + 2 * pw - kw) / sw + 1;
        ConvGeom {
            c,
            h,
            w,
            kh,
            kw,
            sh,
            sw,
            ph,
            pw,
            oh,
            ow,
        }
    }

    pub fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }

    /// Output columns `ox` whose input column `ox*sw - pw + kj` lies inside the image.
    fn valid_ox(&self, kj: usize) -> (usize, usize) {
        let mut lo = 0;
        while lo < self.ow && (lo * self.sw + kj) < self.pw {
            lo += 1;
        }
        let mut hi = self.ow;
        while hi > lo && ((hi - 1) * self.sw + kj) >= self.pw + self.w {
            hi -= 1;
        }
        (lo, hi)
    }
}

pub(crate) fn im2col(x: &[f32], g: &ConvGeom, col: &mut [f32]) {
    let cols = g.col_cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                let (lo, hi) = g.valid_ox(kj);
                for oy in 0..g.oh {
                    let seg = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let iy = (oy * g.sh + ki) as isize - g.ph as isize;
                    if iy < 0 || iy as usize >= g.h {
                        seg.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    seg[..lo].fill(0.0);
                    seg[hi..].fill(0.0);
                    if g.sw == 1 {
                        let start = lo + kj - g.pw;
                        seg[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for ox in lo..hi {
                            seg[ox] = src[ox * g.sw + kj - g.pw];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column buffer back into an image; the adjoint of [`im2col`].
pub(crate) fn col2im(col: &[f32], g: &ConvGeom, x: &mut [f32]) {
    let cols = g.col_cols();
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * cols..(row + 1) * cols];
                let (lo, hi) = g.valid_ox(kj);
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ki) as isize - g.ph as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    let seg = &src[oy * g.ow..(oy + 1) * g.ow];
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.sw == 1 {
                        let start = lo + kj - g.pw;
                        for (d, &v) in dst[start..start + (hi - lo)].iter_mut().zip(&seg[lo..hi]) {
                            *d += v;
                        }
                    } else {
                        for ox in lo..hi {
                            dst[ox * g.sw + kj - g.pw] += seg[ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvParams {
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

fn conv_geom(x: &Tensor, w: &Tensor, p: &ConvParams) -> (usize, usize, ConvGeom) {
    let (xs, ws) = (x.shape(), w.shape());
    assert_eq!(xs.len(), 4, "conv input must be NCHW");
    assert_eq!(ws.len(), 4, "conv weight must be OIHW");
    assert_eq!(xs[1], ws[1], "conv channel mismatch: input {xs:?} weight {ws:?}");
    let g = ConvGeom::new(xs[1], (xs[2], xs[3]), (ws[2], ws[3]), p.stride, p.pad);
    (xs[0], ws[0], g)
}

pub(crate) fn conv2d_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, p: &ConvParams) -> Tensor {
    let (n, o, g) = conv_geom(x, w, p);
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let in_sz = g.c * g.h * g.w;
    let mut out = vec![0.0; n * o * cols];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; rows * cols] };
    for s in 0..n {
        let xs = &x.data()[s * in_sz..(s + 1) * in_sz];
        let colbuf: &[f32] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, &g, &mut col);
            &col
        };
        let dst = &mut out[s * o * cols..(s + 1) * o * cols];
        if let Some(b) = bias {
            for (oc, chunk) in dst.chunks_mut(cols).enumerate() {
                chunk.fill(b.data()[oc]);
            }
        }
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        sgemm(1.0, w.data(), Layout::rm(o, rows), colbuf, Layout::rm(rows, cols), beta, dst);
    }
    Tensor::new(&[n, o, g.oh, g.ow], out)
}

pub(crate) struct ConvGrads {
    pub dx: Option<Tensor>,
    pub dw: Option<Tensor>,
    pub db: Option<Tensor>,
}

pub(crate) fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    p: &ConvParams,
    need: (bool, bool, bool),
) -> ConvGrads {
    let (n, o, g) = conv_geom(x, w, p);
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let in_sz = g.c * g.h * g.w;
    let mut dx = need.0.then(|| vec![0.0; x.len()]);
    let mut dw = need.1.then(|| vec![0.0; w.len()]);
    let mut db = need.2.then(|| vec![0.0; o]);
    let mut col = vec![0.0; rows * cols];
    let mut dcol = vec![0.0; rows * cols];
    for s in 0..n {
        let gys = &gy.data()[s * o * cols..(s + 1) * o * cols];
        if let Some(db) = db.as_mut() {
            for (oc, chunk) in gys.chunks(cols).enumerate() {
                db[oc] += chunk.iter().sum::<f32>();
            }
        }
        let xs = &x.data()[s * in_sz..(s + 1) * in_sz];
        if let Some(dw) = dw.as_mut() {
            let colbuf: &[f32] = if g.is_pointwise() {
                xs
            } else {
                im2col(xs, &g, &mut col);
                &col
            };
            sgemm(1.0, gys, Layout::rm(o, cols), colbuf, Layout::rm_t(rows, cols), 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            let dxs = &mut dx[s * in_sz..(s + 1) * in_sz];
            if g.is_pointwise() {
                sgemm(1.0, w.data(), Layout::rm_t(o, rows), gys, Layout::rm(o, cols), 1.0, dxs);
            } else {
                sgemm(1.0, w.data(), Layout::rm_t(o, rows), gys, Layout::rm(o, cols), 0.0, &mut dcol);
                col2im(&dcol, &g, dxs);
            }
        }
    }
    ConvGrads {
        dx: dx.map(|d| Tensor::new(x.shape(), d)),
        dw: dw.map(|d| Tensor::new(w.shape(), d)),
        db: db.map(|d| Tensor::new(&[o], d)),
    }
}

/// Geometry of a transposed convolution seen as the adjoint of a forward
/// convolution from the (larger) output image down to the input image.
fn convt_geom(x: &Tensor, w: &Tensor, p: &ConvParams) -> (usize, usize, usize, ConvGeom) {
    let (xs, ws) = (x.shape(), w.shape());
    assert_eq!(xs.len(), 4, "transposed conv input must be NCHW");
    assert_eq!(xs[1], ws[0], "transposed conv channel mismatch: input {xs:?} weight {ws:?}");
    let (ci, co) = (ws[0], ws[1]);
    let oh = (xs[2] - 1) * p.stride.0 + ws[2] - 2 * p.pad.0;
    let ow = (xs[3] - 1) * p.stride.1 + ws[3] - 2 * p.pad.1;
    let g = ConvGeom::new(co, (oh, ow), (ws[2], ws[3]), p.stride, p.pad);
    assert_eq!((g.oh, g.ow), (xs[2], xs[3]));
    (xs[0], ci, co, g)
}

pub(crate) fn conv_transpose2d_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, p: &ConvParams) -> Tensor {
    let (n, ci, co, g) = convt_geom(x, w, p);
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let out_sz = co * g.h * g.w;
    let mut out = vec![0.0; n * out_sz];
    let mut col = vec![0.0; rows * cols];
    for s in 0..n {
        let xs = &x.data()[s * ci * cols..(s + 1) * ci * cols];
        sgemm(1.0, w.data(), Layout::rm_t(ci, rows), xs, Layout::rm(ci, cols), 0.0, &mut col);
        let dst = &mut out[s * out_sz..(s + 1) * out_sz];
        col2im(&col, &g, dst);
        if let Some(b) = bias {
            for (oc, chunk) in dst.chunks_mut(g.h * g.w).enumerate() {
                let bv = b.data()[oc];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new(&[n, co, g.h, g.w], out)
}

pub(crate) fn conv_transpose2d_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    p: &ConvParams,
    need: (bool, bool, bool),
) -> ConvGrads {
    let (n, ci, co, g) = convt_geom(x, w, p);
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let out_sz = co * g.h * g.w;
    let mut dx = need.0.then(|| vec![0.0; x.len()]);
    let mut dw = need.1.then(|| vec![0.0; w.len()]);
    let mut db = need.2.then(|| vec![0.0; co]);
    let mut dcol = vec![0.0; rows * cols];
    for s in 0..n {
        let gys = &gy.data()[s * out_sz..(s + 1) * out_sz];
        if let Some(db) = db.as_mut() {
            for (oc, chunk) in gys.chunks(g.h * g.w).enumerate() {
                db[oc] += chunk.iter().sum::<f32>();
            }
        }
        if dx.is_none() && dw.is_none() {
            continue;
        }
        im2col(gys, &g, &mut dcol);
        if let Some(dx) = dx.as_mut() {
            let dxs = &mut dx[s * ci * cols..(s + 1) * ci * cols];
            sgemm(1.0, w.data(), Layout::rm(ci, rows), &dcol, Layout::rm(rows, cols), 0.0, dxs);
        }
        if let Some(dw) = dw.as_mut() {
            let xs = &x.data()[s * ci * cols..(s + 1) * ci * cols];
            sgemm(1.0, xs, Layout::rm(ci, cols), &dcol, Layout::rm_t(rows, cols), 1.0, dw);
        }
    }
    ConvGrads {
        dx: dx.map(|d| Tensor::new(x.shape(), d)),
        dw: dw.map(|d| Tensor::new(w.shape(), d)),
        db: db.map(|d| Tensor::new(&[co], d)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PoolParams {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl PoolParams {
    fn out_dim(&self, d: usize) -> usize {
        (d + 2 * self.pad - self.kernel) / self.stride + 1
    }
}

/// Max pooling; also returns the flat input index chosen for every output.
pub(crate) fn max_pool_forward(x: &Tensor, p: PoolParams) -> (Tensor, Vec<u32>) {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (p.out_dim(h), p.out_dim(w));
    let mut out = vec![0.0; n * c * oh * ow];
    let mut arg = vec![0u32; out.len()];
    let xd = x.data();
    if p.pad == 0 && p.kernel == 2 && p.stride == 2 {
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                let r0 = base + 2 * oy * w;
                let r1 = r0 + w;
                let obase = (plane * oh + oy) * ow;
                let (top, bot) = (&xd[r0..r0 + 2 * ow], &xd[r1..r1 + 2 * ow]);
                let (o, a) = (&mut out[obase..obase + ow], &mut arg[obase..obase + ow]);
                for ox in 0..ow {
                    let cand = [top[2 * ox], top[2 * ox + 1], bot[2 * ox], bot[2 * ox + 1]];
                    let mut k = 0;
                    for j in 1..4 {
                        if cand[j] > cand[k] || (cand[j].is_nan() && !cand[k].is_nan()) {
                            k = j;
                        }
                    }
                    o[ox] = cand[k];
                    a[ox] = (if k < 2 { r0 } else { r1 } + 2 * ox + (k & 1)) as u32;
                }
            }
        }
        return (Tensor::new(&[n, c, oh, ow], out), arg);
    }
    if p.pad == 0 {
        // every window lies inside the image
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                let obase = (plane * oh + oy) * ow;
                for ox in 0..ow {
                    let mut best_i = base + oy * p.stride * w + ox * p.stride;
                    let mut best = xd[best_i];
                    for ky in 0..p.kernel {
                        let row = base + (oy * p.stride + ky) * w + ox * p.stride;
                        for (kx, &v) in xd[row..row + p.kernel].iter().enumerate() {
                            if v > best || (v.is_nan() && !best.is_nan()) {
                                best = v;
                                best_i = row + kx;
                            }
                        }
                    }
                    out[obase + ox] = best;
                    arg[obase + ox] = best_i as u32;
                }
            }
        }
        return (Tensor::new(&[n, c, oh, ow], out), arg);
    }
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for ky in 0..p.kernel {
                    let iy = (oy * p.stride + ky) as isize - p.pad as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for kx in 0..p.kernel {
                        let ix = (ox * p.stride + kx) as isize - p.pad as isize;
                        if ix < 0 || ix as usize >= w {
                            continue;
                        }
                        let i = base + iy as usize * w + ix as usize;
                        // first maximum wins; NaN propagates
                        if best_i == usize::MAX || xd[i] > best || xd[i].is_nan() && !best.is_nan() {
                            best = xd[i];
                            best_i = i;
                        }
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                out[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    (Tensor::new(&[n, c, oh, ow], out), arg)
}

pub(crate) fn avg_pool_forward(x: &Tensor, p: PoolParams, count_pad: bool) -> Tensor {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (p.out_dim(h), p.out_dim(w));
    let mut out = vec![0.0; n * c * oh * ow];
    let xd = x.data();
    let k = p.kernel;
    if p.pad == 0 && p.stride == k {
        // non-overlapping windows, same summation order as the general path
        let inv = (k * k) as f32;
        for plane in 0..n * c {
            let src = &xd[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut sum = 0.0;
                    for ky in 0..k {
                        let row = &src[(oy * k + ky) * w + ox * k..(oy * k + ky) * w + ox * k + k];
                        for &v in row {
                            sum += v;
                        }
                    }
                    dst[oy * ow + ox] = sum / inv;
                }
            }
        }
        return Tensor::new(&[n, c, oh, ow], out);
    }
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let (sum, cnt) = avg_window(p, (oy, ox), (h, w), |i| xd[base + i]);
                let denom = if count_pad { (p.kernel * p.kernel) as f32 } else { cnt as f32 };
                out[(plane * oh + oy) * ow + ox] = sum / denom;
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

fn avg_window(
    p: PoolParams,
    (oy, ox): (usize, usize),
    (h, w): (usize, usize),
    mut visit: impl FnMut(usize) -> f32,
) -> (f32, usize) {
    let mut sum = 0.0;
    let mut cnt = 0;
    for ky in 0..p.kernel {
        let iy = (oy * p.stride + ky) as isize - p.pad as isize;
        if iy < 0 || iy as usize >= h {
            continue;
        }
        for kx in 0..p.kernel {
            let ix = (ox * p.stride + kx) as isize - p.pad as isize;
            if ix < 0 || ix as usize >= w {
                continue;
            }
            sum += visit(iy as usize * w + ix as usize);
            cnt += 1;
        }
    }
    (sum, cnt)
}

pub(crate) fn avg_pool_backward(x_shape: &[usize], gy: &Tensor, p: PoolParams, count_pad: bool) -> Tensor {
    let (n, c, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (oh, ow) = (p.out_dim(h), p.out_dim(w));
    let mut dx = vec![0.0; n * c * h * w];
    let gd = gy.data();
    let k = p.kernel;
    if p.pad == 0 && p.stride == k {
        let inv = (k * k) as f32;
        for plane in 0..n * c {
            let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
            let src = &gd[plane * oh * ow..(plane + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let gv = src[oy * ow + ox] / inv;
                    for ky in 0..k {
                        let row = (oy * k + ky) * w + ox * k;
                        for d in &mut dst[row..row + k] {
                            *d += gv;
                        }
                    }
                }
            }
        }
        return Tensor::new(x_shape, dx);
    }
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let (_, cnt) = avg_window(p, (oy, ox), (h, w), |_| 0.0);
                let denom = if count_pad { (p.kernel * p.kernel) as f32 } else { cnt as f32 };
                let gv = gd[(plane * oh + oy) * ow + ox] / denom;
                avg_window(p, (oy, ox), (h, w), |i| {
                    dx[base + i] += gv;
                    0.0
                });
            }
        }
    }
    Tensor::new(x_shape, dx)
}

pub(crate) fn upsample_nearest(x: &Tensor, factor: usize) -> Tensor {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h * factor, w * factor);
    let mut out = vec![0.0; n * c * oh * ow];
    let xd = x.data();
    for plane in 0..n * c {
        for oy in 0..oh {
            let src = &xd[(plane * h + oy / factor) * w..(plane * h + oy / factor + 1) * w];
            let dst = &mut out[(plane * oh + oy) * ow..(plane * oh + oy + 1) * ow];
            for (ox, v) in dst.iter_mut().enumerate() {
                *v = src[ox / factor];
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

pub(crate) fn upsample_nearest_backward(x_shape: &[usize], gy: &Tensor, factor: usize) -> Tensor {
    let (n, c, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (oh, ow) = (h * factor, w * factor);
    let mut dx = vec![0.0; n * c * h * w];
    let gd = gy.data();
    for plane in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                dx[(plane * h + oy / factor) * w + ox / factor] += gd[(plane * oh + oy) * ow + ox];
            }
        }
    }
    Tensor::new(x_shape, dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct seven-loop convolution used as the reference.
    fn conv_naive(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (xs, ws) = (x.shape(), w.shape());
        let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, k) = (ws[0], ws[2]);
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; n * o * oh * ow];
        for s in 0..n {
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ic in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= wd {
                                        continue;
                                    }
                                    acc += x.data()[((s * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((oc * c + ic) * k + ky) * k + kx];
                                }
                            }
                        }
                        out[((s * o + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        Tensor::new(&[n, o, oh, ow], out)
    }

    fn ramp(shape: &[usize], scale: f32) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|i| ((i * 7919) % 23) as f32 * scale - 0.3).collect())
    }

    #[test]
    fn conv_matches_naive() {
        for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 4), (2, 0, 3), (1, 0, 1), (3, 2, 5)] {
            let x = ramp(&[2, 3, 9, 9], 0.1);
            let w = ramp(&[4, 3, k, k], 0.05);
            let p = ConvParams {
                stride: (stride, stride),
                pad: (pad, pad),
            };
            let fast = conv2d_forward(&x, &w, None, &p);
            let slow = conv_naive(&x, &w, stride, pad);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeom::new(2, (7, 6), (3, 3), (2, 2), (1, 1));
        let x: Vec<f32> = (0..2 * 7 * 6).map(|i| (i % 5) as f32 - 2.0).collect();
        let y: Vec<f32> = (0..g.col_rows() * g.col_cols()).map(|i| (i % 3) as f32).collect();
        let mut col = vec![0.0; y.len()];
        im2col(&x, &g, &mut col);
        let lhs: f32 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let rhs: f32 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-3);
    }

    #[test]
    fn transposed_conv_shape() {
        let x = ramp(&[1, 4, 4, 4], 0.1);
        let w = ramp(&[4, 2, 4, 4], 0.1);
        let p = ConvParams { stride: (2, 2), pad: (1, 1) };
        assert_eq!(conv_transpose2d_forward(&x, &w, None, &p).shape(), &[1, 2, 8, 8]);
        let z = ramp(&[3, 5, 1, 1], 0.1);
        let w0 = ramp(&[5, 6, 4, 4], 0.1);
        let p0 = ConvParams { stride: (1, 1), pad: (0, 0) };
        assert_eq!(conv_transpose2d_forward(&z, &w0, None, &p0).shape(), &[3, 6, 4, 4]);
    }

    #[test]
    fn pools() {
        let x = Tensor::new(&[1, 1, 2, 4], vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 8.0, 7.0]);
        let p = PoolParams { kernel: 2, stride: 2, pad: 0 };
        let (m, arg) = max_pool_forward(&x, p);
        assert_eq!(m.data(), &[5.0, 8.0]);
        assert_eq!(arg, vec![1, 6]);
        assert_eq!(avg_pool_forward(&x, p, true).data(), &[3.25, 4.25]);
        let pp = PoolParams { kernel: 3, stride: 1, pad: 1 };
        let a = avg_pool_forward(&x, pp, false);
        assert!((a.data()[0] - (1.0 + 5.0 + 3.0 + 4.0) / 4.0).abs() < 1e-6);
    }
}
