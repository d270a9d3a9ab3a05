//! Forward and backward kernels on raw row-major slices.
//!
//! Every reduction runs sequentially in a fixed index order so results are
//! bitwise reproducible. Inner loops are arranged so the innermost index is
//! contiguous and independent across iterations, which lets the compiler
//! vectorize without reassociating any sum.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// Returns `None` when the kernel does not fit the padded input.
    pub fn new(
        (cin, h, w): (usize, usize, usize),
        (cout, kh, kw): (usize, usize, usize),
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        if stride == 0 || kh > h + 2 * pad || kw > w + 2 * pad {
            return None;
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Some(Self { cin, h, w, cout, kh, kw, stride, pad, ho, wo })
    }

    /// Rows of the unfolded patch matrix.
    pub fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    pub fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }

    #[inline]
    fn source(&self, oy: usize, ky: usize, ox: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad)?;
        let ix = (ox * self.stride + kx).checked_sub(self.pad)?;
        (iy < self.h && ix < self.w).then_some((iy, ix))
    }
}

/// Unfolds one sample into a `[patch_len, out_pixels]` matrix.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let p = g.out_pixels();
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    for ox in 0..g.wo {
                        dst[oy * g.wo + ox] = match g.source(oy, ky, ox, kx) {
                            Some((iy, ix)) => plane[iy * g.w + ix],
                            None => T::zero(),
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Unfolds one sample into the transposed `[out_pixels, patch_len]` layout.
fn im2col_t<T: Scalar>(x: &[T], g: &ConvGeom, col_t: &mut [T]) {
    let k = g.patch_len();
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let dst = &mut col_t[(oy * g.wo + ox) * k..(oy * g.wo + ox + 1) * k];
            let mut row = 0;
            for ci in 0..g.cin {
                let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        dst[row] = match g.source(oy, ky, ox, kx) {
                            Some((iy, ix)) => plane[iy * g.w + ix],
                            None => T::zero(),
                        };
                        row += 1;
                    }
                }
            }
        }
    }
}

fn col2im_t_accumulate<T: Scalar>(col_t: &[T], g: &ConvGeom, dx: &mut [T]) {
    let k = g.patch_len();
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let src = &col_t[(oy * g.wo + ox) * k..(oy * g.wo + ox + 1) * k];
            let mut row = 0;
            for ci in 0..g.cin {
                let base = ci * g.h * g.w;
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        if let Some((iy, ix)) = g.source(oy, ky, ox, kx) {
                            dx[base + iy * g.w + ix] += src[row];
                        }
                        row += 1;
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(x: &[T], n: usize, weight: &[T], bias: &[T], g: &ConvGeom) -> Vec<T> {
    let k = g.patch_len();
    let p = g.out_pixels();
    let in_len = g.cin * g.h * g.w;
    let mut out = vec![T::zero(); n * g.cout * p];
    let mut col = vec![T::zero(); k * p];
    for s in 0..n {
        im2col(&x[s * in_len..(s + 1) * in_len], g, &mut col);
        let out_s = &mut out[s * g.cout * p..(s + 1) * g.cout * p];
        for co in 0..g.cout {
            let row = &mut out_s[co * p..(co + 1) * p];
            row.fill(bias[co]);
            let wrow = &weight[co * k..(co + 1) * k];
            for (kk, &wv) in wrow.iter().enumerate() {
                let crow = &col[kk * p..(kk + 1) * p];
                for (o, &c) in row.iter_mut().zip(crow) {
                    *o += wv * c;
                }
            }
        }
    }
    out
}

/// Gradients of a convolution. `dx` is only computed when requested.
pub struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    n: usize,
    weight: &[T],
    dout: &[T],
    g: &ConvGeom,
    want_dx: bool,
) -> ConvGrads<T> {
    let k = g.patch_len();
    let p = g.out_pixels();
    let in_len = g.cin * g.h * g.w;
    let mut dw = vec![T::zero(); g.cout * k];
    let mut db = vec![T::zero(); g.cout];
    let mut dx = want_dx.then(|| vec![T::zero(); n * in_len]);
    let mut col_t = vec![T::zero(); p * k];
    let mut dcol_t = vec![T::zero(); p * k];
    for s in 0..n {
        im2col_t(&x[s * in_len..(s + 1) * in_len], g, &mut col_t);
        let dout_s = &dout[s * g.cout * p..(s + 1) * g.cout * p];
        for co in 0..g.cout {
            let drow = &dout_s[co * p..(co + 1) * p];
            let dw_row = &mut dw[co * k..(co + 1) * k];
            let mut bsum = db[co];
            for (pp, &gv) in drow.iter().enumerate() {
                bsum += gv;
                let crow = &col_t[pp * k..(pp + 1) * k];
                for (d, &c) in dw_row.iter_mut().zip(crow) {
                    *d += gv * c;
                }
            }
            db[co] = bsum;
        }
        if let Some(dx) = dx.as_mut() {
            dcol_t.fill(T::zero());
            for pp in 0..p {
                let dst = &mut dcol_t[pp * k..(pp + 1) * k];
                for co in 0..g.cout {
                    let gv = dout_s[co * p + pp];
                    let wrow = &weight[co * k..(co + 1) * k];
                    for (d, &wv) in dst.iter_mut().zip(wrow) {
                        *d += gv * wv;
                    }
                }
            }
            col2im_t_accumulate(&dcol_t, g, &mut dx[s * in_len..(s + 1) * in_len]);
        }
    }
    ConvGrads { dx, dw, db }
}

/// Max pooling over `[planes, h, w]`. Returns values and the flat input
/// index of each window's first (row-major) maximum.
pub fn max_pool_forward<T: Scalar>(
    x: &[T],
    planes: usize,
    (h, w): (usize, usize),
    k: usize,
    stride: usize,
) -> (Vec<T>, Vec<usize>) {
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    for pl in 0..planes {
        let base = pl * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best_idx = base + oy * stride * w + ox * stride;
                let mut best = x[best_idx];
                for ky in 0..k {
                    for kx in 0..k {
                        let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    (out, arg)
}

pub fn upsample_nearest_forward<T: Scalar>(x: &[T], planes: usize, (h, w): (usize, usize), f: usize) -> Vec<T> {
    let (oh, ow) = (h * f, w * f);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for pl in 0..planes {
        let plane = &x[pl * h * w..(pl + 1) * h * w];
        for oy in 0..oh {
            let row = &plane[(oy / f) * w..(oy / f + 1) * w];
            for ox in 0..ow {
                out.push(row[ox / f]);
            }
        }
    }
    out
}

pub fn upsample_nearest_backward<T: Scalar>(dout: &[T], planes: usize, (h, w): (usize, usize), f: usize) -> Vec<T> {
    let (oh, ow) = (h * f, w * f);
    let mut dx = vec![T::zero(); planes * h * w];
    for pl in 0..planes {
        let src = &dout[pl * oh * ow..(pl + 1) * oh * ow];
        let dst = &mut dx[pl * h * w..(pl + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                dst[(oy / f) * w + ox / f] += src[oy * ow + ox];
            }
        }
    }
    dx
}

pub fn linear_forward<T: Scalar>(x: &[T], n: usize, d: usize, weight: &[T], bias: &[T]) -> Vec<T> {
    let k = bias.len();
    let mut out = Vec::with_capacity(n * k);
    for row in x.chunks_exact(d).take(n) {
        for kk in 0..k {
            let wrow = &weight[kk * d..(kk + 1) * d];
            let mut acc = bias[kk];
            for (&a, &b) in row.iter().zip(wrow) {
                acc += a * b;
            }
            out.push(acc);
        }
    }
    out
}

/// Returns `(dx, dw, db)`.
pub fn linear_backward<T: Scalar>(x: &[T], n: usize, d: usize, weight: &[T], dout: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let k = dout.len() / n;
    let mut dx = vec![T::zero(); n * d];
    let mut dw = vec![T::zero(); k * d];
    let mut db = vec![T::zero(); k];
    for s in 0..n {
        let xrow = &x[s * d..(s + 1) * d];
        let dxrow = &mut dx[s * d..(s + 1) * d];
        for kk in 0..k {
            let gv = dout[s * k + kk];
            db[kk] += gv;
            let wrow = &weight[kk * d..(kk + 1) * d];
            for (o, &wv) in dxrow.iter_mut().zip(wrow) {
                *o += gv * wv;
            }
            for (o, &xv) in dw[kk * d..(kk + 1) * d].iter_mut().zip(xrow) {
                *o += gv * xv;
            }
        }
    }
    (dx, dw, db)
}

/// Masked mean cross-entropy over logits laid out as `[n, classes, spatial]`
/// (spatial = 1 for plain classification). Returns the loss, the softmax
/// probabilities and the number of counted positions.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &[T],
    n: usize,
    classes: usize,
    spatial: usize,
    targets: &[usize],
    ignore_index: usize,
) -> (T, Vec<T>, usize) {
    let mut probs = vec![T::zero(); logits.len()];
    let mut total = T::zero();
    let mut count = 0usize;
    for s in 0..n {
        for pos in 0..spatial {
            let at = |c: usize| s * classes * spatial + c * spatial + pos;
            let mut max = logits[at(0)];
            for c in 1..classes {
                max = max.max(logits[at(c)]);
            }
            let mut denom = T::zero();
            for c in 0..classes {
                let e = (logits[at(c)] - max).exp();
                probs[at(c)] = e;
                denom += e;
            }
            for c in 0..classes {
                probs[at(c)] /= denom;
            }
            let t = targets[s * spatial + pos];
            if t != ignore_index {
                total += denom.ln() + max - logits[at(t)];
                count += 1;
            }
        }
    }
    let loss = if count > 0 { total / T::lit(count as f64) } else { T::zero() };
    (loss, probs, count)
}
