//! Convolution and normalization kernels on raw slices.
//!
//! Each output element of a convolution is accumulated from zero in `f64`
//! in the order kernel row, kernel column, input channel; the bias is added
//! last and the sum is rounded once to the storage type. Work is split across batch items; weight gradients are reduced
//! per item and then summed in batch order, so results do not depend on the
//! thread count.

use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dSpec {
    pub const STEM: Conv2dSpec = Conv2dSpec {
        stride: 2,
        padding: 1,
    };
    pub const SAME: Conv2dSpec = Conv2dSpec {
        stride: 1,
        padding: 1,
    };

    pub fn output_len(&self, input: usize, kernel: usize) -> Result<usize> {
        let padded = input + 2 * self.padding;
        if self.stride == 0 || padded < kernel {
            return Err(Error::shape(format!(
                "kernel {kernel} does not fit input {input} with padding {}",
                self.padding
            )));
        }
        Ok((padded - kernel) / self.stride + 1)
    }
}

/// Output positions `o` in `0..out_len` whose input index
/// `o * stride + offset - padding` lands inside `0..in_len`.
#[inline]
fn valid(out_len: usize, in_len: usize, stride: usize, offset: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > offset {
        (padding - offset).div_ceil(stride)
    } else {
        0
    };
    let hi = if in_len + padding > offset {
        ((in_len - 1 + padding - offset) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

pub(crate) struct ConvDims {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub ho: usize,
    pub wo: usize,
}

pub(crate) fn conv_dims<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: Conv2dSpec,
) -> Result<ConvDims> {
    let (batch, cin, h, wd) = x.dims4()?;
    let (cout, wcin, kh, kw) = w.dims4()?;
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv weight expects {wcin} input channels, input has {cin}"
        )));
    }
    if b.shape() != [cout] {
        return Err(Error::shape(format!(
            "conv bias shape {:?}, expected [{cout}]",
            b.shape()
        )));
    }
    Ok(ConvDims {
        batch,
        cin,
        h,
        w: wd,
        cout,
        kh,
        kw,
        ho: spec.output_len(h, kh)?,
        wo: spec.output_len(wd, kw)?,
    })
}

pub(crate) fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: Conv2dSpec,
) -> Result<Tensor<T>> {
    let d = conv_dims(x, w, b, spec)?;
    let in_item = d.cin * d.h * d.w;
    let out_plane = d.ho * d.wo;
    let mut out = vec![T::zero(); d.batch * d.cout * out_plane];
    let (xs, ws, bs) = (x.data(), w.data(), b.data());
    out.par_chunks_mut(d.cout * out_plane)
        .enumerate()
        .for_each(|(n, y)| {
            let xn = &xs[n * in_item..(n + 1) * in_item];
            let mut acc = vec![0.0f64; out_plane];
            for co in 0..d.cout {
                acc.fill(0.0);
                for ky in 0..d.kh {
                    let (oy0, oy1) = valid(d.ho, d.h, spec.stride, ky, spec.padding);
                    for kx in 0..d.kw {
                        let (ox0, ox1) = valid(d.wo, d.w, spec.stride, kx, spec.padding);
                        for ci in 0..d.cin {
                            let wv = ws[((co * d.cin + ci) * d.kh + ky) * d.kw + kx].as_f64();
                            let plane = &xn[ci * d.h * d.w..(ci + 1) * d.h * d.w];
                            for oy in oy0..oy1 {
                                let iy = oy * spec.stride + ky - spec.padding;
                                let row = &plane[iy * d.w..(iy + 1) * d.w];
                                let arow = &mut acc[oy * d.wo..(oy + 1) * d.wo];
                                for ox in ox0..ox1 {
                                    let ix = ox * spec.stride + kx - spec.padding;
                                    arow[ox] += wv * row[ix].as_f64();
                                }
                            }
                        }
                    }
                }
                let bias = bs[co].as_f64();
                for (v, &a) in y[co * out_plane..(co + 1) * out_plane].iter_mut().zip(&acc) {
                    *v = T::from_f64_lossy(a + bias);
                }
            }
        });
    Tensor::new(&[d.batch, d.cout, d.ho, d.wo], out)
}

fn cast_vec<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&a| T::from_f64_lossy(a)).collect()
}

/// Sum per-item partial gradients in batch order.
fn reduce_partials(partials: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut total = vec![0.0f64; len];
    for p in partials {
        for (a, &v) in total.iter_mut().zip(p) {
            *a += v;
        }
    }
    total
}

/// Gradients `(dx, dw, db)` of a convolution.
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: Conv2dSpec,
    gy: &Tensor<T>,
    need_dx: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>)> {
    let d = conv_dims(x, w, b, spec)?;
    let in_item = d.cin * d.h * d.w;
    let out_plane = d.ho * d.wo;
    let (xs, ws, gys) = (x.data(), w.data(), gy.data());
    let mut gx = vec![T::zero(); if need_dx { d.batch * in_item } else { d.batch }];
    let chunk = if need_dx { in_item } else { 1 };
    let partials: Vec<(Vec<f64>, Vec<f64>)> = gx
        .par_chunks_mut(chunk)
        .enumerate()
        .map(|(n, gxn)| {
            let xn = &xs[n * in_item..(n + 1) * in_item];
            let gyn = &gys[n * d.cout * out_plane..(n + 1) * d.cout * out_plane];
            let mut gw = vec![0.0f64; w.numel()];
            let mut gb = vec![0.0f64; d.cout];
            let mut gxacc = vec![0.0f64; if need_dx { in_item } else { 0 }];
            for co in 0..d.cout {
                let g = &gyn[co * out_plane..(co + 1) * out_plane];
                gb[co] = g.iter().map(|v| v.as_f64()).sum();
                for ky in 0..d.kh {
                    let (oy0, oy1) = valid(d.ho, d.h, spec.stride, ky, spec.padding);
                    for kx in 0..d.kw {
                        let (ox0, ox1) = valid(d.wo, d.w, spec.stride, kx, spec.padding);
                        for ci in 0..d.cin {
                            let widx = ((co * d.cin + ci) * d.kh + ky) * d.kw + kx;
                            let wv = ws[widx].as_f64();
                            let base = ci * d.h * d.w;
                            let mut acc = 0.0f64;
                            for oy in oy0..oy1 {
                                let iy = oy * spec.stride + ky - spec.padding;
                                let grow = &g[oy * d.wo..(oy + 1) * d.wo];
                                let xrow = &xn[base + iy * d.w..base + (iy + 1) * d.w];
                                for ox in ox0..ox1 {
                                    let ix = ox * spec.stride + kx - spec.padding;
                                    acc += grow[ox].as_f64() * xrow[ix].as_f64();
                                }
                                if need_dx {
                                    let gxrow = &mut gxacc[base + iy * d.w..base + (iy + 1) * d.w];
                                    for ox in ox0..ox1 {
                                        let ix = ox * spec.stride + kx - spec.padding;
                                        gxrow[ix] += wv * grow[ox].as_f64();
                                    }
                                }
                            }
                            gw[widx] += acc;
                        }
                    }
                }
            }
            for (o, &a) in gxn.iter_mut().zip(&gxacc) {
                *o = T::from_f64_lossy(a);
            }
            (gw, gb)
        })
        .collect();
    let (pw, pb): (Vec<_>, Vec<_>) = partials.into_iter().unzip();
    let gw = reduce_partials(&pw, w.numel());
    let gb = reduce_partials(&pb, d.cout);
    let gx = if need_dx {
        Some(Tensor::new(x.shape(), gx)?)
    } else {
        None
    };
    Ok((
        gx,
        Tensor::new(w.shape(), cast_vec(&gw))?,
        Tensor::new(b.shape(), cast_vec(&gb))?,
    ))
}

pub(crate) struct SeparableDims {
    pub batch: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

pub(crate) fn separable_dims<T: Scalar>(
    x: &Tensor<T>,
    depthwise: &Tensor<T>,
    pointwise: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<SeparableDims> {
    let (batch, c, h, w) = x.dims4()?;
    let (dc, one, k, k2) = depthwise.dims4()?;
    if dc != c || one != 1 || k != k2 || k % 2 == 0 {
        return Err(Error::shape(format!(
            "depthwise weight {:?} does not match {c} channels",
            depthwise.shape()
        )));
    }
    if pointwise.shape() != [c, c, 1, 1] {
        return Err(Error::shape(format!(
            "pointwise weight {:?}, expected [{c}, {c}, 1, 1]",
            pointwise.shape()
        )));
    }
    if bias.shape() != [c] {
        return Err(Error::shape(format!("bias {:?}, expected [{c}]", bias.shape())));
    }
    Ok(SeparableDims { batch, c, h, w, k })
}

/// Depthwise `k x k` (stride 1, same padding) then 1x1 channel mix plus
/// bias. Returns `(output, depthwise_output)`.
pub(crate) fn separable_forward<T: Scalar>(
    x: &Tensor<T>,
    depthwise: &Tensor<T>,
    pointwise: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let d = separable_dims(x, depthwise, pointwise, bias)?;
    let plane = d.h * d.w;
    let item = d.c * plane;
    let pad = d.k / 2;
    let mut mid = vec![T::zero(); d.batch * item];
    let mut out = vec![T::zero(); d.batch * item];
    let (xs, dws, pws, bs) = (x.data(), depthwise.data(), pointwise.data(), bias.data());
    mid.par_chunks_mut(item)
        .zip(out.par_chunks_mut(item))
        .enumerate()
        .for_each(|(n, (m, y))| {
            let xn = &xs[n * item..(n + 1) * item];
            let mut acc = vec![0.0f64; plane];
            let mut mid64 = vec![0.0f64; item];
            for c in 0..d.c {
                let xp = &xn[c * plane..(c + 1) * plane];
                acc.fill(0.0);
                for ky in 0..d.k {
                    let (oy0, oy1) = valid(d.h, d.h, 1, ky, pad);
                    for kx in 0..d.k {
                        let (ox0, ox1) = valid(d.w, d.w, 1, kx, pad);
                        let wv = dws[(c * d.k + ky) * d.k + kx].as_f64();
                        for oy in oy0..oy1 {
                            let iy = oy + ky - pad;
                            let row = &xp[iy * d.w..(iy + 1) * d.w];
                            let arow = &mut acc[oy * d.w..(oy + 1) * d.w];
                            for ox in ox0..ox1 {
                                arow[ox] += wv * row[ox + kx - pad].as_f64();
                            }
                        }
                    }
                }
                let dst = &mut m[c * plane..(c + 1) * plane];
                let dst64 = &mut mid64[c * plane..(c + 1) * plane];
                for ((o, o64), &a) in dst.iter_mut().zip(dst64.iter_mut()).zip(&acc) {
                    *o = T::from_f64_lossy(a);
                    *o64 = o.as_f64();
                }
            }
            for co in 0..d.c {
                acc.fill(0.0);
                for ci in 0..d.c {
                    let wv = pws[co * d.c + ci].as_f64();
                    let src = &mid64[ci * plane..(ci + 1) * plane];
                    for (a, &s) in acc.iter_mut().zip(src) {
                        *a += wv * s;
                    }
                }
                let b = bs[co].as_f64();
                for (o, &a) in y[co * plane..(co + 1) * plane].iter_mut().zip(&acc) {
                    *o = T::from_f64_lossy(a + b);
                }
            }
        });
    Ok((Tensor::new(x.shape(), out)?, Tensor::new(x.shape(), mid)?))
}

pub(crate) struct SeparableGrads<T> {
    pub x: Option<Tensor<T>>,
    pub depthwise: Tensor<T>,
    pub pointwise: Tensor<T>,
    pub bias: Tensor<T>,
}

pub(crate) fn separable_backward<T: Scalar>(
    x: &Tensor<T>,
    depthwise: &Tensor<T>,
    pointwise: &Tensor<T>,
    bias: &Tensor<T>,
    mid: &Tensor<T>,
    gy: &Tensor<T>,
    need_dx: bool,
) -> Result<SeparableGrads<T>> {
    let d = separable_dims(x, depthwise, pointwise, bias)?;
    let plane = d.h * d.w;
    let item = d.c * plane;
    let pad = d.k / 2;
    let (xs, dws, pws, ms, gys) = (
        x.data(),
        depthwise.data(),
        pointwise.data(),
        mid.data(),
        gy.data(),
    );
    let mut gx = vec![T::zero(); if need_dx { d.batch * item } else { d.batch }];
    let chunk = if need_dx { item } else { 1 };
    let partials: Vec<[Vec<f64>; 3]> = gx
        .par_chunks_mut(chunk)
        .enumerate()
        .map(|(n, gxn)| {
            let to64 = |s: &[T]| s.iter().map(|v| v.as_f64()).collect::<Vec<f64>>();
            let xn = to64(&xs[n * item..(n + 1) * item]);
            let mn = to64(&ms[n * item..(n + 1) * item]);
            let gyn = to64(&gys[n * item..(n + 1) * item]);
            let mut gpw = vec![0.0f64; d.c * d.c];
            let mut gb = vec![0.0f64; d.c];
            let mut gdw = vec![0.0f64; d.c * d.k * d.k];
            let mut gmid = vec![0.0f64; item];
            let mut gxacc = vec![0.0f64; if need_dx { item } else { 0 }];
            for co in 0..d.c {
                let g = &gyn[co * plane..(co + 1) * plane];
                gb[co] = g.iter().sum();
                for ci in 0..d.c {
                    let src = &mn[ci * plane..(ci + 1) * plane];
                    gpw[co * d.c + ci] = g.iter().zip(src).map(|(&a, &b)| a * b).sum();
                }
            }
            for ci in 0..d.c {
                let gm = &mut gmid[ci * plane..(ci + 1) * plane];
                for co in 0..d.c {
                    let wv = pws[co * d.c + ci].as_f64();
                    let g = &gyn[co * plane..(co + 1) * plane];
                    for (a, &s) in gm.iter_mut().zip(g) {
                        *a += wv * s;
                    }
                }
            }
            for c in 0..d.c {
                let xp = &xn[c * plane..(c + 1) * plane];
                let gm = &gmid[c * plane..(c + 1) * plane];
                for ky in 0..d.k {
                    let (oy0, oy1) = valid(d.h, d.h, 1, ky, pad);
                    for kx in 0..d.k {
                        let (ox0, ox1) = valid(d.w, d.w, 1, kx, pad);
                        let widx = (c * d.k + ky) * d.k + kx;
                        let wv = dws[widx].as_f64();
                        let mut acc = 0.0f64;
                        for oy in oy0..oy1 {
                            let iy = oy + ky - pad;
                            let grow = &gm[oy * d.w..(oy + 1) * d.w];
                            let xrow = &xp[iy * d.w..(iy + 1) * d.w];
                            for ox in ox0..ox1 {
                                acc += grow[ox] * xrow[ox + kx - pad];
                            }
                            if need_dx {
                                let gxrow = &mut gxacc[c * plane + iy * d.w..c * plane + (iy + 1) * d.w];
                                for ox in ox0..ox1 {
                                    gxrow[ox + kx - pad] += wv * grow[ox];
                                }
                            }
                        }
                        gdw[widx] = acc;
                    }
                }
            }
            for (o, &a) in gxn.iter_mut().zip(&gxacc) {
                *o = T::from_f64_lossy(a);
            }
            [gdw, gpw, gb]
        })
        .collect();
    let mut parts: [Vec<Vec<f64>>; 3] = Default::default();
    for [a, b, c] in partials {
        parts[0].push(a);
        parts[1].push(b);
        parts[2].push(c);
    }
    let gdw = reduce_partials(&parts[0], depthwise.numel());
    let gpw = reduce_partials(&parts[1], pointwise.numel());
    let gb = reduce_partials(&parts[2], d.c);
    Ok(SeparableGrads {
        x: if need_dx {
            Some(Tensor::new(x.shape(), gx)?)
        } else {
            None
        },
        depthwise: Tensor::new(depthwise.shape(), cast_vec(&gdw))?,
        pointwise: Tensor::new(pointwise.shape(), cast_vec(&gpw))?,
        bias: Tensor::new(bias.shape(), cast_vec(&gb))?,
    })
}

/// Batch mean and unbiased variance per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Normalized values and `1/sqrt(var + eps)` per channel, with statistics
/// accumulated in `f64` over batch and spatial positions.
pub(crate) fn batch_norm_train_stats<T: Scalar>(
    x: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, Vec<f64>, BatchStats)> {
    let (b, c, h, w) = x.dims4()?;
    let per = b * h * w;
    if per < 2 {
        return Err(Error::InvalidParameter(format!(
            "batch norm in train mode needs at least 2 values per channel, got {per}"
        )));
    }
    let plane = h * w;
    let xs = x.data();
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for ch in 0..c {
        let mut s = 0.0f64;
        for n in 0..b {
            let base = (n * c + ch) * plane;
            s += xs[base..base + plane].iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let m = s / per as f64;
        let mut ss = 0.0f64;
        for n in 0..b {
            let base = (n * c + ch) * plane;
            ss += xs[base..base + plane]
                .iter()
                .map(|v| (v.as_f64() - m).powi(2))
                .sum::<f64>();
        }
        mean[ch] = m;
        var[ch] = ss / per as f64;
    }
    let invstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let xhat = normalize(x, &mean, &invstd)?;
    let unbiased = var
        .iter()
        .map(|v| v * per as f64 / (per - 1) as f64)
        .collect();
    Ok((
        xhat,
        invstd,
        BatchStats {
            mean,
            var: unbiased,
        },
    ))
}

pub(crate) fn normalize<T: Scalar>(x: &Tensor<T>, mean: &[f64], invstd: &[f64]) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    if mean.len() != c || invstd.len() != c {
        return Err(Error::shape(format!("normalization for {} channels, input has {c}", mean.len())));
    }
    let plane = h * w;
    let mut out = x.clone();
    let data = out.data_mut();
    for n in 0..b {
        for ch in 0..c {
            let base = (n * c + ch) * plane;
            let (m, s) = (mean[ch], invstd[ch]);
            for v in &mut data[base..base + plane] {
                *v = T::from_f64_lossy((v.as_f64() - m) * s);
            }
        }
    }
    Ok(out)
}

/// Fold batch statistics into running estimates:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn update_running_stats<T: Scalar>(
    running_mean: &mut [T],
    running_var: &mut [T],
    stats: &BatchStats,
    momentum: f64,
) {
    for (r, &m) in running_mean.iter_mut().zip(&stats.mean) {
        *r = T::from_f64_lossy((1.0 - momentum) * r.as_f64() + momentum * m);
    }
    for (r, &v) in running_var.iter_mut().zip(&stats.var) {
        *r = T::from_f64_lossy((1.0 - momentum) * r.as_f64() + momentum * v);
    }
}
