//! Layer kernels. Convolutions are cross-correlations with zero padding;
//! reductions accumulate in `f64` whatever the element type.

use std::ops::Range;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::rng::SplitMix64;

/// `floor((input + 2 pad - k) / stride) + 1`, or `None` if the window does
/// not fit.
pub fn output_side(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if k == 0 || stride == 0 || input + 2 * pad < k {
        return None;
    }
    Some((input + 2 * pad - k) / stride + 1)
}

/// Output indices whose tap `offset` lands inside `[0, input)`.
#[inline]
fn valid_outputs(offset: usize, pad: usize, stride: usize, input: usize, output: usize) -> Range<usize> {
    let lo = if pad > offset { (pad - offset).div_ceil(stride) } else { 0 };
    let hi = if input + pad > offset { ((input + pad - offset - 1) / stride + 1).min(output) } else { 0 };
    lo.min(hi)..hi
}

fn mismatch(msg: String) -> Error {
    Error::ShapeMismatch(msg)
}

struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
}

fn conv_geom<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, stride: usize, pad: usize, depthwise: bool) -> Result<ConvGeom> {
    let (n, c, h, wd) = x.dims4()?;
    let (o, wc, kh, kw) = w.dims4()?;
    if kh != kw {
        return Err(mismatch(format!("non-square kernel {kh}x{kw}")));
    }
    if depthwise {
        if wc != 1 || o != c {
            return Err(mismatch(format!("depthwise weight {:?} for {c} channels", w.shape())));
        }
    } else if wc != c {
        return Err(mismatch(format!("weight expects {wc} input channels, input has {c}")));
    }
    if let Some(b) = b {
        if b.len() != o {
            return Err(mismatch(format!("bias of {} for {o} output channels", b.len())));
        }
    }
    let ho = output_side(h, kh, stride, pad).ok_or_else(|| mismatch(format!("kernel {kh} does not fit height {h}")))?;
    let wo = output_side(wd, kw, stride, pad).ok_or_else(|| mismatch(format!("kernel {kw} does not fit width {wd}")))?;
    Ok(ConvGeom { n, c, h, w: wd, o, k: kh, ho, wo, stride, pad })
}

/// Accumulates one input plane convolved with one kernel into `acc`.
#[inline]
fn correlate_plane<T: Scalar>(acc: &mut [f64], plane: &[T], kernel: &[T], g: &ConvGeom) {
    for ky in 0..g.k {
        let rows = valid_outputs(ky, g.pad, g.stride, g.h, g.ho);
        for kx in 0..g.k {
            let wv = kernel[ky * g.k + kx].widen();
            if wv == 0.0 {
                continue;
            }
            let cols = valid_outputs(kx, g.pad, g.stride, g.w, g.wo);
            for oy in rows.clone() {
                let iy = oy * g.stride + ky - g.pad;
                let src = &plane[iy * g.w..(iy + 1) * g.w];
                let dst = &mut acc[oy * g.wo..(oy + 1) * g.wo];
                if g.stride == 1 {
                    let shift = kx as isize - g.pad as isize;
                    for ox in cols.clone() {
                        dst[ox] += wv * src[(ox as isize + shift) as usize].widen();
                    }
                } else {
                    for ox in cols.clone() {
                        dst[ox] += wv * src[ox * g.stride + kx - g.pad].widen();
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let g = conv_geom(x, w, b, stride, pad, false)?;
    let (plane_in, plane_out, kk) = (g.h * g.w, g.ho * g.wo, g.k * g.k);
    let mut out = Vec::with_capacity(g.n * g.o * plane_out);
    let mut acc = vec![0f64; plane_out];
    for ni in 0..g.n {
        for oi in 0..g.o {
            acc.fill(b.map_or(0.0, |b| b.data()[oi].widen()));
            for ci in 0..g.c {
                let plane = &x.data()[(ni * g.c + ci) * plane_in..][..plane_in];
                let kernel = &w.data()[(oi * g.c + ci) * kk..][..kk];
                correlate_plane(&mut acc, plane, kernel, &g);
            }
            out.extend(acc.iter().map(|&v| T::lift(v)));
        }
    }
    Tensor::new(vec![g.n, g.o, g.ho, g.wo], out)
}

pub fn depthwise_conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let g = conv_geom(x, w, b, stride, pad, true)?;
    let (plane_in, plane_out, kk) = (g.h * g.w, g.ho * g.wo, g.k * g.k);
    let mut out = Vec::with_capacity(g.n * g.c * plane_out);
    let mut acc = vec![0f64; plane_out];
    for ni in 0..g.n {
        for ci in 0..g.c {
            acc.fill(b.map_or(0.0, |b| b.data()[ci].widen()));
            let plane = &x.data()[(ni * g.c + ci) * plane_in..][..plane_in];
            correlate_plane(&mut acc, plane, &w.data()[ci * kk..][..kk], &g);
            out.extend(acc.iter().map(|&v| T::lift(v)));
        }
    }
    Tensor::new(vec![g.n, g.c, g.ho, g.wo], out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients of a standard convolution given the upstream gradient.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    want_input: bool,
) -> Result<ConvGrads<T>> {
    let g = conv_geom(x, w, None, stride, pad, false)?;
    if grad_out.shape() != [g.n, g.o, g.ho, g.wo] {
        return Err(mismatch(format!("upstream gradient {:?}", grad_out.shape())));
    }
    let (plane_in, plane_out, kk) = (g.h * g.w, g.ho * g.wo, g.k * g.k);
    let xd = x.data();
    let gd = grad_out.data();

    let mut gb = vec![0f64; g.o];
    let mut gw = vec![0f64; g.o * g.c * kk];
    for ni in 0..g.n {
        for oi in 0..g.o {
            let gplane = &gd[(ni * g.o + oi) * plane_out..][..plane_out];
            gb[oi] += gplane.iter().map(|v| v.widen()).sum::<f64>();
            for ci in 0..g.c {
                let plane = &xd[(ni * g.c + ci) * plane_in..][..plane_in];
                for ky in 0..g.k {
                    let rows = valid_outputs(ky, g.pad, g.stride, g.h, g.ho);
                    for kx in 0..g.k {
                        let cols = valid_outputs(kx, g.pad, g.stride, g.w, g.wo);
                        let mut s = 0f64;
                        for oy in rows.clone() {
                            let iy = oy * g.stride + ky - g.pad;
                            let src = &plane[iy * g.w..];
                            let grow = &gplane[oy * g.wo..];
                            for ox in cols.clone() {
                                s += grow[ox].widen() * src[ox * g.stride + kx - g.pad].widen();
                            }
                        }
                        gw[(oi * g.c + ci) * kk + ky * g.k + kx] += s;
                    }
                }
            }
        }
    }

    let input = if want_input { Some(conv2d_input_grad(x, w, grad_out, stride, pad)?) } else { None };

    Ok(ConvGrads {
        input,
        weight: Tensor::new(w.shape().to_vec(), gw.into_iter().map(T::lift).collect())?,
        bias: Tensor::new(vec![g.o], gb.into_iter().map(T::lift).collect())?,
    })
}

/// Gradient of a standard convolution with respect to its input only.
pub fn conv2d_input_grad<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, grad_out: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let g = conv_geom(x, w, None, stride, pad, false)?;
    if grad_out.shape() != [g.n, g.o, g.ho, g.wo] {
        return Err(mismatch(format!("upstream gradient {:?}", grad_out.shape())));
    }
    let (plane_in, plane_out, kk) = (g.h * g.w, g.ho * g.wo, g.k * g.k);
    let (gd, wd) = (grad_out.data(), w.data());
    let mut gx = Vec::with_capacity(x.len());
    let mut acc = vec![0f64; plane_in];
    for ni in 0..g.n {
        for ci in 0..g.c {
            acc.fill(0.0);
            for oi in 0..g.o {
                let gplane = &gd[(ni * g.o + oi) * plane_out..][..plane_out];
                let kernel = &wd[(oi * g.c + ci) * kk..][..kk];
                for ky in 0..g.k {
                    let rows = valid_outputs(ky, g.pad, g.stride, g.h, g.ho);
                    for kx in 0..g.k {
                        let wv = kernel[ky * g.k + kx].widen();
                        if wv == 0.0 {
                            continue;
                        }
                        let cols = valid_outputs(kx, g.pad, g.stride, g.w, g.wo);
                        for oy in rows.clone() {
                            let iy = oy * g.stride + ky - g.pad;
                            let dst = &mut acc[iy * g.w..(iy + 1) * g.w];
                            let grow = &gplane[oy * g.wo..];
                            for ox in cols.clone() {
                                dst[ox * g.stride + kx - g.pad] += wv * grow[ox].widen();
                            }
                        }
                    }
                }
            }
            gx.extend(acc.iter().map(|&v| T::lift(v)));
        }
    }
    Tensor::new(x.shape().to_vec(), gx)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Window max without padding. Also returns, per output element, the flat
/// input index of the (first) maximum.
pub fn max_pool_with_indices<T: Scalar>(x: &Tensor<T>, k: usize, stride: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4()?;
    let ho = output_side(h, k, stride, 0).ok_or_else(|| mismatch(format!("pool {k} does not fit height {h}")))?;
    let wo = output_side(w, k, stride, 0).ok_or_else(|| mismatch(format!("pool {k} does not fit width {w}")))?;
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut idx = Vec::with_capacity(n * c * ho * wo);
    let xd = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..k {
                    for kx in 0..k {
                        let i = base + (oy * stride + ky) * w + ox * stride + kx;
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                }
                out.push(xd[best]);
                idx.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, ho, wo], out)?, idx))
}

pub fn max_pool<T: Scalar>(x: &Tensor<T>, k: usize, stride: usize) -> Result<Tensor<T>> {
    Ok(max_pool_with_indices(x, k, stride)?.0)
}

pub fn avg_pool_global<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let plane = h * w;
    let data = x
        .data()
        .chunks_exact(plane)
        .map(|p| T::lift(p.iter().map(|v| v.widen()).sum::<f64>() / plane as f64))
        .collect();
    Tensor::new(vec![n, c, 1, 1], data)
}

pub fn flatten<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let n = x.batch();
    let d = x.len() / n.max(1);
    x.clone().reshape(&[n, d]).expect("flatten preserves element count")
}

/// `y = x W^T + b` on the flattened input; `w` is `(out, in)`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let n = x.batch();
    let d_in = x.len() / n.max(1);
    let (d_out, w_in) = w.dims2()?;
    if w_in != d_in {
        return Err(mismatch(format!("dense weight expects {w_in} inputs, got {d_in}")));
    }
    if let Some(b) = b {
        if b.len() != d_out {
            return Err(mismatch(format!("dense bias of {} for {d_out} outputs", b.len())));
        }
    }
    let mut out = Vec::with_capacity(n * d_out);
    for ni in 0..n {
        let row = &x.data()[ni * d_in..(ni + 1) * d_in];
        for oi in 0..d_out {
            let wr = &w.data()[oi * d_in..(oi + 1) * d_in];
            let dot: f64 = wr.iter().zip(row).map(|(a, b)| a.widen() * b.widen()).sum();
            out.push(T::lift(dot + b.map_or(0.0, |b| b.data()[oi].widen())));
        }
    }
    Tensor::new(vec![n, d_out], out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d) = x.dims2()?;
    let mut out = Vec::with_capacity(n * d);
    for ni in 0..n {
        out.extend(softmax_row(&x.data()[ni * d..(ni + 1) * d]).into_iter().map(T::lift));
    }
    Tensor::new(vec![n, d], out)
}

pub(crate) fn softmax_row<T: Scalar>(row: &[T]) -> Vec<f64> {
    let max = row.iter().map(|v| v.widen()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v.widen() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn residual_add<T: Scalar>(x: &Tensor<T>, earlier: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != earlier.shape() {
        return Err(mismatch(format!("residual add {:?} + {:?}", x.shape(), earlier.shape())));
    }
    let data = x.data().iter().zip(earlier.data()).map(|(&a, &b)| a + b).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// 8-neighbour local binary pattern codes of the interior pixels.
///
/// Neighbours are visited clockwise from the top-left; bit `i` (weight
/// `2^(7-i)`) is set when the neighbour is `>=` the center.
pub fn lbp_map(img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::DimensionTooSmall(format!("LBP needs at least 3x3, got {w}x{h}")));
    }
    const RING: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];
    Ok(GrayImage::from_fn(w - 2, h - 2, |x, y| {
        let (cx, cy) = (x + 1, y + 1);
        let center = img.get(cx, cy);
        let code = RING.iter().enumerate().fold(0u32, |code, (i, &(dx, dy))| {
            let n = img.get((cx as isize + dx) as usize, (cy as isize + dy) as usize);
            if n >= center {
                code | (1 << (7 - i))
            } else {
                code
            }
        });
        code as f32
    }))
}

/// Fixed ternary anchor filters `(anchors, in_channels, k, k)`.
///
/// Each weight consumes one SplitMix64 draw `r`: it is zero when
/// `(r >> 11) / 2^53 < sparsity`, otherwise `+1` if `r` is even and `-1`
/// if odd.
pub fn lbc_anchors<T: Scalar>(anchors: usize, in_channels: usize, k: usize, sparsity: f64, seed: u64) -> Tensor<T> {
    let mut rng = SplitMix64::new(seed);
    Tensor::from_fn(&[anchors, in_channels, k, k], |_| {
        let r = rng.next_u64();
        let u = (r >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if u < sparsity {
            T::zero()
        } else if r & 1 == 0 {
            T::one()
        } else {
            -T::one()
        }
    })
}

/// Local binary convolution: anchor correlation, ReLU, then a learned 1x1
/// combination of the anchor response maps.
pub fn lbc_forward<T: Scalar>(
    x: &Tensor<T>,
    anchors: &Tensor<T>,
    linear_w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (_, n_anchors, kh, kw) = linear_w.dims4()?;
    if (kh, kw) != (1, 1) || n_anchors != anchors.shape()[0] {
        return Err(mismatch(format!(
            "LBC linear weight {:?} for {} anchors",
            linear_w.shape(),
            anchors.shape()[0]
        )));
    }
    let response = relu(&conv2d_forward(x, anchors, None, stride, pad)?);
    conv2d_forward(&response, linear_w, Some(b), 1, 0)
}
