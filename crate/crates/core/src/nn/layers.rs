//! Forward and backward passes for the individual layer kinds.
//!
//! Image tensors are laid out `[batch, height, width, channels]`, dense
//! activations `[batch, features]`. Convolution kernels are
//! `[kernel_h, kernel_w, in_channels, out_channels]` and dense weights
//! `[inputs, outputs]`.

use rand::Rng;

use crate::error::{invalid, shape, Result};
use crate::tensor::Tensor;

/// Gradients produced by a parameterised layer.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [a, b] => Ok((a, b)),
        ref s => Err(shape(format!("{what}: expected rank 2, got {s:?}"))),
    }
}

fn dims4(t: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [a, b, c, d] => Ok((a, b, c, d)),
        ref s => Err(shape(format!("{what}: expected rank 4, got {s:?}"))),
    }
}

pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (batch, p) = dims2(input, "dense input")?;
    let (wp, q) = dims2(weights, "dense weights")?;
    if wp != p || bias.shape() != [q] {
        return Err(shape(format!(
            "dense: input {:?}, weights {:?}, bias {:?}",
            input.shape(),
            weights.shape(),
            bias.shape()
        )));
    }
    let w = weights.data();
    let mut out = Tensor::zeros(&[batch, q]);
    for b in 0..batch {
        let x = input.row(b);
        let o = out.row_mut(b);
        o.copy_from_slice(bias.data());
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let w_row = &w[i * q..(i + 1) * q];
            for (oj, wij) in o.iter_mut().zip(w_row) {
                *oj += xi * wij;
            }
        }
    }
    Ok(out)
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, upstream: &Tensor) -> Result<LayerGrads> {
    let (batch, p) = dims2(input, "dense input")?;
    let (_, q) = dims2(weights, "dense weights")?;
    if upstream.shape() != [batch, q] {
        return Err(shape(format!(
            "dense backward: upstream {:?}, expected [{batch}, {q}]",
            upstream.shape()
        )));
    }
    let w = weights.data();
    let mut d_input = Tensor::zeros(&[batch, p]);
    let mut d_weight = Tensor::zeros(&[p, q]);
    let mut d_bias = Tensor::zeros(&[q]);
    for b in 0..batch {
        let x = input.row(b);
        let g = upstream.row(b);
        for (db, gj) in d_bias.data_mut().iter_mut().zip(g) {
            *db += gj;
        }
        let dw = d_weight.data_mut();
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut dw[i * q..(i + 1) * q];
            for (dwij, gj) in row.iter_mut().zip(g) {
                *dwij += xi * gj;
            }
        }
        let dx = d_input.row_mut(b);
        for (i, dxi) in dx.iter_mut().enumerate() {
            let w_row = &w[i * q..(i + 1) * q];
            *dxi = w_row.iter().zip(g).map(|(a, b)| a * b).sum();
        }
    }
    Ok(LayerGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    })
}

/// Geometry of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        ConvGeometry {
            stride: 1,
            padding: 0,
        }
    }
}

impl ConvGeometry {
    /// Output extent along one axis, or an error when the kernel does not fit.
    pub fn output_extent(&self, input: usize, kernel: usize) -> Result<usize> {
        if self.stride == 0 {
            return Err(invalid("convolution stride must be at least 1"));
        }
        let padded = input + 2 * self.padding;
        if kernel == 0 || kernel > padded {
            return Err(invalid(format!(
                "kernel extent {kernel} does not fit padded input extent {padded}"
            )));
        }
        Ok((padded - kernel) / self.stride + 1)
    }
}

struct ConvDims {
    batch: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    oh: usize,
    ow: usize,
}

fn conv_dims(input: &Tensor, kernels: &Tensor, geom: ConvGeometry) -> Result<ConvDims> {
    let (batch, h, w, cin) = dims4(input, "conv input")?;
    let (kh, kw, kcin, cout) = dims4(kernels, "conv kernels")?;
    if kcin != cin {
        return Err(shape(format!(
            "conv: input has {cin} channels, kernels expect {kcin}"
        )));
    }
    let oh = geom.output_extent(h, kh)?;
    let ow = geom.output_extent(w, kw)?;
    Ok(ConvDims {
        batch,
        h,
        w,
        cin,
        kh,
        kw,
        cout,
        oh,
        ow,
    })
}

/// Cross-correlation of `input` with `kernels`, plus a per-output-channel bias.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    geom: ConvGeometry,
) -> Result<Tensor> {
    let d = conv_dims(input, kernels, geom)?;
    if bias.shape() != [d.cout] {
        return Err(shape(format!(
            "conv bias {:?}, expected [{}]",
            bias.shape(),
            d.cout
        )));
    }
    let x = input.data();
    let k = kernels.data();
    let mut out = Tensor::zeros(&[d.batch, d.oh, d.ow, d.cout]);
    let o = out.data_mut();
    let pad = geom.padding as isize;
    for b in 0..d.batch {
        for oy in 0..d.oh {
            for ox in 0..d.ow {
                let base = ((b * d.oh + oy) * d.ow + ox) * d.cout;
                let acc = &mut o[base..base + d.cout];
                acc.copy_from_slice(bias.data());
                for ky in 0..d.kh {
                    let iy = (oy * geom.stride + ky) as isize - pad;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for kx in 0..d.kw {
                        let ix = (ox * geom.stride + kx) as isize - pad;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        let in_base = ((b * d.h + iy as usize) * d.w + ix as usize) * d.cin;
                        for ci in 0..d.cin {
                            let xv = x[in_base + ci];
                            if xv == 0.0 {
                                continue;
                            }
                            let k_base = ((ky * d.kw + kx) * d.cin + ci) * d.cout;
                            for (a, kv) in acc.iter_mut().zip(&k[k_base..k_base + d.cout]) {
                                *a += xv * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    upstream: &Tensor,
    geom: ConvGeometry,
) -> Result<LayerGrads> {
    let d = conv_dims(input, kernels, geom)?;
    if upstream.shape() != [d.batch, d.oh, d.ow, d.cout] {
        return Err(shape(format!(
            "conv backward: upstream {:?}, expected [{}, {}, {}, {}]",
            upstream.shape(),
            d.batch,
            d.oh,
            d.ow,
            d.cout
        )));
    }
    let x = input.data();
    let k = kernels.data();
    let g = upstream.data();
    let mut d_input = Tensor::zeros(input.shape());
    let mut d_kernel = Tensor::zeros(kernels.shape());
    let mut d_bias = Tensor::zeros(&[d.cout]);
    let dx = d_input.data_mut();
    let dk = d_kernel.data_mut();
    let db = d_bias.data_mut();
    let pad = geom.padding as isize;
    for b in 0..d.batch {
        for oy in 0..d.oh {
            for ox in 0..d.ow {
                let base = ((b * d.oh + oy) * d.ow + ox) * d.cout;
                let gv = &g[base..base + d.cout];
                for (dbv, gc) in db.iter_mut().zip(gv) {
                    *dbv += gc;
                }
                for ky in 0..d.kh {
                    let iy = (oy * geom.stride + ky) as isize - pad;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for kx in 0..d.kw {
                        let ix = (ox * geom.stride + kx) as isize - pad;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        let in_base = ((b * d.h + iy as usize) * d.w + ix as usize) * d.cin;
                        for ci in 0..d.cin {
                            let xv = x[in_base + ci];
                            let k_base = ((ky * d.kw + kx) * d.cin + ci) * d.cout;
                            let k_row = &k[k_base..k_base + d.cout];
                            let dk_row = &mut dk[k_base..k_base + d.cout];
                            let mut acc = 0.0;
                            for c in 0..d.cout {
                                dk_row[c] += xv * gv[c];
                                acc += k_row[c] * gv[c];
                            }
                            dx[in_base + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(LayerGrads {
        input: d_input,
        weight: d_kernel,
        bias: d_bias,
    })
}

/// Per-channel spatial mean: `[B, H, W, C] -> [B, C]`.
pub fn gap_forward(input: &Tensor) -> Result<Tensor> {
    let (batch, h, w, c) = dims4(input, "global average pool")?;
    if h == 0 || w == 0 {
        return Err(shape("global average pool over an empty spatial grid"));
    }
    let area = (h * w) as f64;
    let mut out = Tensor::zeros(&[batch, c]);
    for b in 0..batch {
        let src = input.row(b);
        let dst = out.row_mut(b);
        for pixel in src.chunks(c) {
            for (o, v) in dst.iter_mut().zip(pixel) {
                *o += v;
            }
        }
        for o in dst.iter_mut() {
            *o /= area;
        }
    }
    Ok(out)
}

pub fn gap_backward(input_shape: &[usize], upstream: &Tensor) -> Result<Tensor> {
    let [batch, h, w, c] = *input_shape else {
        return Err(shape(format!(
            "global average pool backward: input shape {input_shape:?}"
        )));
    };
    if upstream.shape() != [batch, c] {
        return Err(shape(format!(
            "global average pool backward: upstream {:?}",
            upstream.shape()
        )));
    }
    let area = (h * w) as f64;
    let mut out = Tensor::zeros(input_shape);
    for b in 0..batch {
        let g = upstream.row(b);
        for pixel in out.row_mut(b).chunks_mut(c) {
            for (o, gv) in pixel.iter_mut().zip(g) {
                *o = gv / area;
            }
        }
    }
    Ok(out)
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Gradient of ReLU; the subgradient at zero is taken as zero.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if input.shape() != upstream.shape() {
        return Err(shape("relu backward: shape mismatch"));
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Inverted dropout. Returns the output and the keep mask (1 kept, 0 dropped).
/// Outside training the mask is all ones and the input passes through.
pub fn dropout_forward<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor, Tensor)> {
    check_dropout_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((input.clone(), Tensor::filled(input.shape(), 1.0)));
    }
    let scale = 1.0 / (1.0 - rate);
    let mut mask = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for ((m, o), x) in mask
        .data_mut()
        .iter_mut()
        .zip(out.data_mut())
        .zip(input.data())
    {
        if rng.random::<f64>() >= rate {
            *m = 1.0;
            *o = x * scale;
        }
    }
    Ok((out, mask))
}

pub fn dropout_backward(mask: &Tensor, rate: f64, upstream: &Tensor) -> Result<Tensor> {
    if mask.shape() != upstream.shape() {
        return Err(shape("dropout backward: shape mismatch"));
    }
    let scale = if rate == 0.0 { 1.0 } else { 1.0 / (1.0 - rate) };
    let data = mask
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(m, g)| m * g * scale)
        .collect();
    Tensor::new(mask.shape().to_vec(), data)
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Softmax of one logit vector, shifted by its maximum.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax of `[B, n]` logits.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (batch, n) = dims2(logits, "softmax")?;
    let mut data = Vec::with_capacity(batch * n);
    for row in logits.rows() {
        data.extend(softmax_row(row));
    }
    Tensor::new(vec![batch, n], data)
}
