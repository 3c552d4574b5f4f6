//! Layer kernels: forward and backward passes for conv, max-pool, dense,
//! relu and the softmax cross-entropy loss.
//!
//! Images are `[channels, height, width]`, conv weights are
//! `[out_channels, in_channels, k, k]`, dense weights are `[out, in]`.

use crate::error::{Error, Result};
use crate::nn::gemm::{gemm, gemm_abt, gemm_rows, Op};
use crate::tensor::Tensor;

/// Output extent of a strided, zero-padded window sweep.
pub fn conv_out_extent(extent: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = extent + 2 * pad;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct ConvGeometry {
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn cols_rows(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn cols_len(&self) -> usize {
        self.cols_rows() * self.oh * self.ow
    }
}

fn conv_geometry(
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGeometry> {
    let [in_c, h, w] = input.shape() else {
        return Err(Error::Shape(format!(
            "conv input must be [C, H, W], got {:?}",
            input.shape()
        )));
    };
    let [out_c, w_in_c, kh, kw] = weights.shape() else {
        return Err(Error::Shape(format!(
            "conv weights must be [C_out, C_in, k, k], got {:?}",
            weights.shape()
        )));
    };
    if in_c != w_in_c {
        return Err(Error::Shape(format!(
            "input {:?} has {in_c} channels but weights {:?} expect {w_in_c}",
            input.shape(),
            weights.shape()
        )));
    }
    if kh != kw {
        return Err(Error::Shape(format!(
            "conv kernel must be square, got weights {:?}",
            weights.shape()
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("conv stride must be >= 1".into()));
    }
    let (Some(oh), Some(ow)) = (
        conv_out_extent(*h, *kh, stride, pad),
        conv_out_extent(*w, *kw, stride, pad),
    ) else {
        return Err(Error::Shape(format!(
            "kernel {kh}x{kw} does not fit input {:?} with padding {pad}",
            input.shape()
        )));
    };
    Ok(ConvGeometry {
        in_c: *in_c,
        h: *h,
        w: *w,
        out_c: *out_c,
        k: *kh,
        stride,
        pad,
        oh,
        ow,
    })
}

/// Range of output columns `ox` whose source column `ox·stride + kx − pad`
/// lies inside `[0, w)`.
fn valid_cols(g: &ConvGeometry, kx: usize) -> (usize, usize) {
    let shift = kx as isize - g.pad as isize;
    let s = g.stride as isize;
    // smallest ox with ox*s + shift >= 0
    let lo = if shift >= 0 { 0 } else { ((-shift) + s - 1) / s };
    // largest ox with ox*s + shift <= w - 1, plus one
    let last = g.w as isize - 1 - shift;
    let hi = if last < 0 { 0 } else { last / s + 1 };
    let lo = (lo as usize).min(g.ow);
    let hi = (hi as usize).min(g.ow).max(lo);
    (lo, hi)
}

/// Unfold zero-padded receptive fields into a `[C·k·k, oh·ow]` matrix.
fn im2col(input: &[f32], g: &ConvGeometry, cols: &mut [f32]) {
    let plane = g.oh * g.ow;
    for ci in 0..g.in_c {
        let src = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(g, kx);
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    line[..lo].fill(0.0);
                    line[hi..].fill(0.0);
                    let x0 = (lo * g.stride + kx) - g.pad;
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&src_row[x0..x0 + (hi - lo)]);
                    } else {
                        for (j, v) in line[lo..hi].iter_mut().enumerate() {
                            *v = src_row[x0 + j * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Fold a `[C·k·k, oh·ow]` matrix back onto the input grid, summing overlaps.
fn col2im(cols: &[f32], g: &ConvGeometry, out: &mut [f32]) {
    let plane = g.oh * g.ow;
    for ci in 0..g.in_c {
        let dst = &mut out[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(g, kx);
                if lo >= hi {
                    continue;
                }
                let x0 = (lo * g.stride + kx) - g.pad;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let line = &src[oy * g.ow + lo..oy * g.ow + hi];
                    if g.stride == 1 {
                        for (d, &v) in dst_row[x0..x0 + line.len()].iter_mut().zip(line) {
                            *d += v;
                        }
                    } else {
                        for (j, &v) in line.iter().enumerate() {
                            dst_row[x0 + j * g.stride] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Long-plane products go through the row-update kernel; the rest through
/// the blocked GEMM.
fn matmul(m: usize, k: usize, n: usize, a: &[f32], op_a: Op, b: &[f32], c: &mut [f32]) {
    if n >= 2048 {
        gemm_rows(m, k, n, a, op_a, b, c);
    } else {
        gemm(m, k, n, a, op_a, b, Op::N, 0.0, c);
    }
}

/// 2-D convolution (cross-correlation) with zero padding.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = conv_geometry(input, weights, stride, pad)?;
    if bias.len() != g.out_c {
        return Err(Error::Shape(format!(
            "bias {:?} does not match {} output channels",
            bias.shape(),
            g.out_c
        )));
    }
    let plane = g.oh * g.ow;
    let mut cols = vec![0.0; g.cols_len()];
    im2col(input.data(), &g, &mut cols);
    let mut out = vec![0.0; g.out_c * plane];
    matmul(g.out_c, g.cols_rows(), plane, weights.data(), Op::N, &cols, &mut out);
    for (oc, chunk) in out.chunks_mut(plane).enumerate() {
        let b = bias.data()[oc];
        for v in chunk {
            *v += b;
        }
    }
    Tensor::new(vec![g.out_c, g.oh, g.ow], out)
}

/// Gradients of a conv layer with respect to its input and parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    /// `None` when the caller asked to skip the input gradient.
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
    need_input_grad: bool,
) -> Result<ConvGrads> {
    let g = conv_geometry(input, weights, stride, pad)?;
    if grad_out.shape() != [g.out_c, g.oh, g.ow] {
        return Err(Error::Shape(format!(
            "conv output gradient {:?} does not match output shape {:?}",
            grad_out.shape(),
            [g.out_c, g.oh, g.ow]
        )));
    }
    let plane = g.oh * g.ow;
    let kdim = g.cols_rows();
    let mut cols = vec![0.0; g.cols_len()];
    im2col(input.data(), &g, &mut cols);

    let mut grad_w = vec![0.0; g.out_c * kdim];
    if plane >= 2048 {
        gemm_abt(g.out_c, kdim, plane, grad_out.data(), &cols, &mut grad_w);
    } else {
        gemm(g.out_c, plane, kdim, grad_out.data(), Op::N, &cols, Op::T, 0.0, &mut grad_w);
    }
    let grad_b: Vec<f32> = grad_out
        .data()
        .chunks(plane)
        .map(|c| c.iter().sum())
        .collect();

    let grad_in = if need_input_grad {
        // Reuse the column buffer for dL/dcols.
        matmul(kdim, g.out_c, plane, weights.data(), Op::T, grad_out.data(), &mut cols);
        let mut gi = vec![0.0; g.in_c * g.h * g.w];
        col2im(&cols, &g, &mut gi);
        Some(Tensor::new(input.shape().to_vec(), gi)?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: grad_in,
        weights: Tensor::new(weights.shape().to_vec(), grad_w)?,
        bias: Tensor::new(vec![g.out_c], grad_b)?,
    })
}

/// Winner positions of a 2×2 max-pool, one flat input index per output cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolMask {
    input_shape: Vec<usize>,
    winners: Vec<u32>,
}

impl PoolMask {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Flat row-major input index chosen for each output cell.
    pub fn winners(&self) -> &[u32] {
        &self.winners
    }

    /// `(row, col)` of the winner for output cell `(channel, oy, ox)`.
    pub fn winner_position(&self, channel: usize, oy: usize, ox: usize) -> (usize, usize) {
        let (h, w) = (self.input_shape[1], self.input_shape[2]);
        let (ow, oh) = (w / 2, h / 2);
        let flat = self.winners[(channel * oh + oy) * ow + ox] as usize;
        let within = flat - channel * h * w;
        (within / w, within % w)
    }
}

/// 2×2 max-pool with stride 2. Ties go to the first maximal element in
/// row-major order.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<(Tensor, PoolMask)> {
    let [c, h, w] = input.shape() else {
        return Err(Error::Shape(format!(
            "max-pool input must be [C, H, W], got {:?}",
            input.shape()
        )));
    };
    let (c, h, w) = (*c, *h, *w);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "max-pool needs even height and width, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut winners = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let tl = base + 2 * oy * w + 2 * ox;
                let mut best = tl;
                for idx in [tl + 1, tl + w, tl + w + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                winners.push(best as u32);
            }
        }
    }
    Ok((
        Tensor::new(vec![c, oh, ow], out)?,
        PoolMask {
            input_shape: input.shape().to_vec(),
            winners,
        },
    ))
}

pub fn maxpool2x2_backward(grad_out: &Tensor, mask: &PoolMask) -> Result<Tensor> {
    if grad_out.len() != mask.winners.len() {
        return Err(Error::Shape(format!(
            "pool gradient {:?} does not match mask for input {:?}",
            grad_out.shape(),
            mask.input_shape
        )));
    }
    let mut grad_in = Tensor::zeros(&mask.input_shape);
    let dst = grad_in.data_mut();
    for (&idx, &g) in mask.winners.iter().zip(grad_out.data()) {
        dst[idx as usize] += g;
    }
    Ok(grad_in)
}

/// Fully connected layer; the input is flattened.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = dense_dims(input, weights, bias)?;
    let mut out = bias.data().to_vec();
    gemm(m, n, 1, weights.data(), Op::N, input.data(), Op::N, 1.0, &mut out);
    Tensor::new(vec![m], out)
}

fn dense_dims(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    let [m, n] = weights.shape() else {
        return Err(Error::Shape(format!(
            "dense weights must be [out, in], got {:?}",
            weights.shape()
        )));
    };
    if input.len() != *n {
        return Err(Error::Shape(format!(
            "dense input {:?} has {} values but weights {:?} expect {n}",
            input.shape(),
            input.len(),
            weights.shape()
        )));
    }
    if bias.len() != *m {
        return Err(Error::Shape(format!(
            "dense bias {:?} does not match {m} outputs",
            bias.shape()
        )));
    }
    Ok((*m, *n))
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let [m, n] = weights.shape() else {
        return Err(Error::Shape(format!(
            "dense weights must be [out, in], got {:?}",
            weights.shape()
        )));
    };
    let (m, n) = (*m, *n);
    if input.len() != n || grad_out.len() != m {
        return Err(Error::Shape(format!(
            "dense backward: input {:?}, weights {:?}, output gradient {:?}",
            input.shape(),
            weights.shape(),
            grad_out.shape()
        )));
    }
    let go = grad_out.data();
    let x = input.data();
    let mut gw = vec![0.0; m * n];
    for (row, &g) in gw.chunks_mut(n).zip(go) {
        for (w, &xv) in row.iter_mut().zip(x) {
            *w = g * xv;
        }
    }
    let mut gi = vec![0.0; n];
    gemm(n, m, 1, weights.data(), Op::T, go, Op::N, 0.0, &mut gi);
    Ok(DenseGrads {
        input: Tensor::new(input.shape().to_vec(), gi)?,
        weights: Tensor::new(vec![m, n], gw)?,
        bias: grad_out.clone().reshape(&[m])?,
    })
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if !input.same_shape(grad_out) {
        return Err(Error::Shape(format!(
            "relu gradient {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

/// Numerically stable softmax over a flat score vector.
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut out = logits.clone();
    let mut sum = 0.0;
    for v in out.data_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    out.scale(1.0 / sum);
    out
}

/// Cross-entropy of `softmax(logits)` against a class index, with its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, target: usize) -> Result<(f32, Tensor)> {
    let c = logits.len();
    if target >= c {
        return Err(Error::InvalidArgument(format!(
            "target class {target} out of range for {c} classes"
        )));
    }
    let max = logits.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let sum: f32 = logits.data().iter().map(|v| (v - max).exp()).sum();
    let loss = sum.ln() - (logits.data()[target] - max);
    let mut grad = softmax(logits);
    grad.data_mut()[target] -= 1.0;
    Ok((loss.max(0.0), grad))
}
