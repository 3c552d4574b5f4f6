//! Naive-loop `f64` forward pass used as the finite-difference oracle.
//!
//! Shares no kernels with the `f32` engine. Besides the loss it reports the
//! activation pattern (relu signs and pool winners) so a probe can tell
//! whether a perturbation crossed a point where the network is not
//! differentiable.

use crate::error::{Error, Result};
use crate::nn::network::{LayerSpec, NetworkSpec};
use crate::tensor::Tensor;

pub struct ReferenceOutput {
    pub logits: Vec<f64>,
    pub pattern: Vec<u32>,
}

/// Parameters are given as `f64` copies in spec order.
pub fn reference_forward(
    spec: &NetworkSpec,
    params: &[Vec<f64>],
    input: &Tensor,
) -> Result<ReferenceOutput> {
    reference_forward_pinned(spec, params, input, None)
}

/// With `pinned`, relu gates and pool winners are taken from that pattern
/// instead of the current values, so the result is the linear piece the
/// pattern belongs to.
pub fn reference_forward_pinned(
    spec: &NetworkSpec,
    params: &[Vec<f64>],
    input: &Tensor,
    pinned: Option<&[u32]>,
) -> Result<ReferenceOutput> {
    let shapes = spec.param_shapes()?;
    if shapes.len() != params.len() {
        return Err(Error::Shape("reference: parameter count mismatch".into()));
    }
    let mut shape = spec.input.shape().to_vec();
    let mut x: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let mut pattern = Vec::new();
    let mut p = 0;
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Conv {
                out_channels,
                kernel: k,
                stride,
                pad,
            } => {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let oh = (h + 2 * pad - k) / stride + 1;
                let ow = (w + 2 * pad - k) / stride + 1;
                let (wt, b) = (&params[p], &params[p + 1]);
                let mut y = vec![0.0; out_channels * oh * ow];
                for o in 0..out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut s = b[o];
                            for ci in 0..c {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iy = (oy * stride + ky) as isize - pad as isize;
                                        let ix = (ox * stride + kx) as isize - pad as isize;
                                        if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                            continue;
                                        }
                                        s += x[(ci * h + iy as usize) * w + ix as usize]
                                            * wt[((o * c + ci) * k + ky) * k + kx];
                                    }
                                }
                            }
                            y[(o * oh + oy) * ow + ox] = s;
                        }
                    }
                }
                x = y;
                shape = vec![out_channels, oh, ow];
                p += 2;
            }
            LayerSpec::Dense { out_units } => {
                let n = x.len();
                let (wt, b) = (&params[p], &params[p + 1]);
                x = (0..out_units)
                    .map(|i| b[i] + (0..n).map(|j| wt[i * n + j] * x[j]).sum::<f64>())
                    .collect();
                shape = vec![out_units];
                p += 2;
            }
            LayerSpec::Relu => {
                for v in &mut x {
                    let on = match pinned {
                        Some(pat) => pin(pat, pattern.len())? == 1,
                        None => *v > 0.0,
                    };
                    pattern.push(on as u32);
                    if !on {
                        *v = 0.0;
                    }
                }
            }
            LayerSpec::MaxPool => {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let mut y = Vec::with_capacity(c * h * w / 4);
                for ch in 0..c {
                    for oy in 0..h / 2 {
                        for ox in 0..w / 2 {
                            let mut best = 0;
                            let mut best_v = f64::NEG_INFINITY;
                            for (slot, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                                let v = x[(ch * h + 2 * oy + dy) * w + 2 * ox + dx];
                                if v > best_v {
                                    best_v = v;
                                    best = slot;
                                }
                            }
                            if let Some(pat) = pinned {
                                best = pin(pat, pattern.len())? as usize;
                                let (dy, dx) = (best / 2, best % 2);
                                best_v = x[(ch * h + 2 * oy + dy) * w + 2 * ox + dx];
                            }
                            pattern.push(best as u32);
                            y.push(best_v);
                        }
                    }
                }
                x = y;
                shape = vec![c, h / 2, w / 2];
            }
            // the loss consumes logits; a trailing softmax is not re-applied
            LayerSpec::Softmax => {}
        }
    }
    Ok(ReferenceOutput { logits: x, pattern })
}

fn pin(pattern: &[u32], i: usize) -> Result<u32> {
    pattern
        .get(i)
        .copied()
        .ok_or_else(|| Error::Shape("reference: pinned pattern too short".into()))
}

pub fn cross_entropy_f64(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    sum.ln() - (logits[target] - max)
}
