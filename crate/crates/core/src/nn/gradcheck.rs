//! Central finite-difference verification of analytic gradients.
//!
//! The numeric side evaluates the loss in `f64` (through
//! [`reference_forward`](crate::nn::reference::reference_forward) for
//! networks), so its noise floor sits far below the tolerance. When the
//! `±step` probes of an entry land on different activation patterns (a relu
//! or pool kink lies within the step) both probes are re-run with the
//! unperturbed pattern pinned: that evaluates the linear piece the analytic
//! gradient belongs to. In a 64×64 network almost every first-layer probe
//! crosses some kink, so skipping them would leave those tensors unchecked.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::network::{sample_gradients, Gradients, NetworkSpec, Params};
use crate::nn::reference::{cross_entropy_f64, reference_forward_pinned};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries_checked: usize,
    /// Entries re-probed with the activation pattern pinned.
    pub kinks_pinned: usize,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)` over the
    /// checked entries.
    pub rel_error: f64,
    /// Largest per-entry `|a − n| / max(|a|, |n|)` among entries whose
    /// gradient magnitude is at least 1% of the tensor's largest.
    pub max_entry_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
    /// Set when the forward or backward pass itself failed.
    pub error: Option<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.tensors.is_empty() && self.tensors.iter().all(|t| t.passed)
    }

    /// Largest per-tensor relative error.
    pub fn worst(&self) -> f64 {
        self.tensors.iter().map(|t| t.rel_error).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many evenly spaced entries per tensor.
    pub max_entries_per_tensor: Option<usize>,
}

impl GradCheckOptions {
    pub fn new(step: f64, tolerance: f64) -> Self {
        GradCheckOptions {
            step,
            tolerance,
            max_entries_per_tensor: None,
        }
    }
}

/// One probe of the scalar function: its value and the activation pattern
/// that produced it (empty for smooth functions).
pub struct Probe {
    pub loss: f64,
    pub pattern: Vec<u32>,
}

/// Generic driver: perturb each entry of `values` by `±step` and compare
/// `(f(θ+h) − f(θ−h)) / 2h` against `analytic`.
pub fn finite_diff_check<F>(
    names: &[String],
    values: &[Tensor],
    analytic: &[Tensor],
    opts: GradCheckOptions,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Vec<f64>], Option<&[u32]>) -> Result<Probe>,
{
    if values.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} gradient tensors for {} parameters",
            analytic.len(),
            values.len()
        )));
    }
    let mut probe: Vec<Vec<f64>> = values
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect();
    let base = f(&probe, None)?.pattern;
    let mut report = GradCheckReport {
        step: opts.step,
        tolerance: opts.tolerance,
        tensors: Vec::with_capacity(values.len()),
        error: None,
    };
    for (ti, (p, g)) in values.iter().zip(analytic).enumerate() {
        if g.shape() != p.shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} for parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let n = p.len();
        let stride = match opts.max_entries_per_tensor {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut pairs = Vec::new();
        let mut kinks = 0;
        for i in (0..n).step_by(stride) {
            let orig = probe[ti][i];
            probe[ti][i] = orig + opts.step;
            let mut plus = f(&probe, None)?;
            probe[ti][i] = orig - opts.step;
            let mut minus = f(&probe, None)?;
            if plus.pattern != minus.pattern {
                kinks += 1;
                minus = f(&probe, Some(&base))?;
                probe[ti][i] = orig + opts.step;
                plus = f(&probe, Some(&base))?;
            }
            probe[ti][i] = orig;
            let numeric = (plus.loss - minus.loss) / (2.0 * opts.step);
            pairs.push((g.data()[i] as f64, numeric));
        }
        let (mut d2, mut a2, mut n2) = (0.0f64, 0.0f64, 0.0f64);
        let mut largest = 0.0f64;
        for &(a, num) in &pairs {
            d2 += (a - num).powi(2);
            a2 += a * a;
            n2 += num * num;
            largest = largest.max(a.abs()).max(num.abs());
        }
        let denom = a2.sqrt().max(n2.sqrt());
        let rel = if denom == 0.0 { 0.0 } else { d2.sqrt() / denom };
        let max_entry = pairs
            .iter()
            .filter(|(a, num)| a.abs().max(num.abs()) >= 0.01 * largest && largest > 0.0)
            .map(|(a, num)| (a - num).abs() / a.abs().max(num.abs()))
            .fold(0.0, f64::max);
        report.tensors.push(TensorCheck {
            name: names.get(ti).cloned().unwrap_or_else(|| format!("param{ti}")),
            entries_checked: pairs.len(),
            kinks_pinned: kinks,
            rel_error: rel,
            max_entry_rel_error: max_entry,
            passed: rel < opts.tolerance && !pairs.is_empty(),
        });
    }
    Ok(report)
}

/// Check backprop of the cross-entropy loss for every parameter entry of
/// a network.
pub fn finite_diff_grad_check(
    spec: &NetworkSpec,
    params: &Params,
    input: &Tensor,
    target: usize,
    step: f64,
    tolerance: f64,
) -> GradCheckReport {
    finite_diff_grad_check_with(
        spec,
        params,
        input,
        target,
        GradCheckOptions::new(step, tolerance),
        |s, p, x, t| Ok(sample_gradients(s, p, x, t)?.2),
    )
}

/// Same check against an arbitrary analytic gradient routine.
pub fn finite_diff_grad_check_with<F>(
    spec: &NetworkSpec,
    params: &Params,
    input: &Tensor,
    target: usize,
    opts: GradCheckOptions,
    analytic: F,
) -> GradCheckReport
where
    F: Fn(&NetworkSpec, &Params, &Tensor, usize) -> Result<Gradients>,
{
    let run = || -> Result<GradCheckReport> {
        params.check_congruent(spec)?;
        if target >= spec.classes {
            return Err(Error::InvalidArgument(format!(
                "target {target} out of range for {} classes",
                spec.classes
            )));
        }
        let grads = analytic(spec, params, input, target)?;
        finite_diff_check(
            &spec.param_names(),
            &params.tensors,
            &grads.tensors,
            opts,
            |probe, pinned| {
                let out = reference_forward_pinned(spec, probe, input, pinned)?;
                Ok(Probe {
                    loss: cross_entropy_f64(&out.logits, target),
                    pattern: out.pattern,
                })
            },
        )
    };
    run().unwrap_or_else(|e| GradCheckReport {
        step: opts.step,
        tolerance: opts.tolerance,
        tensors: Vec::new(),
        error: Some(e.to_string()),
    })
}
