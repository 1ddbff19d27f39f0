//! Central finite-difference check of the analytic gradients.
//!
//! The numeric side only calls `forward`, so it shares no code with
//! `backward`. Loss is recomputed from the logits as `logsumexp(z) - z[label]`
//! to keep the difference quotient out of the softmax rounding.

use super::{LstmModel, CLASSES};
use crate::{Error, Result};

/// Gradients below this magnitude are compared on an absolute scale.
///
/// At `h = 1e-5` the quotient carries roughly `1e-11` of forward-pass
/// rounding, so relative error is meaningless for gradients much smaller
/// than `1e-6`.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    pub parameters: usize,
    pub max_abs: f64,
    /// `max |a - n| / max(|a| + |n|, RELATIVE_FLOOR)`.
    pub max_relative: f64,
}

fn cross_entropy(logits: &[f64; CLASSES], label: usize) -> f64 {
    let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - peak).exp()).sum();
    peak + sum.ln() - logits[label]
}

/// Numeric gradient of the unweighted loss, tensor by tensor in
/// [`LstmModel::tensors`] order.
pub fn numeric_gradient(
    model: &LstmModel,
    input: &[f64],
    steps: usize,
    label: usize,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    if label >= CLASSES || !(step > 0.0) {
        return Err(Error::Validation(format!("label {label}, step {step}")));
    }
    let mut probe = model.clone();
    let lens: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::with_capacity(lens.len());
    for (ti, len) in lens.into_iter().enumerate() {
        let mut grads = Vec::with_capacity(len);
        for i in 0..len {
            let orig = probe.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = orig + step;
            let plus = cross_entropy(&probe.forward(input, steps)?.1.logits, label);
            probe.tensors_mut()[ti][i] = orig - step;
            let minus = cross_entropy(&probe.forward(input, steps)?.1.logits, label);
            probe.tensors_mut()[ti][i] = orig;
            grads.push((plus - minus) / (2.0 * step));
        }
        out.push(grads);
    }
    Ok(out)
}

pub fn check(
    model: &LstmModel,
    input: &[f64],
    steps: usize,
    label: usize,
    step: f64,
) -> Result<GradientReport> {
    let numeric = numeric_gradient(model, input, steps, label, step)?;
    let (_, cache) = model.forward(input, steps)?;
    let analytic = model.backward(&cache, label, 1.0)?;
    let mut report = GradientReport {
        parameters: 0,
        max_abs: 0.0,
        max_relative: 0.0,
    };
    for (a, n) in analytic.tensors().iter().zip(&numeric) {
        for (&av, &nv) in a.iter().zip(n) {
            let diff = (av - nv).abs();
            report.parameters += 1;
            report.max_abs = report.max_abs.max(diff);
            report.max_relative = report
                .max_relative
                .max(diff / (av.abs() + nv.abs()).max(RELATIVE_FLOOR));
        }
    }
    Ok(report)
}
