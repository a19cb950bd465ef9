//! Central finite-difference gradient oracle.
//!
//! This is the independent route against which all analytic gradients are
//! tested. It only evaluates the given loss on perturbed copies of a
//! network; it never touches the backward pass.

use super::{DenseNet, GradBuffer};

/// Central-difference gradient of `loss` with respect to every parameter of
/// `net`, evaluated at step size `h`.
pub fn finite_difference(
    net: &DenseNet,
    mut loss: impl FnMut(&DenseNet) -> f64,
    h: f64,
) -> GradBuffer {
    let mut grads = GradBuffer::zeros_like(net);
    let count = net.parameter_count();
    let mut scratch = net.clone();
    let mut flat = Vec::with_capacity(count);
    for i in 0..count {
        scratch.nudge_param(i, h);
        let plus = loss(&scratch);
        scratch.nudge_param(i, -2.0 * h);
        let minus = loss(&scratch);
        scratch.nudge_param(i, h);
        flat.push((plus - minus) / (2.0 * h));
    }
    let mut idx = 0;
    for l in 0..grads.weights.len() {
        for v in grads.weights[l].iter_mut() {
            *v = flat[idx];
            idx += 1;
        }
        for v in grads.biases[l].iter_mut() {
            *v = flat[idx];
            idx += 1;
        }
    }
    grads
}

/// Worst relative disagreement between two gradient buffers. Entries where
/// both sides are below `1e-7` in magnitude count as exact agreement.
pub fn max_rel_error(analytic: &GradBuffer, numeric: &GradBuffer) -> f64 {
    analytic
        .flat()
        .zip(numeric.flat())
        .map(|(a, n)| {
            let denom = a.abs().max(n.abs());
            if denom < 1e-7 {
                0.0
            } else {
                (a - n).abs() / denom
            }
        })
        .fold(0.0, f64::max)
}
