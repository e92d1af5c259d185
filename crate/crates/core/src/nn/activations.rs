//! Element-wise activations and the cross-entropy loss, as plain functions.
//!
//! The differentiable graph in [`super::graph`] uses the same definitions;
//! these versions serve inference and act as the reference the graph is
//! tested against.

use std::f64::consts::FRAC_PI_4;

use ndarray::{ArrayView2, ArrayViewMut1, Axis};

use crate::error::{Error, Result};

/// Upper clipping level of the transmitter activation.
pub const TX_CLIP: f64 = FRAC_PI_4;

/// Floor applied to probabilities inside the logarithm of the loss.
pub const LOG_FLOOR: f64 = 1e-12;

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `relu(x) - relu(x - pi/4)`: identity on `[0, pi/4]`, constant outside.
///
/// Evaluated as a clamp so the output never leaves `[0, pi/4]` through
/// rounding.
pub fn clip_tx(x: f64) -> f64 {
    x.clamp(0.0, TX_CLIP)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`relu`], taking 0 at the kink.
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Derivative of [`clip_tx`], taking 0 at both kinks.
pub fn clip_tx_grad(x: f64) -> f64 {
    if x > 0.0 && x < TX_CLIP {
        1.0
    } else {
        0.0
    }
}

/// Numerically stable softmax of a vector.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let mut out = x.to_vec();
    softmax_in_place(ndarray::ArrayViewMut1::from(out.as_mut_slice()));
    Ok(out)
}

/// Softmax over a row, in place. Inputs are assumed finite.
pub fn softmax_in_place(mut row: ArrayViewMut1<f64>) {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    row.mapv_inplace(|v| {
        let e = (v - max).exp();
        sum += e;
        e
    });
    row.mapv_inplace(|v| v / sum);
}

/// Mean of `-ln(max(p[m], LOG_FLOOR))` over rows, `targets` zero-based.
pub fn cross_entropy(probs: ArrayView2<f64>, targets: &[usize]) -> Result<f64> {
    if probs.nrows() != targets.len() {
        return Err(Error::LengthMismatch {
            left: probs.nrows(),
            right: targets.len(),
        });
    }
    if targets.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (row, &m) in probs.axis_iter(Axis(0)).zip(targets) {
        if m >= row.len() {
            return Err(Error::MessageOutOfRange {
                message: m + 1,
                alphabet: row.len(),
            });
        }
        total -= row[m].max(LOG_FLOOR).ln();
    }
    Ok(total / targets.len() as f64)
}
