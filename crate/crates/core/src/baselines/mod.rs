//! Reference systems: the block-wise feed-forward autoencoder and PAM2 with
//! a multi-symbol feed-forward receiver.

pub mod ffnn;
pub mod pam2;

use ndarray::{Array2, Axis};

use crate::error::Result;
use crate::nn::activations::softmax_in_place;
use crate::nn::{AffineInput, Graph, ParamSet, Var};
use crate::transceiver::cell::{affine, vanilla_cell_step};
use crate::transceiver::{Activation, StepInput};

pub use ffnn::{FfnnAutoencoder, FfnnConfig};
pub use pam2::{Pam2Config, RxFfnn};

/// Output nonlinearity of a layer stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Head {
    ClipTx,
    Softmax,
}

/// Applies consecutive `(W, b)` tensor pairs of `params[range]`: ReLU on
/// hidden layers, `head` on the last.
pub(crate) fn eval_stack(
    params: &ParamSet,
    first: usize,
    layers: usize,
    input: StepInput<'_>,
    head: Head,
) -> Result<Array2<f64>> {
    let empty = Array2::zeros((input.rows(), 0));
    let layer = |l: usize, inp: StepInput<'_>| -> Result<Array2<f64>> {
        let w = params.at(first + 2 * l).value();
        let b = params.at(first + 2 * l + 1).value();
        if l + 1 < layers {
            return vanilla_cell_step(inp, empty.view(), w, b, Activation::Relu);
        }
        match head {
            Head::ClipTx => vanilla_cell_step(inp, empty.view(), w, b, Activation::ClipTx),
            Head::Softmax => {
                let mut z = affine(inp, empty.view(), w, b)?;
                for row in z.axis_iter_mut(Axis(0)) {
                    softmax_in_place(row);
                }
                Ok(z)
            }
        }
    };
    let mut x = layer(0, input)?;
    for l in 1..layers {
        x = layer(l, StepInput::Dense(x.view()))?;
    }
    Ok(x)
}

/// Graph counterpart of [`eval_stack`]; `vars[first..]` are bound tensors.
pub(crate) fn record_stack(
    g: &mut Graph,
    vars: &[Var],
    first: usize,
    layers: usize,
    input: AffineInput,
    head: Head,
) -> Var {
    let mut input = input;
    let mut out = None;
    for l in 0..layers {
        let z = g.affine(input, None, vars[first + 2 * l], vars[first + 2 * l + 1]);
        let y = match (l + 1 == layers, head) {
            (true, Head::ClipTx) => g.clip_tx(z),
            (true, Head::Softmax) => g.softmax(z),
            (false, _) => g.relu(z),
        };
        input = AffineInput::Dense(y);
        out = Some(y);
    }
    out.expect("at least one layer")
}

/// Node count of a feed-forward stack: inputs of the first layer plus the
/// outputs of every layer.
pub(crate) fn stack_nodes(params: &ParamSet, first: usize, layers: usize) -> usize {
    let w = |l: usize| params.at(first + 2 * l).shape().to_vec();
    w(0)[1] + (0..layers).map(|l| w(l)[0]).sum::<usize>()
}
