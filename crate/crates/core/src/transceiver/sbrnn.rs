use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};
use rand::Rng;

use super::cell::{self, Activation, StepInput};
use super::{check_blocks, Autoencoder, CellKind, EdgeStates, MessageBatch, StateCarry, TransceiverConfig};
use crate::error::{Error, Result};
use crate::nn::activations::softmax_in_place;
use crate::nn::{AffineInput, Graph, ParamSet, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    TxForward,
    TxBackward,
    RxForward,
    RxBackward,
}

impl Dir {
    const ALL: [Dir; 4] = [Dir::TxForward, Dir::TxBackward, Dir::RxForward, Dir::RxBackward];

    fn prefix(self) -> &'static str {
        match self {
            Dir::TxForward => "txf",
            Dir::TxBackward => "txb",
            Dir::RxForward => "rxf",
            Dir::RxBackward => "rxb",
        }
    }

    fn activation(self) -> Activation {
        match self {
            Dir::TxForward | Dir::TxBackward => Activation::ClipTx,
            Dir::RxForward | Dir::RxBackward => Activation::Relu,
        }
    }

    fn ordinal(self) -> usize {
        self as usize
    }
}

/// Bidirectional recurrent autoencoder.
///
/// Parameters are stored in the order `txf`, `txb`, `rxf`, `rxb` (each with
/// `W`/`b`, or `W1..W3`/`b1..b3` for the gated cell), then `softmax.W`,
/// `softmax.b`.
#[derive(Debug, Clone)]
pub struct Sbrnn {
    cfg: TransceiverConfig,
    params: ParamSet,
}

impl Sbrnn {
    /// Fresh transceiver with uniform Glorot weights and zero biases.
    pub fn new<R: Rng + ?Sized>(cfg: TransceiverConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        for dir in Dir::ALL {
            let (rows, cols) = Self::layer_shape(&cfg, dir);
            for (w, b) in Self::layer_names(&cfg, dir) {
                params.push(w, Tensor::glorot_uniform(rows, cols, rng));
                params.push(b, Tensor::zeros(&[rows]));
            }
        }
        let m = cfg.alphabet;
        params.push("softmax.W", Tensor::glorot_uniform(m, 4 * m, rng));
        params.push("softmax.b", Tensor::zeros(&[m]));
        Ok(Self { cfg, params })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(cfg: TransceiverConfig, params: ParamSet) -> Result<Self> {
        cfg.validate()?;
        let mut expected = Vec::new();
        for dir in Dir::ALL {
            let (rows, cols) = Self::layer_shape(&cfg, dir);
            for (w, b) in Self::layer_names(&cfg, dir) {
                expected.push((w, vec![rows, cols]));
                expected.push((b, vec![rows]));
            }
        }
        let m = cfg.alphabet;
        expected.push(("softmax.W".into(), vec![m, 4 * m]));
        expected.push(("softmax.b".into(), vec![m]));
        if params.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (i, (name, shape)) in expected.iter().enumerate() {
            if params.index_of(name) != Some(i) {
                return Err(Error::MissingTensor(name.clone()));
            }
            let t = params.at(i);
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    context: "transceiver parameter",
                    expected: shape.clone(),
                    actual: t.shape().to_vec(),
                });
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("transceiver parameters"));
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &TransceiverConfig {
        &self.cfg
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    fn layer_names(cfg: &TransceiverConfig, dir: Dir) -> Vec<(String, String)> {
        let p = dir.prefix();
        match cfg.cell {
            CellKind::Vanilla => vec![(format!("{p}.W"), format!("{p}.b"))],
            CellKind::LstmGru => (1..=3)
                .map(|i| (format!("{p}.W{i}"), format!("{p}.b{i}")))
                .collect(),
        }
    }

    fn layer_shape(cfg: &TransceiverConfig, dir: Dir) -> (usize, usize) {
        let (m, n) = (cfg.alphabet, cfg.block_len);
        match dir {
            Dir::TxForward | Dir::TxBackward => (n, m + n),
            Dir::RxForward | Dir::RxBackward => (2 * m, n + 2 * m),
        }
    }

    fn state_width(&self, dir: Dir) -> usize {
        Self::layer_shape(&self.cfg, dir).0
    }

    /// Index of the first tensor of a direction within the parameter set.
    fn offset(&self, dir: Dir) -> usize {
        dir.ordinal() * 2 * self.cfg.cell.layers()
    }

    fn softmax_offset(&self) -> usize {
        8 * self.cfg.cell.layers()
    }

    fn step(&self, dir: Dir, input: StepInput<'_>, state: &Array2<f64>) -> Result<Array2<f64>> {
        let o = self.offset(dir);
        let p = |i: usize| self.params.at(o + i).value();
        let act = dir.activation();
        match self.cfg.cell {
            CellKind::Vanilla => cell::vanilla_cell_step(input, state.view(), p(0), p(1), act),
            CellKind::LstmGru => cell::gru_cell_step(
                input,
                state.view(),
                [(p(0), p(1)), (p(2), p(3)), (p(4), p(5))],
                act,
            ),
        }
    }

    /// Runs one direction over `len` slots. Outputs are in slot order; the
    /// backward directions walk from the last slot to the first.
    fn run<'a>(
        &self,
        dir: Dir,
        len: usize,
        input: impl Fn(usize) -> StepInput<'a>,
        init: Option<&Array2<f64>>,
        batch: usize,
    ) -> Result<Vec<Array2<f64>>> {
        let width = self.state_width(dir);
        let mut state = match init {
            Some(h) if h.dim() == (batch, width) => h.clone(),
            Some(h) => {
                return Err(Error::ShapeMismatch {
                    context: "initial state",
                    expected: vec![batch, width],
                    actual: vec![h.nrows(), h.ncols()],
                })
            }
            None => Array2::zeros((batch, width)),
        };
        let mut out = vec![Array2::zeros((0, 0)); len];
        let backward = matches!(dir, Dir::TxBackward | Dir::RxBackward);
        for i in 0..len {
            let t = if backward { len - 1 - i } else { i };
            state = self.step(dir, input(t), &state)?;
            out[t] = state.clone();
        }
        Ok(out)
    }

    /// Transmitter over a batch of sequences: returns one `batch x n` block
    /// per slot, each the average of the forward and backward outputs, and
    /// the final edge states.
    pub fn tx_encode(
        &self,
        messages: &MessageBatch,
        init: &EdgeStates,
    ) -> Result<(Vec<Array2<f64>>, EdgeStates)> {
        self.check_messages(messages)?;
        let len = messages.len();
        let batch = messages.batch();
        let f = self.run(Dir::TxForward, len, |t| messages.step_input(t), init.forward.as_ref(), batch)?;
        let b = self.run(Dir::TxBackward, len, |t| messages.step_input(t), init.backward.as_ref(), batch)?;
        let blocks = f.iter().zip(&b).map(|(f, b)| (f + b) * 0.5).collect();
        let finals = EdgeStates {
            forward: f.last().cloned(),
            backward: b.first().cloned(),
        };
        Ok((blocks, finals))
    }

    fn check_messages(&self, messages: &MessageBatch) -> Result<()> {
        if messages.alphabet() != self.cfg.alphabet {
            return Err(Error::ShapeMismatch {
                context: "message alphabet",
                expected: vec![self.cfg.alphabet],
                actual: vec![messages.alphabet()],
            });
        }
        Ok(())
    }

    /// `softmax(W_s (f; b) + b_s)` row-wise.
    fn readout(&self, forward: &Array2<f64>, backward: &Array2<f64>) -> Array2<f64> {
        let o = self.softmax_offset();
        let w = self.params.at(o).value();
        let bias = self.params.at(o + 1).value();
        let half = 2 * self.cfg.alphabet;
        let mut z = Array2::zeros((forward.nrows(), self.cfg.alphabet));
        z += bias;
        general_mat_mul(1.0, forward, &w.slice(s![.., ..half]).t(), 1.0, &mut z);
        general_mat_mul(1.0, backward, &w.slice(s![.., half..]).t(), 1.0, &mut z);
        for row in z.axis_iter_mut(Axis(0)) {
            softmax_in_place(row);
        }
        z
    }

    /// Receiver over `batch x n` blocks: one `batch x M` posterior per slot
    /// and the final edge states.
    pub fn rx_decode(
        &self,
        received: &[Array2<f64>],
        init: &EdgeStates,
    ) -> Result<(Vec<Array2<f64>>, EdgeStates)> {
        let batch = check_blocks(received, self.cfg.block_len)?;
        let len = received.len();
        let input = |t: usize| StepInput::Dense(received[t].view());
        let f = self.run(Dir::RxForward, len, input, init.forward.as_ref(), batch)?;
        let b = self.run(Dir::RxBackward, len, input, init.backward.as_ref(), batch)?;
        let probs = f.iter().zip(&b).map(|(f, b)| self.readout(f, b)).collect();
        let finals = EdgeStates {
            forward: f.last().cloned(),
            backward: b.first().cloned(),
        };
        Ok((probs, finals))
    }

    fn record_dir(
        &self,
        g: &mut Graph,
        vars: &[Var],
        dir: Dir,
        inputs: &[AffineInput],
        init: Option<&Array2<f64>>,
        batch: usize,
    ) -> Vec<Var> {
        let o = self.offset(dir);
        let layers = &vars[o..o + 2 * self.cfg.cell.layers()];
        let width = self.state_width(dir);
        let mut state = g.leaf(init.cloned().unwrap_or_else(|| Array2::zeros((batch, width))));
        let len = inputs.len();
        let backward = matches!(dir, Dir::TxBackward | Dir::RxBackward);
        let mut out = vec![state; len];
        for i in 0..len {
            let t = if backward { len - 1 - i } else { i };
            let input = inputs[t].clone();
            state = match self.cfg.cell {
                CellKind::Vanilla => cell::record_vanilla(g, input, state, layers, dir.activation()),
                CellKind::LstmGru => cell::record_gru(g, input, state, layers, dir.activation()),
            };
            out[t] = state;
        }
        out
    }
}

fn finals(g: &Graph, f: &[Var], b: &[Var]) -> EdgeStates {
    EdgeStates {
        forward: f.last().map(|&v| g.value(v).clone()),
        backward: b.first().map(|&v| g.value(v).clone()),
    }
}

impl Autoencoder for Sbrnn {
    fn alphabet(&self) -> usize {
        self.cfg.alphabet
    }

    fn block_len(&self) -> usize {
        self.cfg.block_len
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn node_count(&self) -> usize {
        self.params
            .iter()
            .filter(|(_, t)| t.shape().len() == 2)
            .map(|(_, t)| t.shape()[0] + t.shape()[1])
            .sum()
    }

    fn record_tx(
        &self,
        g: &mut Graph,
        vars: &[Var],
        messages: &MessageBatch,
        init: &EdgeStates,
    ) -> (Vec<Var>, EdgeStates) {
        let batch = messages.batch();
        let inputs: Vec<AffineInput> = (0..messages.len())
            .map(|t| AffineInput::OneHot {
                indices: messages.slot(t).to_vec(),
                width: messages.alphabet(),
            })
            .collect();
        let f = self.record_dir(g, vars, Dir::TxForward, &inputs, init.forward.as_ref(), batch);
        let b = self.record_dir(g, vars, Dir::TxBackward, &inputs, init.backward.as_ref(), batch);
        let blocks = f
            .iter()
            .zip(&b)
            .map(|(&f, &b)| {
                let sum = g.add(f, b);
                g.scale(sum, 0.5)
            })
            .collect();
        let edges = finals(g, &f, &b);
        (blocks, edges)
    }

    fn record_rx(
        &self,
        g: &mut Graph,
        vars: &[Var],
        received: &[Var],
        init: &EdgeStates,
    ) -> (Vec<Var>, EdgeStates) {
        let batch = received.first().map_or(0, |&v| g.value(v).nrows());
        let inputs: Vec<AffineInput> = received.iter().map(|&v| AffineInput::Dense(v)).collect();
        let f = self.record_dir(g, vars, Dir::RxForward, &inputs, init.forward.as_ref(), batch);
        let b = self.record_dir(g, vars, Dir::RxBackward, &inputs, init.backward.as_ref(), batch);
        let o = self.softmax_offset();
        let probs = f
            .iter()
            .zip(&b)
            .map(|(&f, &b)| {
                let h = g.concat_cols(&[f, b]);
                let z = g.dense(h, vars[o], vars[o + 1]);
                g.softmax(z)
            })
            .collect();
        let edges = finals(g, &f, &b);
        (probs, edges)
    }

    fn encode(&self, messages: &MessageBatch) -> Result<Vec<Array2<f64>>> {
        Ok(self.tx_encode(messages, &EdgeStates::default())?.0)
    }

    fn visit_windows(
        &self,
        received: &[Array2<f64>],
        window: usize,
        carry: StateCarry,
        visit: &mut dyn FnMut(usize, &[Array2<f64>]),
    ) -> Result<()> {
        let batch = check_blocks(received, self.cfg.block_len)?;
        if window == 0 || received.len() < window {
            return Err(Error::TooShort {
                needed: window.max(1),
                got: received.len(),
            });
        }
        let input = |t: usize| StepInput::Dense(received[t].view());
        let streamed = match carry {
            StateCarry::None => None,
            StateCarry::ForwardOnly | StateCarry::Both => {
                Some(self.run(Dir::RxForward, received.len(), input, None, batch)?)
            }
        };
        let mut backward_init: Option<Array2<f64>> = None;
        for k in 0..=received.len() - window {
            let local = |t: usize| StepInput::Dense(received[k + t].view());
            let own_forward;
            let forward: &[Array2<f64>] = match &streamed {
                Some(all) => &all[k..k + window],
                None => {
                    own_forward = self.run(Dir::RxForward, window, local, None, batch)?;
                    &own_forward
                }
            };
            let init = match carry {
                StateCarry::Both => backward_init.as_ref(),
                _ => None,
            };
            let backward = self.run(Dir::RxBackward, window, local, init, batch)?;
            let probs: Vec<Array2<f64>> = forward
                .iter()
                .zip(&backward)
                .map(|(f, b)| self.readout(f, b))
                .collect();
            if carry == StateCarry::Both {
                backward_init = Some(backward[0].clone());
            }
            visit(k, &probs);
        }
        Ok(())
    }
}
