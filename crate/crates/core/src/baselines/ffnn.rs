//! Block-wise feed-forward autoencoder: each message is mapped to one block
//! and each received block decoded on its own.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{eval_stack, record_stack, stack_nodes, Head};
use crate::error::{Error, Result};
use crate::nn::{AffineInput, Graph, ParamSet, Tensor, Var};
use crate::transceiver::{check_blocks, Autoencoder, EdgeStates, MessageBatch, StateCarry, StepInput};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FfnnConfig {
    pub alphabet: usize,
    pub block_len: usize,
    /// Transmitter layer widths; the last must equal `block_len`.
    pub tx_widths: Vec<usize>,
    /// Receiver layer widths; the last must equal `alphabet`.
    pub rx_widths: Vec<usize>,
}

impl FfnnConfig {
    /// Transmitter `(2M, 2M, n)`, receiver `(2M, 2M, M)`.
    pub fn standard(alphabet: usize, block_len: usize) -> Self {
        let m = alphabet;
        Self {
            alphabet,
            block_len,
            tx_widths: vec![2 * m, 2 * m, block_len],
            rx_widths: vec![2 * m, 2 * m, m],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet < 2 || self.block_len == 0 {
            return Err(Error::InvalidConfig("alphabet and block_len must be positive".into()));
        }
        if self.tx_widths.last() != Some(&self.block_len) {
            return Err(Error::InvalidConfig("last transmitter width must equal block_len".into()));
        }
        if self.rx_widths.last() != Some(&self.alphabet) {
            return Err(Error::InvalidConfig("last receiver width must equal alphabet".into()));
        }
        if self.tx_widths.iter().chain(&self.rx_widths).any(|&w| w == 0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// `10M + 2n` for the standard widths.
    pub fn node_count_formula(alphabet: usize, block_len: usize) -> usize {
        10 * alphabet + 2 * block_len
    }
}

#[derive(Debug, Clone)]
pub struct FfnnAutoencoder {
    cfg: FfnnConfig,
    params: ParamSet,
}

impl FfnnAutoencoder {
    pub fn new<R: Rng + ?Sized>(cfg: FfnnConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        for (side, input, widths) in [
            ("tx", cfg.alphabet, &cfg.tx_widths),
            ("rx", cfg.block_len, &cfg.rx_widths),
        ] {
            let mut fan_in = input;
            for (l, &w) in widths.iter().enumerate() {
                params.push(format!("{side}.W{}", l + 1), Tensor::glorot_uniform(w, fan_in, rng));
                params.push(format!("{side}.b{}", l + 1), Tensor::zeros(&[w]));
                fan_in = w;
            }
        }
        Ok(Self { cfg, params })
    }

    pub fn from_params(cfg: FfnnConfig, params: ParamSet) -> Result<Self> {
        cfg.validate()?;
        let mut i = 0;
        for (side, input, widths) in [
            ("tx", cfg.alphabet, &cfg.tx_widths),
            ("rx", cfg.block_len, &cfg.rx_widths),
        ] {
            let mut fan_in = input;
            for (l, &w) in widths.iter().enumerate() {
                for (name, shape) in [
                    (format!("{side}.W{}", l + 1), vec![w, fan_in]),
                    (format!("{side}.b{}", l + 1), vec![w]),
                ] {
                    if params.index_of(&name) != Some(i) {
                        return Err(Error::MissingTensor(name));
                    }
                    if params.at(i).shape() != shape.as_slice() {
                        return Err(Error::ShapeMismatch {
                            context: "feed-forward parameter",
                            expected: shape,
                            actual: params.at(i).shape().to_vec(),
                        });
                    }
                    i += 1;
                }
                fan_in = w;
            }
        }
        if i != params.len() {
            return Err(Error::Checkpoint(format!("expected {i} tensors, found {}", params.len())));
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &FfnnConfig {
        &self.cfg
    }

    fn rx_first(&self) -> usize {
        2 * self.cfg.tx_widths.len()
    }

    /// Encodes zero-based messages of one slot into a `batch x n` block.
    pub fn encode_slot(&self, input: StepInput<'_>) -> Result<Array2<f64>> {
        eval_stack(&self.params, 0, self.cfg.tx_widths.len(), input, Head::ClipTx)
    }

    /// Posteriors for a `batch x n` block.
    pub fn decode_block(&self, block: &Array2<f64>) -> Result<Array2<f64>> {
        eval_stack(
            &self.params,
            self.rx_first(),
            self.cfg.rx_widths.len(),
            StepInput::Dense(block.view()),
            Head::Softmax,
        )
    }
}

impl Autoencoder for FfnnAutoencoder {
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
        stack_nodes(&self.params, 0, self.cfg.tx_widths.len())
            + stack_nodes(&self.params, self.rx_first(), self.cfg.rx_widths.len())
    }

    fn record_tx(
        &self,
        g: &mut Graph,
        vars: &[Var],
        messages: &MessageBatch,
        _init: &EdgeStates,
    ) -> (Vec<Var>, EdgeStates) {
        let blocks = (0..messages.len())
            .map(|t| {
                let input = AffineInput::OneHot {
                    indices: messages.slot(t).to_vec(),
                    width: messages.alphabet(),
                };
                record_stack(g, vars, 0, self.cfg.tx_widths.len(), input, Head::ClipTx)
            })
            .collect();
        (blocks, EdgeStates::default())
    }

    fn record_rx(
        &self,
        g: &mut Graph,
        vars: &[Var],
        received: &[Var],
        _init: &EdgeStates,
    ) -> (Vec<Var>, EdgeStates) {
        let first = self.rx_first();
        let layers = self.cfg.rx_widths.len();
        let probs = received
            .iter()
            .map(|&y| record_stack(g, vars, first, layers, AffineInput::Dense(y), Head::Softmax))
            .collect();
        (probs, EdgeStates::default())
    }

    fn encode(&self, messages: &MessageBatch) -> Result<Vec<Array2<f64>>> {
        if messages.alphabet() != self.cfg.alphabet {
            return Err(Error::ShapeMismatch {
                context: "message alphabet",
                expected: vec![self.cfg.alphabet],
                actual: vec![messages.alphabet()],
            });
        }
        (0..messages.len())
            .map(|t| self.encode_slot(messages.step_input(t)))
            .collect()
    }

    /// Blocks are decoded independently, so every window repeats the same
    /// per-block posteriors.
    fn visit_windows(
        &self,
        received: &[Array2<f64>],
        window: usize,
        _carry: StateCarry,
        visit: &mut dyn FnMut(usize, &[Array2<f64>]),
    ) -> Result<()> {
        check_blocks(received, self.cfg.block_len)?;
        if window == 0 || received.len() < window {
            return Err(Error::TooShort {
                needed: window.max(1),
                got: received.len(),
            });
        }
        let probs: Vec<Array2<f64>> = received
            .iter()
            .map(|b| self.decode_block(b))
            .collect::<Result<_>>()?;
        for k in 0..=received.len() - window {
            visit(k, &probs[k..k + window]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TX_CLIP;
    use crate::transceiver::{CellKind, Sbrnn, TransceiverConfig};
    use ndarray::s;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_widths_reproduce_published_node_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (n, want) in [(48, 736), (24, 688)] {
            let model = FfnnAutoencoder::new(FfnnConfig::standard(64, n), &mut rng).unwrap();
            assert_eq!(model.node_count(), want);
            assert_eq!(FfnnConfig::node_count_formula(64, n), want);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = FfnnConfig::standard(4, 6);
        c.tx_widths = vec![8, 5];
        assert!(c.validate().is_err());
        let mut c = FfnnConfig::standard(4, 6);
        c.rx_widths = vec![8, 0, 4];
        assert!(c.validate().is_err());
    }

    #[test]
    fn tx_range_and_posteriors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = FfnnAutoencoder::new(FfnnConfig::standard(8, 6), &mut rng).unwrap();
        let msgs = MessageBatch::from_sequences(&[vec![1, 8, 3], vec![2, 2, 5]], 8).unwrap();
        let blocks = model.encode(&msgs).unwrap();
        assert!(blocks.iter().all(|b| b.iter().all(|&v| (0.0..=TX_CLIP).contains(&v))));
        let p = model.decode_block(&blocks[0]).unwrap();
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let again = FfnnAutoencoder::from_params(model.config().clone(), model.params().clone()).unwrap();
        assert_eq!(again.encode(&msgs).unwrap(), blocks);
    }

    #[test]
    fn single_layer_stack_equals_recurrence_free_sbrnn() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = FfnnConfig {
            alphabet: 4,
            block_len: 6,
            tx_widths: vec![6],
            rx_widths: vec![4],
        };
        let mut ffnn = FfnnAutoencoder::new(cfg, &mut rng).unwrap();
        for (_, t) in ffnn.params_mut().iter_mut() {
            t.value_mut().mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        let tcfg = TransceiverConfig {
            alphabet: 4,
            block_len: 6,
            cell: CellKind::Vanilla,
            window: 1,
        };
        let mut sbrnn = Sbrnn::new(tcfg, &mut rng).unwrap();
        let p = ffnn.params().clone();
        {
            let sp = sbrnn.params_mut();
            for dir in ["txf", "txb"] {
                let w = sp.get_mut(&format!("{dir}.W")).unwrap().value_mut();
                w.fill(0.0);
                w.slice_mut(s![.., ..4]).assign(p.get("tx.W1").unwrap().value());
                *sp.get_mut(&format!("{dir}.b")).unwrap().value_mut() = p.get("tx.b1").unwrap().value().clone();
            }
        }
        let msgs = MessageBatch::from_sequences(&[vec![1, 4, 2, 3], vec![3, 3, 1, 2]], 4).unwrap();
        assert_eq!(ffnn.encode(&msgs).unwrap(), sbrnn.encode(&msgs).unwrap());
    }

    #[test]
    fn recorded_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = FfnnAutoencoder::new(FfnnConfig::standard(4, 6), &mut rng).unwrap();
        let msgs = MessageBatch::from_sequences(&[vec![1, 4], vec![2, 3]], 4).unwrap();
        let blocks = model.encode(&msgs).unwrap();
        let mut g = Graph::new();
        let vars = g.bind(model.params());
        let (tx, _) = model.record_tx(&mut g, &vars, &msgs, &EdgeStates::default());
        let (rx, _) = model.record_rx(&mut g, &vars, &tx, &EdgeStates::default());
        for t in 0..2 {
            assert_eq!(g.value(tx[t]), &blocks[t]);
            let p = model.decode_block(&blocks[t]).unwrap();
            assert!((g.value(rx[t]) - &p).iter().all(|d| d.abs() < 1e-15));
        }
        let mut windows = 0;
        model
            .visit_windows(&blocks, 1, StateCarry::ForwardOnly, &mut |_, p| {
                windows += 1;
                assert_eq!(p.len(), 1);
            })
            .unwrap();
        assert_eq!(windows, 2);
    }
}
