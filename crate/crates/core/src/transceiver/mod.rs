//! The bidirectional recurrent transceiver and the interface shared with the
//! feed-forward autoencoder.

pub mod cell;
mod sbrnn;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, ParamSet, Var};

pub use cell::{Activation, StepInput};
pub use sbrnn::Sbrnn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Vanilla,
    LstmGru,
}

impl CellKind {
    /// Affine layers per direction.
    pub fn layers(self) -> usize {
        match self {
            CellKind::Vanilla => 1,
            CellKind::LstmGru => 3,
        }
    }
}

/// Which recurrent states survive from one window to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateCarry {
    /// Forward state carried, backward state restarted at zero.
    #[default]
    ForwardOnly,
    Both,
    None,
}

impl StateCarry {
    /// Keeps the parts of `finals` this rule carries into the next window.
    pub fn next(self, finals: EdgeStates) -> EdgeStates {
        match self {
            StateCarry::ForwardOnly => EdgeStates {
                forward: finals.forward,
                backward: None,
            },
            StateCarry::Both => finals,
            StateCarry::None => EdgeStates::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransceiverConfig {
    /// Alphabet size `M`.
    pub alphabet: usize,
    /// Samples per block `n`.
    pub block_len: usize,
    pub cell: CellKind,
    /// Processing window `W` in blocks.
    pub window: usize,
}

impl Default for TransceiverConfig {
    fn default() -> Self {
        Self {
            alphabet: 64,
            block_len: 48,
            cell: CellKind::Vanilla,
            window: 10,
        }
    }
}

impl TransceiverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphabet < 2 {
            return Err(Error::InvalidConfig("alphabet must be at least 2".into()));
        }
        if self.block_len == 0 {
            return Err(Error::InvalidConfig("block_len must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig("window must be at least 1".into()));
        }
        Ok(())
    }

    /// Closed-form node count: `15M + 6n` (vanilla) or `35M + 18n` (LSTM-GRU).
    pub fn node_count_formula(&self) -> usize {
        let (m, n) = (self.alphabet, self.block_len);
        match self.cell {
            CellKind::Vanilla => 15 * m + 6 * n,
            CellKind::LstmGru => 35 * m + 18 * n,
        }
    }
}

/// Recurrent states at the edges of a window. `None` stands for zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeStates {
    /// Forward state after the last slot.
    pub forward: Option<Array2<f64>>,
    /// Backward state after the first slot.
    pub backward: Option<Array2<f64>>,
}

/// Messages of a batch of equally long sequences, stored zero-based and
/// slot-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageBatch {
    alphabet: usize,
    batch: usize,
    slots: Vec<Vec<usize>>,
}

impl MessageBatch {
    /// From sequences of messages in `1..=alphabet`.
    pub fn from_sequences(sequences: &[Vec<usize>], alphabet: usize) -> Result<Self> {
        let batch = sequences.len();
        let len = sequences.first().map_or(0, Vec::len);
        let mut slots = vec![Vec::with_capacity(batch); len];
        for seq in sequences {
            if seq.len() != len {
                return Err(Error::LengthMismatch {
                    left: len,
                    right: seq.len(),
                });
            }
            for (slot, &m) in slots.iter_mut().zip(seq) {
                if m == 0 || m > alphabet {
                    return Err(Error::MessageOutOfRange {
                        message: m,
                        alphabet,
                    });
                }
                slot.push(m - 1);
            }
        }
        Ok(Self {
            alphabet,
            batch,
            slots,
        })
    }

    /// From zero-based indices, `slots[t][member]`.
    pub fn from_zero_based(slots: Vec<Vec<usize>>, alphabet: usize) -> Result<Self> {
        let batch = slots.first().map_or(0, Vec::len);
        for slot in &slots {
            if slot.len() != batch {
                return Err(Error::LengthMismatch {
                    left: batch,
                    right: slot.len(),
                });
            }
            if let Some(&m) = slot.iter().find(|&&m| m >= alphabet) {
                return Err(Error::MessageOutOfRange {
                    message: m + 1,
                    alphabet,
                });
            }
        }
        Ok(Self {
            alphabet,
            batch,
            slots,
        })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Number of slots.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Zero-based messages of every member at slot `t`.
    pub fn slot(&self, t: usize) -> &[usize] {
        &self.slots[t]
    }

    pub fn step_input(&self, t: usize) -> StepInput<'_> {
        StepInput::OneHot {
            indices: &self.slots[t],
            width: self.alphabet,
        }
    }

    /// One-based messages of member `b`.
    pub fn sequence(&self, b: usize) -> Vec<usize> {
        self.slots.iter().map(|s| s[b] + 1).collect()
    }

    /// Slot range `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Self {
        Self {
            alphabet: self.alphabet,
            batch: self.batch,
            slots: self.slots[start..start + len].to_vec(),
        }
    }

    /// Same slots with the slot order reversed.
    pub fn reversed(&self) -> Self {
        let mut slots = self.slots.clone();
        slots.reverse();
        Self {
            alphabet: self.alphabet,
            batch: self.batch,
            slots,
        }
    }
}

/// An end-to-end autoencoder trainable by the harness.
pub trait Autoencoder {
    fn alphabet(&self) -> usize;
    fn block_len(&self) -> usize;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    /// Node count computed from the parameter shapes.
    fn node_count(&self) -> usize;

    /// Records the transmitter over one window. `vars` come from binding
    /// [`Autoencoder::params`]. Returns one `batch x n` node per slot and the
    /// detached final edge states.
    fn record_tx(
        &self,
        g: &mut Graph,
        vars: &[Var],
        messages: &MessageBatch,
        init: &EdgeStates,
    ) -> (Vec<Var>, EdgeStates);

    /// Records the receiver over one window of `batch x n` blocks. Returns
    /// one `batch x M` posterior node per slot and the final edge states.
    fn record_rx(
        &self,
        g: &mut Graph,
        vars: &[Var],
        received: &[Var],
        init: &EdgeStates,
    ) -> (Vec<Var>, EdgeStates);

    /// Encodes whole sequences from zero states.
    fn encode(&self, messages: &MessageBatch) -> Result<Vec<Array2<f64>>>;

    /// Runs the receiver on every window `k..k + window` of the received
    /// blocks and hands the `window` raw posteriors (each `batch x M`) to
    /// `visit(k, ..)`.
    fn visit_windows(
        &self,
        received: &[Array2<f64>],
        window: usize,
        carry: StateCarry,
        visit: &mut dyn FnMut(usize, &[Array2<f64>]),
    ) -> Result<()>;
}

/// Checks that every block is `batch x n` and returns `batch`.
pub(crate) fn check_blocks(blocks: &[Array2<f64>], n: usize) -> Result<usize> {
    let batch = blocks.first().map_or(0, Array2::nrows);
    for b in blocks {
        if b.dim() != (batch, n) {
            return Err(Error::ShapeMismatch {
                context: "received block",
                expected: vec![batch, n],
                actual: vec![b.nrows(), b.ncols()],
            });
        }
        if !b.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("received block"));
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_batch_layout_and_validation() {
        let seqs = vec![vec![1, 2, 3], vec![4, 4, 1]];
        let mb = MessageBatch::from_sequences(&seqs, 4).unwrap();
        assert_eq!(mb.len(), 3);
        assert_eq!(mb.batch(), 2);
        assert_eq!(mb.slot(1), &[1, 3]);
        assert_eq!(mb.sequence(1), vec![4, 4, 1]);
        assert_eq!(mb.window(1, 2).slot(0), &[1, 3]);
        assert_eq!(mb.reversed().sequence(0), vec![3, 2, 1]);
        assert!(matches!(
            MessageBatch::from_sequences(&[vec![0]], 4),
            Err(Error::MessageOutOfRange { message: 0, .. })
        ));
        assert!(MessageBatch::from_sequences(&[vec![5]], 4).is_err());
        assert!(MessageBatch::from_sequences(&[vec![1], vec![1, 2]], 4).is_err());
        assert!(MessageBatch::from_zero_based(vec![vec![4]], 4).is_err());
    }

    #[test]
    fn carry_rules() {
        let s = || EdgeStates {
            forward: Some(Array2::ones((1, 2))),
            backward: Some(Array2::ones((1, 2))),
        };
        assert!(StateCarry::ForwardOnly.next(s()).backward.is_none());
        assert!(StateCarry::ForwardOnly.next(s()).forward.is_some());
        assert_eq!(StateCarry::Both.next(s()), s());
        assert_eq!(StateCarry::None.next(s()), EdgeStates::default());
    }

    #[test]
    fn node_count_formulas_reproduce_published_values() {
        let c = |cell, n| TransceiverConfig {
            alphabet: 64,
            block_len: n,
            cell,
            window: 10,
        };
        assert_eq!(c(CellKind::Vanilla, 48).node_count_formula(), 1248);
        assert_eq!(c(CellKind::LstmGru, 48).node_count_formula(), 3104);
        assert_eq!(c(CellKind::Vanilla, 24).node_count_formula(), 1104);
        assert_eq!(c(CellKind::LstmGru, 24).node_count_formula(), 2672);
    }
}
