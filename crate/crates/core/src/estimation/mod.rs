//! Sliding-window sequence estimation, hard decisions, and error counting.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transceiver::{Autoencoder, StateCarry};

/// Fused per-slot posteriors of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedPosterior {
    /// `T x M`, one row per estimated slot.
    pub probs: Array2<f64>,
    /// Number of windows averaged into each slot.
    pub counts: Vec<usize>,
}

impl FusedPosterior {
    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    /// One-based hard decisions.
    pub fn decisions(&self) -> Vec<usize> {
        self.probs.axis_iter(Axis(0)).map(decide).collect()
    }
}

/// Averages raw window posteriors into fused ones for a batch of sequences.
///
/// For `n_blocks` received blocks and window `W` there are
/// `T = n_blocks - W + 1` windows; window `k` covers slots `k..k + W`. Slot
/// `i < T` receives the mean over windows `max(0, i - W + 1)..=i`; the last
/// `W - 1` slots are not estimated.
#[derive(Debug, Clone)]
pub struct Fusion {
    window: usize,
    sums: Vec<Array2<f64>>,
    counts: Vec<usize>,
}

impl Fusion {
    pub fn new(n_blocks: usize, window: usize, batch: usize, alphabet: usize) -> Result<Self> {
        if window == 0 || n_blocks < window {
            return Err(Error::TooShort {
                needed: window.max(1),
                got: n_blocks,
            });
        }
        let t = n_blocks - window + 1;
        Ok(Self {
            window,
            sums: vec![Array2::zeros((t, alphabet)); batch],
            counts: vec![0; t],
        })
    }

    /// Number of estimated slots `T`.
    pub fn slots(&self) -> usize {
        self.counts.len()
    }

    /// Adds window `k`: `probs[j]` is the `batch x M` posterior of slot `k + j`.
    pub fn add(&mut self, k: usize, probs: &[Array2<f64>]) -> Result<()> {
        if probs.len() != self.window {
            return Err(Error::LengthMismatch {
                left: probs.len(),
                right: self.window,
            });
        }
        if k >= self.slots() {
            return Err(Error::TooShort {
                needed: k + 1,
                got: self.slots(),
            });
        }
        for (j, p) in probs.iter().enumerate() {
            let slot = k + j;
            if slot >= self.slots() {
                break;
            }
            if p.dim() != (self.sums.len(), self.sums[0].ncols()) {
                return Err(Error::ShapeMismatch {
                    context: "window posterior",
                    expected: vec![self.sums.len(), self.sums[0].ncols()],
                    actual: vec![p.nrows(), p.ncols()],
                });
            }
            for (sum, row) in self.sums.iter_mut().zip(p.axis_iter(Axis(0))) {
                let mut dst = sum.row_mut(slot);
                dst += &row;
            }
            self.counts[slot] += 1;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<Vec<FusedPosterior>> {
        let expected = |i: usize| (i + 1).min(self.window);
        if let Some(i) = (0..self.counts.len()).find(|&i| self.counts[i] != expected(i)) {
            return Err(Error::TooShort {
                needed: expected(i),
                got: self.counts[i],
            });
        }
        let counts = self.counts;
        Ok(self
            .sums
            .into_iter()
            .map(|mut probs| {
                for (mut row, &c) in probs.axis_iter_mut(Axis(0)).zip(&counts) {
                    row /= c as f64;
                }
                FusedPosterior {
                    probs,
                    counts: counts.clone(),
                }
            })
            .collect())
    }
}

/// Fuses raw windows of one sequence: `raw[k]` is `W x M` with rows for
/// slots `k..k + W`.
pub fn fuse(raw: &[Array2<f64>]) -> Result<FusedPosterior> {
    let first = raw.first().ok_or(Error::TooShort { needed: 1, got: 0 })?;
    let (window, alphabet) = first.dim();
    let mut fusion = Fusion::new(raw.len() + window - 1, window, 1, alphabet)?;
    for (k, w) in raw.iter().enumerate() {
        let rows: Vec<Array2<f64>> = w.axis_iter(Axis(0)).map(|r| r.insert_axis(Axis(0)).to_owned()).collect();
        fusion.add(k, &rows)?;
    }
    Ok(fusion.finish()?.remove(0))
}

/// Runs the receiver of `model` over every window of the received blocks
/// (`batch x n` each) and returns one fused posterior per batch member.
pub fn sliding_estimate(
    model: &dyn Autoencoder,
    received: &[Array2<f64>],
    window: usize,
    carry: StateCarry,
) -> Result<Vec<FusedPosterior>> {
    let batch = received.first().map_or(0, Array2::nrows);
    let mut fusion = Fusion::new(received.len(), window, batch, model.alphabet())?;
    let mut failure = None;
    model.visit_windows(received, window, carry, &mut |k, probs| {
        if failure.is_none() {
            failure = fusion.add(k, probs).err();
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    fusion.finish()
}

/// One-based index of the largest entry; ties go to the lowest index.
pub fn decide(p: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best + 1
}

/// Fraction of positions where the decision differs from the truth.
pub fn bler(truth: &[usize], decisions: &[usize]) -> Result<f64> {
    if truth.len() != decisions.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: decisions.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let errors = truth.iter().zip(decisions).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / truth.len() as f64)
}

/// `log2(alphabet)`, or an error if the alphabet is not a power of two.
pub fn bits_per_message(alphabet: usize) -> Result<u32> {
    if alphabet < 2 || !alphabet.is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "alphabet {alphabet} is not a power of two"
        )));
    }
    Ok(alphabet.trailing_zeros())
}

fn gray_index(m: usize, alphabet: usize) -> Result<usize> {
    if m == 0 || m > alphabet {
        return Err(Error::MessageOutOfRange {
            message: m,
            alphabet,
        });
    }
    let i = m - 1;
    Ok(i ^ (i >> 1))
}

/// Reflected binary Gray code of `m - 1`, most significant bit first.
pub fn gray_code(m: usize, alphabet: usize) -> Result<Vec<u8>> {
    let bits = bits_per_message(alphabet)?;
    let g = gray_index(m, alphabet)?;
    Ok((0..bits).rev().map(|b| ((g >> b) & 1) as u8).collect())
}

/// Bit-error count between Gray labels of one-based messages.
pub fn bit_errors(truth: &[usize], decisions: &[usize], alphabet: usize) -> Result<u64> {
    if truth.len() != decisions.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: decisions.len(),
        });
    }
    bits_per_message(alphabet)?;
    let mut total = 0u64;
    for (&a, &b) in truth.iter().zip(decisions) {
        total += u64::from((gray_index(a, alphabet)? ^ gray_index(b, alphabet)?).count_ones());
    }
    Ok(total)
}

pub fn ber(truth: &[usize], decisions: &[usize], alphabet: usize) -> Result<f64> {
    let errors = bit_errors(truth, decisions, alphabet)?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let bits = bits_per_message(alphabet)? as f64;
    Ok(errors as f64 / (truth.len() as f64 * bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub bler: f64,
    pub ber: f64,
    pub block_errors: u64,
    pub bit_errors: u64,
    /// Messages evaluated per sequence, `|T|`.
    pub evaluated: usize,
    pub sequences: usize,
}

impl ErrorReport {
    /// Report for one sequence.
    pub fn single(truth: &[usize], decisions: &[usize], alphabet: usize) -> Result<Self> {
        let bits = bit_errors(truth, decisions, alphabet)?;
        let block_errors = truth.iter().zip(decisions).filter(|(a, b)| a != b).count() as u64;
        Ok(Self {
            bler: bler(truth, decisions)?,
            ber: ber(truth, decisions, alphabet)?,
            block_errors,
            bit_errors: bits,
            evaluated: truth.len(),
            sequences: 1,
        })
    }

    /// Averages rates over sequences and sums counts.
    pub fn mean(reports: &[ErrorReport]) -> Result<Self> {
        let first = reports.first().ok_or(Error::TooShort { needed: 1, got: 0 })?;
        let n: usize = reports.iter().map(|r| r.sequences).sum();
        let weighted = |f: fn(&ErrorReport) -> f64| {
            reports.iter().map(|r| f(r) * r.sequences as f64).sum::<f64>() / n as f64
        };
        Ok(Self {
            bler: weighted(|r| r.bler),
            ber: weighted(|r| r.ber),
            block_errors: reports.iter().map(|r| r.block_errors).sum(),
            bit_errors: reports.iter().map(|r| r.bit_errors).sum(),
            evaluated: first.evaluated,
            sequences: n,
        })
    }
}
