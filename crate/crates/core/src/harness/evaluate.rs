//! Test-set generation, evaluation, and the distance and window sweeps.

use std::path::Path;

use ndarray::Array2;

use super::config::RunConfig;
use super::model::Model;
use super::record::{DistanceRow, WindowRow};
use super::rng::tausworthe_stream;
use super::train::{member_seed, train_with};
use crate::baselines::pam2::{decide_bit, pam2_modulate, rx_ffnn_equalize};
use crate::baselines::RxFfnn;
use crate::channel::{ChannelPlan, NoiseDraw};
use crate::error::{Error, Result};
use crate::estimation::{bits_per_message, sliding_estimate, ErrorReport};
use crate::transceiver::{Autoencoder, MessageBatch, StateCarry};

/// Offset separating test-channel noise from training noise.
const TEST_NOISE: u64 = 1 << 32;

/// Received blocks of a batch of test sequences plus the transmitted
/// messages.
#[derive(Debug, Clone)]
pub struct TestChunk {
    /// One-based messages per sequence.
    pub truth: Vec<Vec<usize>>,
    /// `received[t]` is `batch x n`.
    pub received: Vec<Array2<f64>>,
}

/// A fully simulated test campaign, reusable across inference windows.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub alphabet: usize,
    pub chunks: Vec<TestChunk>,
}

fn test_messages(seed: u32, sequence: usize, alphabet: usize, len: usize) -> Vec<usize> {
    tausworthe_stream(member_seed(seed, sequence), alphabet).take(len)
}

impl TestSet {
    /// Encodes every test sequence from zero states and passes each one
    /// through its own channel realization.
    pub fn simulate(cfg: &RunConfig, ae: &dyn Autoencoder) -> Result<Self> {
        let e = &cfg.eval;
        let (m, n) = (ae.alphabet(), ae.block_len());
        let plan = ChannelPlan::new(&cfg.channel, e.sequence_len * n)?;
        let mut chunks = Vec::new();
        let mut j0 = 0;
        while j0 < e.sequences {
            let j1 = (j0 + e.chunk).min(e.sequences);
            let truth: Vec<Vec<usize>> = (j0..j1)
                .map(|j| test_messages(e.seed, j, m, e.sequence_len))
                .collect();
            let blocks = ae.encode(&MessageBatch::from_sequences(&truth, m)?)?;
            let mut received = vec![Array2::zeros((j1 - j0, n)); e.sequence_len];
            let mut series = vec![0.0; e.sequence_len * n];
            for b in 0..j1 - j0 {
                for (t, block) in blocks.iter().enumerate() {
                    series[t * n..(t + 1) * n]
                        .iter_mut()
                        .zip(block.row(b))
                        .for_each(|(s, &v)| *s = v);
                }
                let draw = NoiseDraw::new(TEST_NOISE + u64::from(e.seed), (j0 + b) as u64);
                let y = plan.run(&series, &plan.sample_noise(draw))?;
                for (t, rx) in received.iter_mut().enumerate() {
                    rx.row_mut(b)
                        .iter_mut()
                        .zip(&y[t * n..(t + 1) * n])
                        .for_each(|(r, &v)| *r = v);
                }
            }
            chunks.push(TestChunk { truth, received });
            j0 = j1;
        }
        Ok(Self {
            alphabet: m,
            chunks,
        })
    }

    /// Sliding-window estimation with window `window`; the last `window - 1`
    /// messages of each sequence are not scored.
    pub fn score(&self, ae: &dyn Autoencoder, window: usize, carry: StateCarry) -> Result<ErrorReport> {
        let mut reports = Vec::new();
        for chunk in &self.chunks {
            let len = chunk.received.len();
            if window == 0 || window >= len {
                return Err(Error::TooShort {
                    needed: window + 1,
                    got: len,
                });
            }
            let fused = sliding_estimate(ae, &chunk.received, window, carry)?;
            for (post, truth) in fused.iter().zip(&chunk.truth) {
                let decisions = post.decisions();
                reports.push(ErrorReport::single(&truth[..decisions.len()], &decisions, self.alphabet)?);
            }
        }
        ErrorReport::mean(&reports)
    }
}

/// PAM2 evaluation: each sequence carries `sequence_len * log2 M` bits and
/// every symbol with a full receiver window is scored.
pub fn evaluate_pam2(cfg: &RunConfig, rx: &RxFfnn) -> Result<ErrorReport> {
    let e = &cfg.eval;
    let pc = rx.config();
    let symbols = e.sequence_len * bits_per_message(cfg.train.alphabet)? as usize;
    let plan = ChannelPlan::new(&cfg.channel, symbols * pc.samples_per_symbol)?;
    let centre = (pc.span - 1) / 2;
    let mut reports = Vec::with_capacity(e.sequences);
    for j in 0..e.sequences {
        let bits: Vec<u8> = test_messages(e.seed, j, 2, symbols)
            .into_iter()
            .map(|m| (m - 1) as u8)
            .collect();
        let wave = pam2_modulate(&bits, pc.samples_per_symbol, pc.rolloff);
        let draw = NoiseDraw::new(TEST_NOISE + u64::from(e.seed), j as u64);
        let received = plan.run(&wave, &plan.sample_noise(draw))?;
        let probs = rx_ffnn_equalize(&received, rx)?;
        let decisions: Vec<usize> = probs.rows().into_iter().map(|p| usize::from(decide_bit(p)) + 1).collect();
        let truth: Vec<usize> = (0..decisions.len())
            .map(|c| usize::from(bits[c + centre]) + 1)
            .collect();
        reports.push(ErrorReport::single(&truth, &decisions, 2)?);
    }
    ErrorReport::mean(&reports)
}

/// Evaluates `model` on the configured test campaign.
pub fn evaluate(cfg: &RunConfig, model: &Model) -> Result<ErrorReport> {
    match model {
        Model::Pam2(rx) => evaluate_pam2(cfg, rx),
        other => {
            let ae = other.autoencoder().expect("autoencoder");
            TestSet::simulate(cfg, ae)?.score(ae, cfg.eval_window(), cfg.eval_carry())
        }
    }
}

/// Trains `runs` independent models per distance (training seeds
/// `seed, seed + 1, ..`), evaluates each, and flags the lowest-BER run per
/// distance. Checkpoints go to `checkpoints` when given.
pub fn sweep_distance(
    cfg: &RunConfig,
    distances: &[f64],
    runs: usize,
    checkpoints: Option<&Path>,
    progress: &mut dyn FnMut(&DistanceRow),
) -> Result<Vec<DistanceRow>> {
    if runs == 0 {
        return Err(Error::InvalidConfig("runs must be positive".into()));
    }
    let mut rows = Vec::new();
    for &d in distances {
        let first = rows.len();
        let mut seed = cfg.train.seed;
        for _ in 0..runs {
            if seed == cfg.eval.seed {
                seed = seed.wrapping_add(1);
            }
            let mut run_cfg = cfg.clone();
            run_cfg.channel.fiber_length_km = d;
            run_cfg.train.seed = seed;
            let trained = train_with(&run_cfg, &mut |_, _| {})?;
            let report = evaluate(&run_cfg, &trained.model)?;
            if let Some(dir) = checkpoints {
                std::fs::create_dir_all(dir)?;
                let stem = format!("{}_{}km_seed{}", run_cfg.train.system.name(), d, seed);
                trained.model.save(&dir.join(format!("{stem}.ckpt")))?;
                let mut record = trained.record.clone();
                record.reports.push(DistanceRow::new(run_cfg.train.system.name(), d, seed, &report));
                record.save(&dir.join(format!("{stem}.txt")))?;
            }
            let row = DistanceRow::new(run_cfg.train.system.name(), d, seed, &report);
            progress(&row);
            rows.push(row);
            seed = seed.wrapping_add(1);
        }
        let best = (first..rows.len())
            .min_by(|&a, &b| rows[a].ber.total_cmp(&rows[b].ber))
            .expect("at least one run");
        rows[best].best = true;
    }
    Ok(rows)
}

/// Evaluates one trained autoencoder under several inference windows on a
/// single simulated test set.
pub fn sweep_window(cfg: &RunConfig, model: &Model, windows: &[usize]) -> Result<Vec<WindowRow>> {
    let ae = model
        .autoencoder()
        .ok_or_else(|| Error::InvalidConfig("window sweep needs an autoencoder".into()))?;
    let set = TestSet::simulate(cfg, ae)?;
    windows
        .iter()
        .map(|&w| {
            let r = set.score(ae, w, cfg.eval_carry())?;
            Ok(WindowRow {
                system: model.system().name().to_string(),
                window: w,
                ber: r.ber,
                bler: r.bler,
                bit_errors: r.bit_errors,
                sequences: r.sequences,
            })
        })
        .collect()
}

/// Half-width of the 95% normal-approximation confidence interval of an
/// error rate estimated from `trials` independent trials.
pub fn binomial_half_width(rate: f64, trials: f64) -> f64 {
    1.96 * (rate * (1.0 - rate) / trials).sqrt()
}
