//! Training loops for the autoencoders and the PAM2 equalizer.

use std::time::Instant;

use super::config::RunConfig;
use super::model::Model;
use super::record::RunRecord;
use super::rng::{mersenne_stream, MessageStream, Mt19937};
use crate::baselines::pam2::{pam2_modulate, receiver_windows};
use crate::baselines::RxFfnn;
use crate::channel::{ChannelPlan, NoiseDraw};
use crate::error::{Error, Result};
use crate::nn::{param_grads, AdamState, Graph, ParamSet, Var};
use crate::transceiver::{Autoencoder, EdgeStates, MessageBatch};

/// Seed of the message stream of batch member `member`.
pub fn member_seed(seed: u32, member: usize) -> u32 {
    seed.wrapping_mul(0x9e37_79b9)
        .wrapping_add(member as u32)
        .wrapping_mul(2_654_435_761)
        ^ seed
}

/// Training outcome: the trained model and its run record (without
/// evaluation reports).
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub record: RunRecord,
}

/// Trains the configured system from a fresh initialization.
pub fn train(cfg: &RunConfig) -> Result<Trained> {
    train_with(cfg, &mut |_, _| {})
}

/// As [`train`], reporting `(step, loss)` after every step.
pub fn train_with(cfg: &RunConfig, progress: &mut dyn FnMut(usize, f64)) -> Result<Trained> {
    cfg.validate()?;
    let model = Model::init(cfg, cfg.train.seed)?;
    continue_training(cfg, model, progress)
}

/// Runs `cfg.train.iterations` optimization steps on `model`.
pub fn continue_training(
    cfg: &RunConfig,
    mut model: Model,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<Trained> {
    let start = Instant::now();
    let mut adam = AdamState::new(model.params(), cfg.adam());
    let (losses, reset_steps) = match &mut model {
        Model::Pam2(rx) => pam2_loop(cfg, rx, &mut adam, progress)?,
        other => {
            let ae = other.autoencoder_mut().expect("autoencoder");
            autoencoder_loop(cfg, ae, &mut adam, progress)?
        }
    };
    let stride = cfg.train.log_stride;
    let loss_trace = losses
        .chunks(stride)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let record = RunRecord {
        config: cfg.clone(),
        loss_trace,
        reset_steps,
        reports: Vec::new(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok(Trained { model, record })
}

fn apply_step(
    params: &mut ParamSet,
    adam: &mut AdamState,
    grads: &[Option<ndarray::Array2<f64>>],
    step: usize,
    loss: f64,
) -> Result<()> {
    adam.step(params, grads)?;
    if !params.is_finite() {
        return Err(Error::Diverged { step, loss });
    }
    Ok(())
}

/// Records one training step on `g` and returns the loss node and the final
/// Tx/Rx edge states.
#[allow(clippy::too_many_arguments)]
fn record_step(
    g: &mut Graph,
    vars: &[Var],
    ae: &dyn Autoencoder,
    messages: &MessageBatch,
    tx_state: &EdgeStates,
    rx_state: &EdgeStates,
    channels: &Channels,
    draw: NoiseDraw,
) -> (Var, EdgeStates, EdgeStates) {
    let window = messages.len();
    let batch = messages.batch();
    let (tx_blocks, tx_final) = ae.record_tx(g, vars, messages, tx_state);
    let series = g.interleave(&tx_blocks);
    let received = match channels {
        Channels::Single(plan) => plan.record(g, series, &plan.sample_noise(draw)),
        Channels::PerMember(plan) => {
            let len = plan.len();
            let outs: Vec<Var> = (0..batch)
                .map(|b| {
                    let x = g.windows(series, &[b * len], len);
                    let member = NoiseDraw::new(draw.seed, draw.stream * batch as u64 + b as u64);
                    plan.record(g, x, &plan.sample_noise(member))
                })
                .collect();
            g.concat_cols(&outs)
        }
    };
    let rx_in: Vec<Var> = (0..window).map(|t| g.slot(received, t, window, batch)).collect();
    let (probs, rx_final) = ae.record_rx(g, vars, &rx_in, rx_state);
    let terms: Vec<Var> = probs
        .iter()
        .enumerate()
        .map(|(t, &p)| g.cross_entropy(p, messages.slot(t)))
        .collect();
    let loss = g.mean(&terms);
    (loss, tx_final, rx_final)
}

enum Channels {
    Single(ChannelPlan),
    PerMember(ChannelPlan),
}

fn autoencoder_loop(
    cfg: &RunConfig,
    ae: &mut dyn Autoencoder,
    adam: &mut AdamState,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<(Vec<f64>, Vec<usize>)> {
    let t = &cfg.train;
    let (batch, window, n) = (t.batch, t.window, ae.block_len());
    let channels = if t.single_series {
        Channels::Single(ChannelPlan::new(&cfg.channel, batch * window * n)?)
    } else {
        Channels::PerMember(ChannelPlan::new(&cfg.channel, window * n)?)
    };
    let mut streams: Vec<MessageStream<Mt19937>> = (0..batch)
        .map(|b| mersenne_stream(member_seed(t.seed, b), ae.alphabet()))
        .collect();
    let mut tx_state = EdgeStates::default();
    let mut rx_state = EdgeStates::default();
    let mut losses = Vec::with_capacity(t.iterations);
    let mut resets = Vec::new();
    for step in 0..t.iterations {
        if step % t.reset_period == 0 {
            tx_state = EdgeStates::default();
            rx_state = EdgeStates::default();
            resets.push(step);
        }
        let mut slots = vec![vec![0; batch]; window];
        for (b, stream) in streams.iter_mut().enumerate() {
            for slot in slots.iter_mut() {
                slot[b] = stream.next_message() - 1;
            }
        }
        let messages = MessageBatch::from_zero_based(slots, ae.alphabet())?;
        let mut g = Graph::new();
        let vars = g.bind(ae.params());
        let draw = NoiseDraw::new(u64::from(t.seed), step as u64);
        let (loss, tx_final, rx_final) = record_step(
            &mut g, &vars, ae, &messages, &tx_state, &rx_state, &channels, draw,
        );
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Diverged { step, loss: value });
        }
        let grads = param_grads(&g.backward(loss), &vars);
        apply_step(ae.params_mut(), adam, &grads, step, value)?;
        tx_state = t.state_carry.next(tx_final);
        rx_state = t.state_carry.next(rx_final);
        losses.push(value);
        progress(step, value);
    }
    Ok((losses, resets))
}

fn pam2_loop(
    cfg: &RunConfig,
    rx: &mut RxFfnn,
    adam: &mut AdamState,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<(Vec<f64>, Vec<usize>)> {
    let t = &cfg.train;
    let pc = rx.config().clone();
    let symbols = cfg.pam2.batch_symbols + pc.span - 1;
    let plan = ChannelPlan::new(&cfg.channel, symbols * pc.samples_per_symbol)?;
    let mut stream = mersenne_stream(member_seed(t.seed, 0), 2);
    let centre = (pc.span - 1) / 2;
    let mut losses = Vec::with_capacity(t.iterations);
    for step in 0..t.iterations {
        let bits: Vec<u8> = (0..symbols).map(|_| (stream.next_message() - 1) as u8).collect();
        let wave = pam2_modulate(&bits, pc.samples_per_symbol, pc.rolloff);
        let draw = NoiseDraw::new(u64::from(t.seed), step as u64);
        let received = plan.run(&wave, &plan.sample_noise(draw))?;
        let windows = receiver_windows(&received, &pc)?;
        let labels: Vec<usize> = (0..windows.nrows())
            .map(|c| usize::from(bits[c + centre]))
            .collect();
        let mut g = Graph::new();
        let vars = g.bind(rx.params());
        let x = g.leaf(windows);
        let probs = rx.record(&mut g, &vars, x);
        let loss = g.cross_entropy(probs, &labels);
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Diverged { step, loss: value });
        }
        let grads = param_grads(&g.backward(loss), &vars);
        apply_step(rx.params_mut(), adam, &grads, step, value)?;
        losses.push(value);
        progress(step, value);
    }
    Ok((losses, Vec::new()))
}

/// Steps `r` in `resets` (excluding step 0) whose loss exceeds the mean of
/// the `lookback` preceding losses, divided by the number of such resets.
pub fn reset_spike_fraction(losses: &[f64], resets: &[usize], lookback: usize) -> Option<f64> {
    let eligible: Vec<usize> = resets
        .iter()
        .copied()
        .filter(|&r| r >= lookback && r > 0 && r < losses.len())
        .collect();
    if eligible.is_empty() {
        return None;
    }
    let spikes = eligible
        .iter()
        .filter(|&&r| {
            let before = losses[r - lookback..r].iter().sum::<f64>() / lookback as f64;
            losses[r] > before
        })
        .count();
    Some(spikes as f64 / eligible.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::SystemKind;

    fn small(system: SystemKind) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.train.system = system;
        cfg.train.rate_gbps = 84;
        cfg.train.alphabet = 8;
        cfg.train.batch = 3;
        cfg.train.window = 4;
        cfg.train.iterations = 20;
        cfg.train.reset_period = 10;
        cfg.train.log_stride = 5;
        cfg.pam2.span = 11;
        cfg.pam2.layers = 6;
        cfg.pam2.batch_symbols = 40;
        cfg.eval.sequence_len = 20;
        cfg
    }

    #[test]
    fn member_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u32> = (0..1000).map(|b| member_seed(7, b)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn training_is_deterministic_for_every_system() {
        for system in [
            SystemKind::Vanilla,
            SystemKind::LstmGru,
            SystemKind::Ffnn,
            SystemKind::Pam2Ffnn,
        ] {
            let cfg = small(system);
            let a = train(&cfg).unwrap();
            let b = train(&cfg).unwrap();
            assert_eq!(
                a.model.to_checkpoint().to_bytes().unwrap(),
                b.model.to_checkpoint().to_bytes().unwrap(),
                "{system:?}"
            );
            assert_eq!(a.record.loss_trace, b.record.loss_trace);
            assert_eq!(a.record.loss_trace.len(), 4);
            assert!(a.record.loss_trace.iter().all(|l| l.is_finite()));
        }
    }

    #[test]
    fn resets_follow_the_period() {
        let cfg = small(SystemKind::Vanilla);
        let run = train(&cfg).unwrap();
        assert_eq!(run.record.reset_steps, vec![0, 10]);
    }

    #[test]
    fn per_member_channel_option_trains() {
        let mut cfg = small(SystemKind::Vanilla);
        cfg.train.single_series = false;
        let per_member = train(&cfg).unwrap();
        cfg.train.single_series = true;
        let single = train(&cfg).unwrap();
        assert_ne!(per_member.record.loss_trace, single.record.loss_trace);
    }

    #[test]
    fn loss_decreases_on_an_easy_link() {
        let mut cfg = small(SystemKind::Vanilla);
        cfg.channel = crate::channel::ChannelConfig::noiseless().with_length(0.0);
        cfg.train.iterations = 300;
        cfg.train.reset_period = 100;
        cfg.train.log_stride = 50;
        cfg.train.learning_rate = 1e-2;
        let run = train(&cfg).unwrap();
        let trace = &run.record.loss_trace;
        assert!(trace.last().unwrap() < &(0.5 * trace[0]), "{trace:?}");
    }

    #[test]
    fn spike_fraction() {
        let mut losses = vec![1.0; 30];
        losses[10] = 2.0;
        losses[20] = 0.5;
        assert_eq!(reset_spike_fraction(&losses, &[0, 10, 20], 5), Some(0.5));
        assert_eq!(reset_spike_fraction(&losses, &[0], 5), None);
    }
}
