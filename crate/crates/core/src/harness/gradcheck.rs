//! End-to-end gradient verification on small dimensions.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ChannelPlan, NoiseDraw, NoiseSample};
use crate::error::{Error, Result};
use crate::nn::gradcheck::{check, GradCheckReport, Probe, DEFAULT_STEP};
use crate::nn::{param_grads, Graph, ParamSet, Tensor, Var};
use crate::transceiver::{Autoencoder, CellKind, EdgeStates, MessageBatch, Sbrnn, TransceiverConfig};

pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradPath {
    Vanilla,
    LstmGru,
    /// The channel alone, differentiated with respect to its input.
    Channel,
}

impl GradPath {
    pub const ALL: [GradPath; 3] = [GradPath::Vanilla, GradPath::LstmGru, GradPath::Channel];

    pub fn name(self) -> &'static str {
        match self {
            GradPath::Vanilla => "vanilla",
            GradPath::LstmGru => "lstm-gru",
            GradPath::Channel => "channel",
        }
    }
}

/// Dimensions of the check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub alphabet: usize,
    pub block_len: usize,
    pub window: usize,
    pub batch: usize,
    pub channel: ChannelConfig,
    pub seed: u64,
    pub step: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            alphabet: 4,
            block_len: 6,
            window: 3,
            batch: 2,
            channel: ChannelConfig::default(),
            seed: 11,
            step: DEFAULT_STEP,
        }
    }
}

fn probe(g: &Graph, out: Var) -> Probe {
    Probe {
        value: g.scalar(out),
        signature: g.activation_signature(),
    }
}

/// Analytic gradient vs central differences of the full training loss (or
/// of a fixed linear read-out of the channel output), with the channel
/// noise frozen.
pub fn grad_check(path: GradPath, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (m, n, w, b) = (cfg.alphabet, cfg.block_len, cfg.window, cfg.batch);
    let len = b * w * n;
    let plan = ChannelPlan::new(&cfg.channel, len)?;
    let noise = plan.sample_noise(NoiseDraw::new(cfg.seed, 0));
    match path {
        GradPath::Vanilla | GradPath::LstmGru => {
            let cell = if path == GradPath::Vanilla {
                CellKind::Vanilla
            } else {
                CellKind::LstmGru
            };
            let tcfg = TransceiverConfig {
                alphabet: m,
                block_len: n,
                cell,
                window: w,
            };
            let model = Sbrnn::new(tcfg, &mut rng)?;
            let slots: Vec<Vec<usize>> = (0..w)
                .map(|_| (0..b).map(|_| rng.random_range(0..m)).collect())
                .collect();
            let messages = MessageBatch::from_zero_based(slots, m)?;
            let objective = |params: &ParamSet| -> Result<(Graph, Var, Vec<Var>)> {
                let model = Sbrnn::from_params(tcfg, params.clone())?;
                let mut g = Graph::new();
                let vars = g.bind(params);
                let loss = system_loss(&mut g, &vars, &model, &messages, &plan, &noise);
                Ok((g, loss, vars))
            };
            let (g, loss, vars) = objective(model.params())?;
            let analytic = param_grads(&g.backward(loss), &vars);
            let mut failure = None;
            let report = check(model.params(), &analytic, cfg.step, |p| match objective(p) {
                Ok((g, out, _)) => probe(&g, out),
                Err(e) => {
                    failure.get_or_insert(e);
                    Probe {
                        value: f64::NAN,
                        signature: 0,
                    }
                }
            });
            match failure {
                Some(e) => Err(e),
                None => Ok(report),
            }
        }
        GradPath::Channel => {
            let tx = Array2::from_shape_fn((1, len), |_| rng.random_range(0.0..std::f64::consts::FRAC_PI_4));
            let weights = Array2::from_shape_fn((1, len), |_| rng.random_range(-1.0..1.0));
            let mut params = ParamSet::new();
            params.push("tx", Tensor::from_matrix(tx));
            let objective = |params: &ParamSet| {
                let mut g = Graph::new();
                let vars = g.bind(params);
                let y = plan.record(&mut g, vars[0], &noise);
                let c = g.leaf(weights.clone());
                let prod = g.mul(y, c);
                let out = g.sum(prod);
                (g, out, vars)
            };
            let (g, out, vars) = objective(&params);
            let analytic = param_grads(&g.backward(out), &vars);
            Ok(check(&params, &analytic, cfg.step, |p| {
                let (g, out, _) = objective(p);
                probe(&g, out)
            }))
        }
    }
}

fn system_loss(
    g: &mut Graph,
    vars: &[Var],
    model: &dyn Autoencoder,
    messages: &MessageBatch,
    plan: &ChannelPlan,
    noise: &NoiseSample,
) -> Var {
    let (w, b) = (messages.len(), messages.batch());
    let (tx, _) = model.record_tx(g, vars, messages, &EdgeStates::default());
    let series = g.interleave(&tx);
    let y = plan.record(g, series, noise);
    let rx: Vec<Var> = (0..w).map(|t| g.slot(y, t, w, b)).collect();
    let (probs, _) = model.record_rx(g, vars, &rx, &EdgeStates::default());
    let terms: Vec<Var> = probs
        .iter()
        .enumerate()
        .map(|(t, &p)| g.cross_entropy(p, messages.slot(t)))
        .collect();
    g.mean(&terms)
}

/// Runs every path and fails when any exceeds [`GRAD_TOLERANCE`].
pub fn grad_check_all(cfg: &GradCheckConfig) -> Result<Vec<(GradPath, GradCheckReport)>> {
    let reports = GradPath::ALL
        .iter()
        .map(|&p| grad_check(p, cfg).map(|r| (p, r)))
        .collect::<Result<Vec<_>>>()?;
    if let Some((p, r)) = reports.iter().find(|(_, r)| !r.passes(GRAD_TOLERANCE)) {
        return Err(Error::InvalidConfig(format!(
            "{} gradient check failed: max relative error {:.3e}",
            p.name(),
            r.max_relative_error
        )));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_path_passes() {
        for path in GradPath::ALL {
            let r = grad_check(path, &GradCheckConfig::default()).unwrap();
            assert!(r.passes(GRAD_TOLERANCE), "{path:?}: {r:?}");
            assert!(r.checked > r.skipped, "{path:?}: {r:?}");
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let cfg = GradCheckConfig::default();
        let plan = ChannelPlan::new(&cfg.channel, 12).unwrap();
        let mut params = ParamSet::new();
        params.push("tx", Tensor::from_matrix(Array2::from_elem((1, 12), 0.3)));
        let objective = |p: &ParamSet| {
            let mut g = Graph::new();
            let v = g.bind(p);
            let y = plan.record(&mut g, v[0], &NoiseSample::none());
            let out = g.sum(y);
            (g, out, v)
        };
        let (g, out, vars) = objective(&params);
        let mut analytic = param_grads(&g.backward(out), &vars);
        analytic[0].as_mut().unwrap()[[0, 3]] *= 1.01;
        let r = check(&params, &analytic, DEFAULT_STEP, |p| {
            let (g, out, _) = objective(p);
            probe(&g, out)
        });
        assert!(!r.passes(GRAD_TOLERANCE));
    }
}
