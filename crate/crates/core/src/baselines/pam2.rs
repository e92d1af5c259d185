//! Two-level PAM with raised-cosine shaping and a sliding multi-symbol
//! feed-forward receiver.

use std::f64::consts::{FRAC_PI_4, PI};

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{eval_stack, record_stack, stack_nodes, Head};
use crate::error::{Error, Result};
use crate::nn::{AffineInput, Graph, ParamSet, Tensor, Var};
use crate::transceiver::StepInput;

/// Half-length of the truncated pulse, in symbol periods.
pub const RC_SPAN_SYMBOLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pam2Config {
    /// Samples per symbol `g`.
    pub samples_per_symbol: usize,
    pub rolloff: f64,
    /// Symbol window `Z` (odd).
    pub span: usize,
    /// Layer count `L`, counting the input and softmax layers.
    pub layers: usize,
}

impl Default for Pam2Config {
    fn default() -> Self {
        Self {
            samples_per_symbol: 8,
            rolloff: 0.25,
            span: 61,
            layers: 9,
        }
    }
}

impl Pam2Config {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_symbol == 0 {
            return Err(Error::InvalidConfig("samples_per_symbol must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::InvalidConfig("rolloff must lie in [0, 1]".into()));
        }
        if self.span % 2 == 0 {
            return Err(Error::InvalidConfig("span must be odd".into()));
        }
        if self.layers < 3 {
            return Err(Error::InvalidConfig("at least 3 layers are needed".into()));
        }
        if self.hidden_widths().contains(&0) {
            return Err(Error::InvalidConfig("too many layers for the window".into()));
        }
        Ok(())
    }

    /// Samples fed to the receiver per decision, `Z g`.
    pub fn input_len(&self) -> usize {
        self.span * self.samples_per_symbol
    }

    /// `floor(Zg / 2^(l-1))` for `l = 1..=L-2`.
    pub fn hidden_widths(&self) -> Vec<usize> {
        (0..self.layers.saturating_sub(2))
            .map(|l| self.input_len() >> l)
            .collect()
    }

    /// `Zg + sum floor(Zg / 2^(l-1)) + 2`.
    pub fn node_count_formula(&self) -> usize {
        self.input_len() + self.hidden_widths().iter().sum::<usize>() + 2
    }
}

/// Raised-cosine impulse response at time `t` in symbol periods, peak 1.
pub fn raised_cosine(t: f64, rolloff: f64) -> f64 {
    let sinc = |x: f64| if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    let d = 2.0 * rolloff * t;
    if rolloff > 0.0 && (d.abs() - 1.0).abs() < 1e-12 {
        return FRAC_PI_4 * sinc(1.0 / (2.0 * rolloff));
    }
    sinc(t) * (PI * rolloff * t).cos() / (1.0 - d * d)
}

/// Pulse sampled at `g` samples per symbol over `±RC_SPAN_SYMBOLS` periods.
pub fn rc_kernel(g: usize, rolloff: f64) -> Vec<f64> {
    let half = (RC_SPAN_SYMBOLS * g) as isize;
    (-half..=half)
        .map(|i| raised_cosine(i as f64 / g as f64, rolloff))
        .collect()
}

/// Places symbol `s` at sample `s g` and shapes with the truncated pulse.
/// The convolution is circular over `symbols.len() * g` samples.
pub fn rc_filter(symbols: &[f64], g: usize, rolloff: f64) -> Vec<f64> {
    let len = symbols.len() * g;
    let mut out = vec![0.0; len];
    if len == 0 {
        return out;
    }
    let kernel = rc_kernel(g, rolloff);
    let half = (RC_SPAN_SYMBOLS * g) as isize;
    for (s, &a) in symbols.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let center = (s * g) as isize;
        for (j, &h) in kernel.iter().enumerate() {
            let idx = (center + j as isize - half).rem_euclid(len as isize) as usize;
            out[idx] += a * h;
        }
    }
    out
}

/// Maps bits to levels `{0, pi/4}` (any nonzero byte is a one) and shapes
/// them at `g` samples per symbol.
pub fn pam2_modulate(bits: &[u8], g: usize, rolloff: f64) -> Vec<f64> {
    let symbols: Vec<f64> = bits
        .iter()
        .map(|&b| if b != 0 { FRAC_PI_4 } else { 0.0 })
        .collect();
    rc_filter(&symbols, g, rolloff)
}

/// Row `c` holds the `Z g` samples around symbol `c + (Z - 1) / 2`.
pub fn receiver_windows(received: &[f64], cfg: &Pam2Config) -> Result<Array2<f64>> {
    let g = cfg.samples_per_symbol;
    if received.len() % g != 0 {
        return Err(Error::InvalidConfig(format!(
            "{} samples is not a whole number of symbols",
            received.len()
        )));
    }
    let symbols = received.len() / g;
    if symbols < cfg.span {
        return Err(Error::TooShort {
            needed: cfg.span * g,
            got: received.len(),
        });
    }
    let rows = symbols - cfg.span + 1;
    let width = cfg.input_len();
    Ok(Array2::from_shape_fn((rows, width), |(r, j)| received[r * g + j]))
}

/// Receiver feed-forward equalizer: `L - 2` ReLU layers followed by a
/// two-way softmax.
#[derive(Debug, Clone)]
pub struct RxFfnn {
    cfg: Pam2Config,
    params: ParamSet,
}

impl RxFfnn {
    pub fn new<R: Rng + ?Sized>(cfg: Pam2Config, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut fan_in = cfg.input_len();
        let widths: Vec<usize> = cfg.hidden_widths().into_iter().chain([2]).collect();
        for (l, &w) in widths.iter().enumerate() {
            params.push(format!("rx.W{}", l + 1), Tensor::glorot_uniform(w, fan_in, rng));
            params.push(format!("rx.b{}", l + 1), Tensor::zeros(&[w]));
            fan_in = w;
        }
        Ok(Self { cfg, params })
    }

    pub fn from_params(cfg: Pam2Config, params: ParamSet) -> Result<Self> {
        cfg.validate()?;
        let mut fan_in = cfg.input_len();
        let widths: Vec<usize> = cfg.hidden_widths().into_iter().chain([2]).collect();
        if params.len() != 2 * widths.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                2 * widths.len(),
                params.len()
            )));
        }
        for (l, &w) in widths.iter().enumerate() {
            for (k, shape) in [vec![w, fan_in], vec![w]].into_iter().enumerate() {
                let t = params.at(2 * l + k);
                if t.shape() != shape.as_slice() {
                    return Err(Error::ShapeMismatch {
                        context: "equalizer parameter",
                        expected: shape,
                        actual: t.shape().to_vec(),
                    });
                }
            }
            fan_in = w;
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &Pam2Config {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn layers(&self) -> usize {
        self.params.len() / 2
    }

    pub fn node_count(&self) -> usize {
        stack_nodes(&self.params, 0, self.layers())
    }

    /// Posteriors `[P(0), P(1)]` for the rows of [`receiver_windows`].
    pub fn classify(&self, windows: &Array2<f64>) -> Result<Array2<f64>> {
        eval_stack(&self.params, 0, self.layers(), StepInput::Dense(windows.view()), Head::Softmax)
    }

    pub fn record(&self, g: &mut Graph, vars: &[Var], windows: Var) -> Var {
        record_stack(g, vars, 0, self.layers(), AffineInput::Dense(windows), Head::Softmax)
    }
}

/// Slides the equalizer over a received waveform: one posterior row per
/// symbol with a full window, `symbols - Z + 1` rows in total.
pub fn rx_ffnn_equalize(received: &[f64], rx: &RxFfnn) -> Result<Array2<f64>> {
    let windows = receiver_windows(received, &rx.cfg)?;
    rx.classify(&windows)
}

/// Zero-based bit decision of a two-way posterior row.
pub fn decide_bit(p: ArrayView1<f64>) -> u8 {
    u8::from(p[1] > p[0])
}
