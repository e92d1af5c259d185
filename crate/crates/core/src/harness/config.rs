//! Run configuration, read from TOML with one section per module.
//!
//! ```toml
//! [channel]
//! fiber_length_km = 20.0
//!
//! [train]
//! system = "vanilla"
//! rate_gbps = 42
//! iterations = 10000
//!
//! [eval]
//! sequences = 100
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::rng::RngKind;
use crate::baselines::{FfnnConfig, Pam2Config};
use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::transceiver::{CellKind, StateCarry, TransceiverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Vanilla,
    LstmGru,
    Ffnn,
    Pam2Ffnn,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Vanilla => "vanilla",
            SystemKind::LstmGru => "lstm-gru",
            SystemKind::Ffnn => "ffnn",
            SystemKind::Pam2Ffnn => "pam2-ffnn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(SystemKind::Vanilla),
            "lstm-gru" => Ok(SystemKind::LstmGru),
            "ffnn" => Ok(SystemKind::Ffnn),
            "pam2-ffnn" => Ok(SystemKind::Pam2Ffnn),
            other => Err(Error::InvalidConfig(format!("unknown system `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub system: SystemKind,
    /// 42 (n = 48, g = 8) or 84 (n = 24, g = 4).
    pub rate_gbps: u32,
    pub alphabet: usize,
    /// Sequences per batch `B`.
    pub batch: usize,
    /// Window `W` in blocks.
    pub window: usize,
    pub iterations: usize,
    /// Steps between resets of all carried states.
    pub reset_period: usize,
    /// Steps averaged into one loss-trace entry.
    pub log_stride: usize,
    pub seed: u32,
    pub state_carry: StateCarry,
    /// One channel pass over the concatenated batch, or one per member.
    pub single_series: bool,
    pub learning_rate: f64,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::Vanilla,
            rate_gbps: 42,
            alphabet: 64,
            batch: 25,
            window: 10,
            iterations: 10_000,
            reset_period: 100,
            log_stride: 1,
            seed: 1,
            state_carry: StateCarry::ForwardOnly,
            single_series: true,
            learning_rate: AdamConfig::default().learning_rate,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub sequences: usize,
    /// Messages per test sequence.
    pub sequence_len: usize,
    /// Inference window; the training window when absent.
    pub window: Option<usize>,
    pub rng: RngKind,
    pub seed: u32,
    /// Sequences decoded together.
    pub chunk: usize,
    pub state_carry: Option<StateCarry>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sequences: 100,
            sequence_len: 1000,
            window: None,
            rng: RngKind::Tausworthe,
            seed: 1_000_003,
            chunk: 50,
            state_carry: None,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pam2Section {
    pub rolloff: f64,
    pub span: usize,
    pub layers: usize,
    /// Central symbols per training step.
    pub batch_symbols: usize,
}

impl Default for Pam2Section {
    fn default() -> Self {
        Self {
            rolloff: 0.25,
            span: 61,
            layers: 9,
            batch_symbols: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FfnnSection {
    /// Transmitter widths; `(2M, 2M, n)` when absent.
    pub tx_widths: Option<Vec<usize>>,
    /// Receiver widths; `(2M, 2M, M)` when absent.
    pub rx_widths: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub channel: ChannelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub pam2: Pam2Section,
    pub ffnn: FfnnSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Samples per block `n`.
    pub fn block_len(&self) -> Result<usize> {
        match self.train.rate_gbps {
            42 => Ok(48),
            84 => Ok(24),
            r => Err(Error::InvalidConfig(format!("rate {r} Gb/s is not 42 or 84"))),
        }
    }

    /// PAM2 samples per symbol `g`.
    pub fn samples_per_symbol(&self) -> Result<usize> {
        Ok(self.block_len()? / 6)
    }

    pub fn eval_window(&self) -> usize {
        self.eval.window.unwrap_or(match self.train.system {
            SystemKind::Ffnn => 1,
            _ => self.train.window,
        })
    }

    pub fn eval_carry(&self) -> StateCarry {
        self.eval.state_carry.unwrap_or(self.train.state_carry)
    }

    pub fn transceiver(&self) -> Result<TransceiverConfig> {
        let cell = match self.train.system {
            SystemKind::Vanilla => CellKind::Vanilla,
            SystemKind::LstmGru => CellKind::LstmGru,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "system {} has no recurrent transceiver",
                    other.name()
                )))
            }
        };
        Ok(TransceiverConfig {
            alphabet: self.train.alphabet,
            block_len: self.block_len()?,
            cell,
            window: self.train.window,
        })
    }

    pub fn ffnn(&self) -> Result<FfnnConfig> {
        let mut cfg = FfnnConfig::standard(self.train.alphabet, self.block_len()?);
        if let Some(w) = &self.ffnn.tx_widths {
            cfg.tx_widths = w.clone();
        }
        if let Some(w) = &self.ffnn.rx_widths {
            cfg.rx_widths = w.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pam2_config(&self) -> Result<Pam2Config> {
        let cfg = Pam2Config {
            samples_per_symbol: self.samples_per_symbol()?,
            rolloff: self.pam2.rolloff,
            span: self.pam2.span,
            layers: self.pam2.layers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.train.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        self.channel.validate()?;
        let t = &self.train;
        self.block_len()?;
        if t.iterations == 0 {
            return bad("iterations must be positive");
        }
        if t.batch == 0 || t.window == 0 {
            return bad("batch and window must be positive");
        }
        if t.log_stride == 0 || t.reset_period == 0 {
            return bad("log_stride and reset_period must be positive");
        }
        if t.iterations % t.log_stride != 0 {
            return bad("log_stride must divide iterations");
        }
        if t.reset_period % t.log_stride != 0 {
            return bad("log_stride must divide reset_period");
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        crate::estimation::bits_per_message(t.alphabet)?;
        match t.system {
            SystemKind::Vanilla | SystemKind::LstmGru => {
                self.transceiver()?.validate()?;
            }
            SystemKind::Ffnn => {
                self.ffnn()?;
            }
            SystemKind::Pam2Ffnn => {
                self.pam2_config()?;
                if self.pam2.batch_symbols == 0 {
                    return bad("pam2 batch_symbols must be positive");
                }
            }
        }
        let e = &self.eval;
        if e.rng != RngKind::Tausworthe {
            return bad("test messages must come from the tausworthe generator");
        }
        if e.seed == t.seed {
            return bad("training and test seeds must differ");
        }
        if e.sequences == 0 || e.chunk == 0 {
            return bad("eval sequences and chunk must be positive");
        }
        if e.sequence_len <= self.eval_window() {
            return bad("sequence_len must exceed the inference window");
        }
        Ok(())
    }
}
