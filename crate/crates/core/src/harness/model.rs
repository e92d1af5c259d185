//! A trained system of any kind, and its checkpoint representation.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{RunConfig, SystemKind};
use crate::baselines::{FfnnAutoencoder, FfnnConfig, Pam2Config, RxFfnn};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, ParamSet};
use crate::transceiver::{Autoencoder, CellKind, Sbrnn, TransceiverConfig};

#[derive(Debug, Clone)]
pub enum Model {
    Sbrnn(Sbrnn),
    Ffnn(FfnnAutoencoder),
    Pam2(RxFfnn),
}

fn parse<T: std::str::FromStr>(ckpt: &Checkpoint, key: &str) -> Result<T> {
    ckpt.meta(key)?
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad value for `{key}`")))
}

fn widths(ckpt: &Checkpoint, key: &str) -> Result<Vec<usize>> {
    ckpt.meta(key)?
        .split(',')
        .map(|w| {
            w.parse()
                .map_err(|_| Error::Checkpoint(format!("bad value for `{key}`")))
        })
        .collect()
}

fn join(widths: &[usize]) -> String {
    widths.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl Model {
    /// Fresh parameters for the configured system, drawn from `seed`.
    pub fn init(cfg: &RunConfig, seed: u32) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
        Ok(match cfg.train.system {
            SystemKind::Vanilla | SystemKind::LstmGru => {
                Model::Sbrnn(Sbrnn::new(cfg.transceiver()?, &mut rng)?)
            }
            SystemKind::Ffnn => Model::Ffnn(FfnnAutoencoder::new(cfg.ffnn()?, &mut rng)?),
            SystemKind::Pam2Ffnn => Model::Pam2(RxFfnn::new(cfg.pam2_config()?, &mut rng)?),
        })
    }

    pub fn system(&self) -> SystemKind {
        match self {
            Model::Sbrnn(m) => match m.config().cell {
                CellKind::Vanilla => SystemKind::Vanilla,
                CellKind::LstmGru => SystemKind::LstmGru,
            },
            Model::Ffnn(_) => SystemKind::Ffnn,
            Model::Pam2(_) => SystemKind::Pam2Ffnn,
        }
    }

    pub fn params(&self) -> &ParamSet {
        match self {
            Model::Sbrnn(m) => m.params(),
            Model::Ffnn(m) => m.params(),
            Model::Pam2(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Model::Sbrnn(m) => m.params_mut(),
            Model::Ffnn(m) => m.params_mut(),
            Model::Pam2(m) => m.params_mut(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Model::Sbrnn(m) => m.node_count(),
            Model::Ffnn(m) => m.node_count(),
            Model::Pam2(m) => m.node_count(),
        }
    }

    /// The end-to-end systems; `None` for PAM2.
    pub fn autoencoder(&self) -> Option<&dyn Autoencoder> {
        match self {
            Model::Sbrnn(m) => Some(m),
            Model::Ffnn(m) => Some(m),
            Model::Pam2(_) => None,
        }
    }

    pub fn autoencoder_mut(&mut self) -> Option<&mut dyn Autoencoder> {
        match self {
            Model::Sbrnn(m) => Some(m),
            Model::Ffnn(m) => Some(m),
            Model::Pam2(_) => None,
        }
    }

    /// Parameters plus the metadata needed to rebuild the model.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let ckpt = Checkpoint::new(self.params().clone())
            .with_meta("system", self.system().name())
            .with_meta("init", "glorot-uniform");
        match self {
            Model::Sbrnn(m) => {
                let c = m.config();
                ckpt.with_meta("alphabet", c.alphabet)
                    .with_meta("block_len", c.block_len)
                    .with_meta("window", c.window)
            }
            Model::Ffnn(m) => {
                let c = m.config();
                ckpt.with_meta("alphabet", c.alphabet)
                    .with_meta("block_len", c.block_len)
                    .with_meta("tx_widths", join(&c.tx_widths))
                    .with_meta("rx_widths", join(&c.rx_widths))
            }
            Model::Pam2(m) => {
                let c = m.config();
                ckpt.with_meta("samples_per_symbol", c.samples_per_symbol)
                    .with_meta("rolloff", c.rolloff)
                    .with_meta("span", c.span)
                    .with_meta("layers", c.layers)
            }
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let system = SystemKind::parse(ckpt.meta("system")?)?;
        let params = ckpt.params.clone();
        Ok(match system {
            SystemKind::Vanilla | SystemKind::LstmGru => {
                let cfg = TransceiverConfig {
                    alphabet: parse(ckpt, "alphabet")?,
                    block_len: parse(ckpt, "block_len")?,
                    cell: if system == SystemKind::Vanilla {
                        CellKind::Vanilla
                    } else {
                        CellKind::LstmGru
                    },
                    window: parse(ckpt, "window")?,
                };
                Model::Sbrnn(Sbrnn::from_params(cfg, params)?)
            }
            SystemKind::Ffnn => {
                let cfg = FfnnConfig {
                    alphabet: parse(ckpt, "alphabet")?,
                    block_len: parse(ckpt, "block_len")?,
                    tx_widths: widths(ckpt, "tx_widths")?,
                    rx_widths: widths(ckpt, "rx_widths")?,
                };
                Model::Ffnn(FfnnAutoencoder::from_params(cfg, params)?)
            }
            SystemKind::Pam2Ffnn => {
                let cfg = Pam2Config {
                    samples_per_symbol: parse(ckpt, "samples_per_symbol")?,
                    rolloff: parse(ckpt, "rolloff")?,
                    span: parse(ckpt, "span")?,
                    layers: parse(ckpt, "layers")?,
                };
                Model::Pam2(RxFfnn::from_params(cfg, params)?)
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_for_every_system() {
        for system in [
            SystemKind::Vanilla,
            SystemKind::LstmGru,
            SystemKind::Ffnn,
            SystemKind::Pam2Ffnn,
        ] {
            let mut cfg = RunConfig::default();
            cfg.train.system = system;
            cfg.train.rate_gbps = 84;
            cfg.pam2.span = 11;
            cfg.pam2.layers = 6;
            let model = Model::init(&cfg, 3).unwrap();
            let bytes = model.to_checkpoint().to_bytes().unwrap();
            let back = Model::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
            assert_eq!(back.system(), system);
            assert_eq!(back.params(), model.params());
            assert_eq!(back.to_checkpoint().to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn published_node_counts_from_shapes() {
        let mut cfg = RunConfig::default();
        let mut count = |system, rate| {
            cfg.train.system = system;
            cfg.train.rate_gbps = rate;
            Model::init(&cfg, 0).unwrap().node_count()
        };
        assert_eq!(count(SystemKind::Vanilla, 42), 1248);
        assert_eq!(count(SystemKind::LstmGru, 42), 3104);
        assert_eq!(count(SystemKind::Vanilla, 84), 1104);
        assert_eq!(count(SystemKind::LstmGru, 84), 2672);
        assert_eq!(count(SystemKind::Ffnn, 42), 736);
        assert_eq!(count(SystemKind::Ffnn, 84), 688);
        assert_eq!(count(SystemKind::Pam2Ffnn, 42), 1457);
        assert_eq!(count(SystemKind::Pam2Ffnn, 84), 728);
    }

    #[test]
    fn mismatched_metadata_is_rejected() {
        let model = Model::init(&RunConfig::default(), 1).unwrap();
        let ckpt = model.to_checkpoint().with_meta("block_len", 24);
        assert!(Model::from_checkpoint(&ckpt).is_err());
        let ckpt = model.to_checkpoint().with_meta("system", "nope");
        assert!(Model::from_checkpoint(&ckpt).is_err());
    }
}
