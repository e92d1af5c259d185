use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{quantization_step, ChannelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseStage {
    Dac,
    Receiver,
    Adc,
}

impl NoiseStage {
    fn index(self) -> u64 {
        match self {
            NoiseStage::Dac => 0,
            NoiseStage::Receiver => 1,
            NoiseStage::Adc => 2,
        }
    }
}

/// Identifies one noise realization. The same draw always reproduces the
/// same samples at every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseDraw {
    pub seed: u64,
    pub stream: u64,
}

impl NoiseDraw {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(self, stage: NoiseStage) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream.wrapping_mul(4).wrapping_add(stage.index()));
        rng
    }
}

pub(super) fn uniform(len: usize, step: f64, draw: NoiseDraw, stage: NoiseStage) -> Vec<f64> {
    let mut rng = draw.rng(stage);
    let half = step / 2.0;
    (0..len).map(|_| rng.random_range(-half..=half)).collect()
}

pub(super) fn gaussian(len: usize, variance: f64, draw: NoiseDraw) -> Vec<f64> {
    if variance == 0.0 {
        return vec![0.0; len];
    }
    let mut rng = draw.rng(NoiseStage::Receiver);
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite variance");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// Noise samples of one channel pass; `None` for disabled stages.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseSample {
    pub dac: Option<Vec<f64>>,
    pub receiver: Option<Vec<f64>>,
    pub adc: Option<Vec<f64>>,
}

impl NoiseSample {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn draw(cfg: &ChannelConfig, len: usize, draw: NoiseDraw) -> Self {
        let step = quantization_step(cfg.enob);
        Self {
            dac: cfg
                .dac_noise
                .then(|| uniform(len, step, draw, NoiseStage::Dac)),
            receiver: cfg
                .receiver_noise
                .then(|| gaussian(len, cfg.receiver_noise_variance, draw)),
            adc: cfg
                .adc_noise
                .then(|| uniform(len, step, draw, NoiseStage::Adc)),
        }
    }
}
