//! Differentiable model of an un-amplified IM/DD fiber link.
//!
//! Signal path, in order: transmitter brick-wall low-pass filter, DAC
//! quantization noise, Mach-Zehnder modulator (field `sin(x)`), attenuating
//! and dispersive fiber, square-law photodiode, receiver Gaussian noise,
//! receiver low-pass filter, ADC quantization noise.
//!
//! Every stage is available as a standalone function on [`Waveform`] and,
//! through [`ChannelPlan`], as a node sequence on an autodiff [`Graph`].
//! The two routes share the noise realization ([`NoiseSample`]) so they can
//! be compared sample by sample.

mod config;
mod noise;

pub use config::ChannelConfig;
pub use noise::{NoiseDraw, NoiseSample, NoiseStage};

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::dsp::SpectralFilter;
use crate::error::{Error, Result};
use crate::nn::{Graph, Var};

/// Speed of light in nm/ps.
pub const SPEED_OF_LIGHT_NM_PER_PS: f64 = 2.997_924_58e5;

/// Group-velocity dispersion `beta2 = -D lambda^2 / (2 pi c)` in ps^2/km,
/// from `D` in ps/nm/km and `lambda` in nm.
pub fn beta2_ps2_per_km(dispersion_ps_nm_km: f64, wavelength_nm: f64) -> f64 {
    -dispersion_ps_nm_km * wavelength_nm * wavelength_nm / (2.0 * PI * SPEED_OF_LIGHT_NM_PER_PS)
}

/// Field amplitude factor after `length_km` of fiber with `alpha_db_km` loss.
pub fn field_attenuation(alpha_db_km: f64, length_km: f64) -> f64 {
    10f64.powf(-alpha_db_km * length_km / 20.0)
}

/// Width of one quantization level for a converter spanning the transmitter
/// output range `[0, pi/4]`.
pub fn quantization_step(enob: f64) -> f64 {
    crate::nn::TX_CLIP / 2f64.powf(enob)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    /// Electrical signal.
    Real(Vec<f64>),
    /// Optical field envelope.
    Complex(Vec<Complex64>),
}

/// A sampled signal at a fixed rate in GSa/s.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Samples,
    pub rate_gsa: f64,
}

impl Waveform {
    pub fn real(samples: Vec<f64>, rate_gsa: f64) -> Self {
        Self {
            samples: Samples::Real(samples),
            rate_gsa,
        }
    }

    pub fn complex(samples: Vec<Complex64>, rate_gsa: f64) -> Self {
        Self {
            samples: Samples::Complex(samples),
            rate_gsa,
        }
    }

    pub fn len(&self) -> usize {
        match &self.samples {
            Samples::Real(v) => v.len(),
            Samples::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_real(&self) -> Result<&[f64]> {
        match &self.samples {
            Samples::Real(v) => Ok(v),
            Samples::Complex(_) => Err(Error::InvalidConfig(
                "expected an electrical (real) waveform".into(),
            )),
        }
    }

    pub fn as_complex(&self) -> Result<&[Complex64]> {
        match &self.samples {
            Samples::Complex(v) => Ok(v),
            Samples::Real(_) => Err(Error::InvalidConfig(
                "expected an optical (complex) waveform".into(),
            )),
        }
    }

    pub fn into_real(self) -> Result<Vec<f64>> {
        match self.samples {
            Samples::Real(v) => Ok(v),
            Samples::Complex(_) => Err(Error::InvalidConfig(
                "expected an electrical (real) waveform".into(),
            )),
        }
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        match &self.samples {
            Samples::Real(v) => v.iter().map(|x| x * x).sum(),
            Samples::Complex(v) => v.iter().map(|x| x.norm_sqr()).sum(),
        }
    }

    fn is_finite(&self) -> bool {
        match &self.samples {
            Samples::Real(v) => v.iter().all(|x| x.is_finite()),
            Samples::Complex(v) => v.iter().all(|x| x.re.is_finite() && x.im.is_finite()),
        }
    }
}

fn lowpass_filter(n: usize, rate_gsa: f64, cutoff_ghz: f64) -> Result<SpectralFilter> {
    if cutoff_ghz < 0.0 || cutoff_ghz >= rate_gsa / 2.0 {
        return Err(Error::InvalidConfig(format!(
            "low-pass cutoff {cutoff_ghz} GHz must lie in [0, {}) GHz",
            rate_gsa / 2.0
        )));
    }
    Ok(SpectralFilter::new(n, rate_gsa, |f| {
        if f.abs() <= cutoff_ghz {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

fn fiber_filter(n: usize, rate_gsa: f64, cfg: &ChannelConfig) -> SpectralFilter {
    let beta2 = beta2_ps2_per_km(cfg.dispersion_ps_nm_km, cfg.wavelength_nm);
    let amplitude = field_attenuation(cfg.attenuation_db_km, cfg.fiber_length_km);
    let length = cfg.fiber_length_km;
    SpectralFilter::new(n, rate_gsa, |f_ghz| {
        // rad/ps
        let omega = 2.0 * PI * f_ghz * 1e-3;
        Complex64::from_polar(amplitude, -(beta2 / 2.0) * omega * omega * length)
    })
}

/// Ideal low-pass filter: DFT bins with `|f| > cutoff` are zeroed.
pub fn brickwall_lpf(w: &Waveform, cutoff_ghz: f64) -> Result<Waveform> {
    let filter = lowpass_filter(w.len(), w.rate_gsa, cutoff_ghz)?;
    Ok(match &w.samples {
        Samples::Real(x) => Waveform::real(filter.apply_real(x, false), w.rate_gsa),
        Samples::Complex(x) => {
            let mut buf = x.clone();
            filter.apply(&mut buf);
            Waveform::complex(buf, w.rate_gsa)
        }
    })
}

/// Adds uniform quantization noise on `[-step/2, step/2]` with
/// `step = (pi/4) / 2^enob`.
pub fn add_quantization_noise(
    w: &Waveform,
    enob: f64,
    draw: NoiseDraw,
    stage: NoiseStage,
) -> Result<Waveform> {
    let x = w.as_real()?;
    let noise = noise::uniform(x.len(), quantization_step(enob), draw, stage);
    Ok(Waveform::real(
        x.iter().zip(&noise).map(|(a, b)| a + b).collect(),
        w.rate_gsa,
    ))
}

/// Sinusoidal field transfer `E = sin(x)`.
pub fn mzm(w: &Waveform) -> Result<Waveform> {
    let x = w.as_real()?;
    Ok(Waveform::complex(
        x.iter().map(|&v| Complex64::new(v.sin(), 0.0)).collect(),
        w.rate_gsa,
    ))
}

/// Linear fiber propagation: multiplication by
/// `10^(-alpha L / 20) exp(-j (beta2 / 2) omega^2 L)` in the frequency domain.
pub fn fiber_propagate(field: &Waveform, cfg: &ChannelConfig) -> Result<Waveform> {
    let e = field.as_complex()?;
    let filter = fiber_filter(e.len(), field.rate_gsa, cfg);
    let mut buf = e.to_vec();
    filter.apply(&mut buf);
    Ok(Waveform::complex(buf, field.rate_gsa))
}

/// Square-law detection `|E|^2`.
pub fn photodiode(field: &Waveform) -> Result<Waveform> {
    let e = field.as_complex()?;
    Ok(Waveform::real(
        e.iter().map(|c| c.norm_sqr()).collect(),
        field.rate_gsa,
    ))
}

/// Adds white Gaussian noise of the given variance.
pub fn add_receiver_noise(w: &Waveform, variance: f64, draw: NoiseDraw) -> Result<Waveform> {
    if !(variance >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "receiver noise variance must be >= 0, got {variance}"
        )));
    }
    let x = w.as_real()?;
    let noise = noise::gaussian(x.len(), variance, draw);
    Ok(Waveform::real(
        x.iter().zip(&noise).map(|(a, b)| a + b).collect(),
        w.rate_gsa,
    ))
}

/// Full link from the transmitter drive signal to the sampled receiver input.
pub fn channel_forward(tx: &Waveform, cfg: &ChannelConfig, draw: NoiseDraw) -> Result<Waveform> {
    cfg.validate()?;
    let rate = cfg.simulation_rate_gsa();
    if (tx.rate_gsa - rate).abs() > 1e-9 * rate {
        return Err(Error::InvalidConfig(format!(
            "waveform rate {} GSa/s differs from simulation rate {rate} GSa/s",
            tx.rate_gsa
        )));
    }
    let mut w = brickwall_lpf(tx, cfg.lpf_cutoff_ghz)?;
    if cfg.dac_noise {
        w = add_quantization_noise(&w, cfg.enob, draw, NoiseStage::Dac)?;
    }
    let mut w = photodiode(&fiber_propagate(&mzm(&w)?, cfg)?)?;
    if cfg.receiver_noise {
        w = add_receiver_noise(&w, cfg.receiver_noise_variance, draw)?;
    }
    let mut w = brickwall_lpf(&w, cfg.lpf_cutoff_ghz)?;
    if cfg.adc_noise {
        w = add_quantization_noise(&w, cfg.enob, draw, NoiseStage::Adc)?;
    }
    if !w.is_finite() {
        return Err(Error::NonFinite("channel output"));
    }
    Ok(w)
}

/// Channel for a fixed series length with precomputed filters.
#[derive(Debug, Clone)]
pub struct ChannelPlan {
    cfg: ChannelConfig,
    len: usize,
    lowpass: Arc<SpectralFilter>,
    fiber: Arc<SpectralFilter>,
}

impl ChannelPlan {
    pub fn new(cfg: &ChannelConfig, len: usize) -> Result<Self> {
        cfg.validate()?;
        let rate = cfg.simulation_rate_gsa();
        Ok(Self {
            cfg: cfg.clone(),
            len,
            lowpass: Arc::new(lowpass_filter(len, rate, cfg.lpf_cutoff_ghz)?),
            fiber: Arc::new(fiber_filter(len, rate, cfg)),
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Draws the noise for one pass, honoring the per-stage enable flags.
    pub fn sample_noise(&self, draw: NoiseDraw) -> NoiseSample {
        NoiseSample::draw(&self.cfg, self.len, draw)
    }

    /// Runs the channel on a plain signal.
    pub fn run(&self, tx: &[f64], noise: &NoiseSample) -> Result<Vec<f64>> {
        if tx.len() != self.len {
            return Err(Error::LengthMismatch {
                left: tx.len(),
                right: self.len,
            });
        }
        let mut x = self.lowpass.apply_real(tx, false);
        if let Some(n) = &noise.dac {
            x.iter_mut().zip(n).for_each(|(a, b)| *a += b);
        }
        let mut field: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v.sin(), 0.0)).collect();
        self.fiber.apply(&mut field);
        let mut y: Vec<f64> = field.iter().map(|c| c.norm_sqr()).collect();
        if let Some(n) = &noise.receiver {
            y.iter_mut().zip(n).for_each(|(a, b)| *a += b);
        }
        let mut y = self.lowpass.apply_real(&y, false);
        if let Some(n) = &noise.adc {
            y.iter_mut().zip(n).for_each(|(a, b)| *a += b);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("channel output"));
        }
        Ok(y)
    }

    /// Records the channel on the tape. `tx` is a `1 x len` node.
    pub fn record(&self, g: &mut Graph, tx: Var, noise: &NoiseSample) -> Var {
        assert_eq!(g.value(tx).dim(), (1, self.len), "channel input shape");
        let as_row = |v: &Vec<f64>| Array2::from_shape_vec((1, v.len()), v.clone()).expect("row");
        let mut x = g.filter_real(tx, &self.lowpass);
        if let Some(n) = &noise.dac {
            x = g.add_const(x, &as_row(n));
        }
        let field = g.mzm(x);
        let field = g.filter_complex(field, &self.fiber);
        let mut y = g.square_law(field);
        if let Some(n) = &noise.receiver {
            y = g.add_const(y, &as_row(n));
        }
        let mut y = g.filter_real(y, &self.lowpass);
        if let Some(n) = &noise.adc {
            y = g.add_const(y, &as_row(n));
        }
        y
    }
}

#[cfg(test)]
mod tests;
