use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and converter parameters of the link, in the units of the
/// field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub dispersion_ps_nm_km: f64,
    pub attenuation_db_km: f64,
    pub wavelength_nm: f64,
    pub fiber_length_km: f64,
    pub lpf_cutoff_ghz: f64,
    pub dac_rate_gsa: f64,
    pub oversampling: usize,
    pub enob: f64,
    pub receiver_noise_variance: f64,
    pub dac_noise: bool,
    pub receiver_noise: bool,
    pub adc_noise: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            dispersion_ps_nm_km: 17.0,
            attenuation_db_km: 0.2,
            wavelength_nm: 1550.0,
            fiber_length_km: 20.0,
            lpf_cutoff_ghz: 32.0,
            dac_rate_gsa: 84.0,
            oversampling: 4,
            enob: 6.0,
            receiver_noise_variance: 2.455e-4,
            dac_noise: true,
            receiver_noise: true,
            adc_noise: true,
        }
    }
}

impl ChannelConfig {
    /// Default link with every noise source disabled.
    pub fn noiseless() -> Self {
        Self::default().without_noise()
    }

    pub fn without_noise(mut self) -> Self {
        self.dac_noise = false;
        self.receiver_noise = false;
        self.adc_noise = false;
        self
    }

    pub fn with_length(mut self, km: f64) -> Self {
        self.fiber_length_km = km;
        self
    }

    pub fn simulation_rate_gsa(&self) -> f64 {
        self.dac_rate_gsa * self.oversampling as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.oversampling < 1 {
            return bad("oversampling must be >= 1".into());
        }
        if !(self.fiber_length_km >= 0.0) {
            return bad(format!("fiber length {} km must be >= 0", self.fiber_length_km));
        }
        if !(self.receiver_noise_variance >= 0.0) {
            return bad(format!(
                "receiver noise variance {} must be >= 0",
                self.receiver_noise_variance
            ));
        }
        if !(self.dac_rate_gsa > 0.0) || !(self.wavelength_nm > 0.0) {
            return bad("rates and wavelength must be positive".into());
        }
        let nyquist = self.simulation_rate_gsa() / 2.0;
        if !(self.lpf_cutoff_ghz > 0.0 && self.lpf_cutoff_ghz < nyquist) {
            return bad(format!(
                "low-pass cutoff {} GHz must lie in (0, {nyquist}) GHz",
                self.lpf_cutoff_ghz
            ));
        }
        if !self.enob.is_finite() || self.enob <= 0.0 {
            return bad(format!("ENOB {} must be positive", self.enob));
        }
        if !self.dispersion_ps_nm_km.is_finite() || !self.attenuation_db_km.is_finite() {
            return bad("fiber coefficients must be finite".into());
        }
        Ok(())
    }
}
