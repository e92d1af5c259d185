//! Frequency-domain linear filters applied by circular convolution.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Signed frequency of DFT bin `k` for an `n`-point transform at `rate`.
pub fn bin_frequency(k: usize, n: usize, rate: f64) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k < n_f / 2.0 {
        k * rate / n_f
    } else {
        (k - n_f) * rate / n_f
    }
}

/// A fixed-length filter `x -> IDFT(H . DFT(x))` with cached FFT plans.
#[derive(Clone)]
pub struct SpectralFilter {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    response: Vec<Complex64>,
    identity: bool,
}

impl fmt::Debug for SpectralFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralFilter")
            .field("len", &self.response.len())
            .finish()
    }
}

impl SpectralFilter {
    /// Builds the filter from a response evaluated at each bin's signed frequency.
    pub fn new(n: usize, rate: f64, mut response: impl FnMut(f64) -> Complex64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let response: Vec<Complex64> = (0..n).map(|k| response(bin_frequency(k, n, rate))).collect();
        let identity = response.iter().all(|&h| h == Complex64::new(1.0, 0.0));
        Self {
            forward,
            inverse,
            response,
            identity,
        }
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn response(&self) -> &[Complex64] {
        &self.response
    }

    /// Applies the filter in place.
    pub fn apply(&self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    /// Applies the adjoint (conjugate response) in place.
    pub fn apply_adjoint(&self, data: &mut [Complex64]) {
        self.run(data, true);
    }

    fn run(&self, data: &mut [Complex64], adjoint: bool) {
        assert_eq!(data.len(), self.response.len(), "filter length mismatch");
        if self.identity {
            return;
        }
        self.forward.process(data);
        let scale = 1.0 / data.len() as f64;
        for (x, h) in data.iter_mut().zip(&self.response) {
            let h = if adjoint { h.conj() } else { *h };
            *x *= h * scale;
        }
        self.inverse.process(data);
    }

    /// Filters a real signal and keeps the real part of the result.
    pub fn apply_real(&self, x: &[f64], adjoint: bool) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.run(&mut buf, adjoint);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Forward DFT of a real signal, unnormalized.
    pub fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }
}
