use ndarray::{Array2, Zip};

use super::tensor::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Array2<f64>> = params
            .iter()
            .map(|(_, t)| Array2::zeros(t.value().dim()))
            .collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from `grads` (aligned with `params`). A missing
    /// gradient counts as zero.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Array2<f64>>]) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::LengthMismatch {
                left: params.len(),
                right: grads.len(),
            });
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                let want = params.at(i).value().dim();
                if g.dim() != want {
                    return Err(Error::ShapeMismatch {
                        context: "adam gradient",
                        expected: vec![want.0, want.1],
                        actual: vec![g.nrows(), g.ncols()],
                    });
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("adam gradient"));
                }
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);

        for (i, g) in grads.iter().enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            match g {
                Some(g) => {
                    Zip::from(&mut *m).and(&mut *v).and(g).for_each(|m, v, &g| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                    });
                }
                None => {
                    m.mapv_inplace(|x| beta1 * x);
                    v.mapv_inplace(|x| beta2 * x);
                }
            }
            let theta = params.at_mut(i).value_mut();
            Zip::from(theta).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let m_hat = m / correction1;
                let v_hat = v / correction2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            });
        }
        Ok(())
    }
}
