//! Central finite-difference verification of analytic gradients.

use ndarray::Array2;

use super::tensor::ParamSet;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Magnitude below which gradient components are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Evaluation of a scalar objective plus a signature of its piecewise-linear
/// activation pattern. Two evaluations with different signatures lie on
/// different sides of a kink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub value: f64,
    pub signature: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates whose finite-difference stencil straddled a kink.
    pub skipped: usize,
    pub max_relative_error: f64,
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_relative_error < tolerance
    }
}

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic` (aligned with `params`) against central differences
/// of `objective` at every coordinate.
pub fn check<F>(
    params: &ParamSet,
    analytic: &[Option<Array2<f64>>],
    step: f64,
    mut objective: F,
) -> GradCheckReport
where
    F: FnMut(&ParamSet) -> Probe,
{
    let base = objective(params);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    for (i, grad) in analytic.iter().enumerate().take(params.len()) {
        let count = params.at(i).len();
        for k in 0..count {
            let original = flat(&work, i, k);
            set_flat(&mut work, i, k, original + step);
            let plus = objective(&work);
            set_flat(&mut work, i, k, original - step);
            let minus = objective(&work);
            set_flat(&mut work, i, k, original);

            if plus.signature != base.signature || minus.signature != base.signature {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus.value - minus.value) / (2.0 * step);
            let a = grad
                .as_ref()
                .map_or(0.0, |g| g.as_slice().expect("contiguous")[k]);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                let name = params.names().nth(i).unwrap_or_default().to_string();
                report.worst = Some((name, k));
            }
        }
    }
    report
}

fn flat(p: &ParamSet, i: usize, k: usize) -> f64 {
    p.at(i).value().as_slice().expect("contiguous")[k]
}

fn set_flat(p: &mut ParamSet, i: usize, k: usize, v: f64) {
    p.at_mut(i).value_mut().as_slice_mut().expect("contiguous")[k] = v;
}
