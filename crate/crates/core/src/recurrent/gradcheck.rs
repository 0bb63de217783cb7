//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// [`relative_error`] with Euclidean norms over a whole tensor.
pub fn tensor_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    diff / norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied())).max(1e-8)
}

/// Result for one named parameter tensor. Pass/fail uses `rel_error`.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub elements: usize,
    /// Tensor-level relative error.
    pub rel_error: f64,
    /// Largest elementwise relative error, for diagnostics.
    pub max_element_rel_error: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }

    pub fn max_element_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_element_rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.passed)
    }
}

/// Compares `analytic` against central differences of `objective` around `params`.
///
/// `objective` must be deterministic; it is evaluated twice at the unperturbed
/// point and a bitwise disagreement is reported as an error.
pub fn gradient_check<P, F>(objective: F, params: &P, analytic: &P, config: GradCheckConfig) -> Result<GradCheckReport>
where
    P: ParamSet + Clone,
    F: Fn(&P) -> f64,
{
    let first = objective(params);
    let second = objective(params);
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let base = params.flat_values();
    let grads = analytic.flat_values();
    if grads.len() != base.len() {
        return Err(Error::Shape {
            op: "gradient_check",
            left: vec![base.len()],
            right: vec![grads.len()],
        });
    }

    let mut probe = params.clone();
    let mut values = base.clone();
    let mut eval_at = |index: usize, value: f64, probe: &mut P| -> Result<f64> {
        values[index] = value;
        probe.set_flat_values(&values)?;
        let out = objective(probe);
        values[index] = base[index];
        Ok(out)
    };

    let mut report = Vec::new();
    let mut offset = 0;
    for (name, tensor) in params.named_tensors() {
        let n = tensor.len();
        let mut check = ParamCheck {
            name,
            elements: n,
            rel_error: 0.0,
            max_element_rel_error: 0.0,
            worst_index: 0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
            passed: true,
        };
        let mut numerics = Vec::with_capacity(n);
        for k in 0..n {
            let idx = offset + k;
            let plus = eval_at(idx, base[idx] + config.epsilon, &mut probe)?;
            let minus = eval_at(idx, base[idx] - config.epsilon, &mut probe)?;
            let numeric = (plus - minus) / (2.0 * config.epsilon);
            numerics.push(numeric);
            let err = relative_error(grads[idx], numeric);
            if err > check.max_element_rel_error || !err.is_finite() {
                check.max_element_rel_error = err;
                check.worst_index = k;
                check.worst_analytic = grads[idx];
                check.worst_numeric = numeric;
            }
        }
        check.rel_error = tensor_relative_error(&grads[offset..offset + n], &numerics);
        check.passed = check.rel_error < config.tolerance && check.max_element_rel_error.is_finite();
        report.push(check);
        offset += n;
    }
    Ok(GradCheckReport {
        tolerance: config.tolerance,
        params: report,
    })
}
