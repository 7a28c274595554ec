//! Central finite-difference checks of tape gradients.
//!
//! The numeric side only ever evaluates the forward pass, so it stays
//! independent of the backward rules it checks.

use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Denominator floor for relative errors. Below this magnitude the error is
/// measured against the floor instead of the gradient itself.
pub const REL_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub eps: f64,
    /// Check at most this many evenly spaced coordinates per input.
    pub sample: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            sample: None,
        }
    }
}

impl GradCheck {
    pub fn sampled(n: usize) -> Self {
        Self {
            sample: Some(n),
            ..Self::default()
        }
    }

    /// `f` builds a scalar loss from the given input vars.
    pub fn run<F>(&self, inputs: &[Tensor], f: F) -> Result<GradCheckReport, TensorError>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
    {
        let eval = |xs: &[Tensor]| -> Result<f64, TensorError> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
            let loss = f(&mut tape, &vars)?;
            Ok(tape.value(loss).item())
        };

        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let grads = tape.backward(loss)?;

        let mut report = GradCheckReport {
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            checked: 0,
        };
        let mut work = inputs.to_vec();
        for (k, var) in vars.iter().enumerate() {
            let analytic = grads.get(*var).expect("leaf gradient");
            let n = inputs[k].len();
            let coords: Vec<usize> = match self.sample {
                Some(s) if s < n => (0..s).map(|i| i * n / s).collect(),
                _ => (0..n).collect(),
            };
            for i in coords {
                let orig = inputs[k].data()[i];
                work[k].data_mut()[i] = orig + self.eps;
                let plus = eval(&work)?;
                work[k].data_mut()[i] = orig - self.eps;
                let minus = eval(&work)?;
                work[k].data_mut()[i] = orig;
                let numeric = (plus - minus) / (2.0 * self.eps);
                let a = analytic.data()[i];
                report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
                report.max_rel_err = report.max_rel_err.max(relative_error(a, numeric));
                report.checked += 1;
            }
        }
        Ok(report)
    }
}
