//! Central finite-difference gradient checking.

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Outcome of a gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords: usize,
}

/// Relative error with a small floor so coordinates whose true derivative
/// is ~0 are judged on absolute error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the tape gradient of a scalar function of `inputs` with central
/// differences of step `h` in every coordinate of every input.
///
/// `f` must record a single-element output on the tape it is given and must
/// be deterministic; it is re-run for each perturbed coordinate.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).len() != 1 {
        return Err(Error::invalid("grad_check needs a scalar-valued function"));
    }
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        coords: 0,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (ti, &var) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[ti].shape());
        let analytic = grads.get(var).unwrap_or(&zeros);
        for j in 0..inputs[ti].len() {
            let x0 = inputs[ti].data()[j];
            probe[ti].data_mut()[j] = x0 + h;
            let fp = eval(&probe)?;
            probe[ti].data_mut()[j] = x0 - h;
            let fm = eval(&probe)?;
            probe[ti].data_mut()[j] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.data()[j];
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            report.max_rel_error = report.max_rel_error.max(relative_error(a, numeric));
            report.coords += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact_to_rounding() {
        let x = Tensor::from_fn(&[2, 3], |i| i as f64 - 2.5);
        let w: Vec<f64> = (0..6).map(|i| 0.5 + i as f64).collect();
        let report = grad_check(
            |tape, v| tape.weighted_sum(v[0], w.clone()),
            &[x],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.coords, 6);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }
}
