use serde::Serialize;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(1, |analytic|)` over all coordinates.
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` where the largest error occurred.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks the gradient of the scalar function `f` at `inputs`.
///
/// `f` receives one trainable [`Var`] per input and must be deterministic.
/// Each coordinate is probed with `(f(x + h·e) − f(x − h·e)) / 2h`.
pub fn finite_diff_check<F>(f: F, inputs: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v).clone()).collect();

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = probe.iter().map(|t| tape.param(t)).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut probe = inputs.to_vec();
    let mut max_rel_error: f64 = 0.0;
    let mut worst = None;
    let mut coordinates = 0;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let x0 = input.data()[j];
            probe[i].data_mut()[j] = x0 + h;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = x0 - h;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = x0;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[i].data()[j];
            let rel = (a - numeric).abs() / a.abs().max(1.0);
            coordinates += 1;
            if rel > max_rel_error || rel.is_nan() {
                max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                worst = Some((i, j));
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst,
        coordinates,
        tolerance: tol,
        passed: max_rel_error < tol,
    })
}
