//! Central finite-difference gradient checks.

use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::Result;

/// Relative error with a floor on the denominator so gradients near zero are
/// compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Compares the reverse-mode gradient of the scalar `f(inputs)` with central
/// differences of step `h` for every input element. Returns the largest
/// relative error seen.
pub fn check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut worst: f64 = 0.0;
    let mut work = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[k].len()];
        let analytic = grads.get(*v).unwrap_or(&zeros).to_vec();
        for i in 0..inputs[k].len() {
            let x0 = inputs[k].data()[i];
            work[k].data_mut()[i] = x0 + h;
            let fp = eval(&work)?;
            work[k].data_mut()[i] = x0 - h;
            let fm = eval(&work)?;
            work[k].data_mut()[i] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            worst = worst.max(relative_error(analytic[i], numeric));
        }
    }
    Ok(worst)
}

/// Reduces a tensor to a scalar with fixed pseudo-random weights so every
/// output element gets a distinct, nonzero upstream gradient.
pub fn project(tape: &mut Tape, y: Var) -> Result<Var> {
    let n = tape.value(y).len();
    let weights: Vec<f64> = (0..n)
        .map(|i| ((i as f64 + 1.0) * 0.7548776662).fract() * 2.0 - 1.0)
        .collect();
    tape.weighted_sum(y, &weights)
}
