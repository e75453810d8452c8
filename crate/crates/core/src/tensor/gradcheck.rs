//! Central finite-difference gradient verification.
//!
//! The numeric side never touches the tape's backward rules, so it can serve
//! as an independent oracle for them.

use super::{Tape, Tensor};
use crate::error::{Error, Result};

/// Denominator floor for relative errors, per the contract
/// `err = |a - n| / max(|a|, |n|, 1e-8)`.
const REL_FLOOR: f64 = 1e-8;

fn eval_scalar<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    let tape = Tape::new();
    let y = f(&tape, inputs)?;
    if y.numel() != 1 {
        return Err(Error::Rank {
            op: "grad_check",
            expected: 1,
            shape: y.shape(),
        });
    }
    Ok(y.item())
}

/// Compare reverse-mode gradients of a scalar function against central
/// differences `(f(x+δ) − f(x−δ)) / 2δ` for every coordinate of every input.
/// Returns the worst relative error observed.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    grad_check_named(
        f,
        &inputs
            .iter()
            .map(|t| (String::new(), t.clone()))
            .collect::<Vec<_>>(),
        step,
    )
    .map(|per_input| per_input.into_iter().fold(0.0, |w, (_, e)| f64::max(w, e)))
}

/// As [`grad_check`], but reports the worst relative error per named input.
pub fn grad_check_named<F>(
    f: F,
    inputs: &[(String, Tensor)],
    step: f64,
) -> Result<Vec<(String, f64)>>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    grad_check_steps(f, inputs, &[step])
}

/// Multi-step variant: each coordinate is compared at every step in `steps`
/// and scored by its best agreement. Central differences trade truncation
/// against cancellation noise, so no single step suits both large- and
/// small-curvature coordinates; a wrong gradient disagrees at every step.
pub fn grad_check_steps<F>(
    f: F,
    inputs: &[(String, Tensor)],
    steps: &[f64],
) -> Result<Vec<(String, f64)>>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    assert!(!steps.is_empty(), "need at least one finite-difference step");
    assert!(
        steps.iter().all(|&s| s > 0.0),
        "finite-difference steps must be positive"
    );
    let tensors: Vec<Tensor> = inputs.iter().map(|(_, t)| t.clone()).collect();

    for t in &tensors {
        t.zero_grad();
    }
    let tape = Tape::new();
    let y = f(&tape, &tensors)?;
    if y.numel() != 1 {
        return Err(Error::Rank {
            op: "grad_check",
            expected: 1,
            shape: y.shape(),
        });
    }
    tape.backward(&y)?;
    let analytic: Vec<Vec<f64>> = tensors
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    drop(tape);

    let mut report = Vec::with_capacity(inputs.len());
    for (idx, (name, t)) in inputs.iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..t.numel() {
            let orig = t.get(i);
            let a = analytic[idx][i];
            let mut best = f64::INFINITY;
            for &step in steps {
                t.set_coord(i, orig + step);
                let plus = eval_scalar(&f, &tensors)?;
                t.set_coord(i, orig - step);
                let minus = eval_scalar(&f, &tensors)?;
                t.set_coord(i, orig);
                let numeric = (plus - minus) / (2.0 * step);
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
                best = best.min(err);
            }
            worst = worst.max(best);
        }
        report.push((name.clone(), worst));
    }
    Ok(report)
}
