//! Central-difference gradient verification.
//!
//! The checker evaluates a scalar function twice per parameter component with
//! symmetric perturbations and compares the quotient against the adjoint from
//! the tape. It shares no code with the reverse pass it validates.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Scalar function of a parameter list, expressed as a tape program.
pub trait ScalarFn {
    fn eval(&self, tape: &mut Tape, params: &[Var]) -> Result<Var>;
}

impl<F> ScalarFn for F
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    fn eval(&self, tape: &mut Tape, params: &[Var]) -> Result<Var> {
        self(tape, params)
    }
}

fn eval_value(f: &impl ScalarFn, params: &[Tensor]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f.eval(&mut tape, &vars)?;
    let v = tape.value(loss).item();
    if !v.is_finite() {
        return Err(Error::non_finite("grad_check objective"));
    }
    Ok(v)
}

/// Maximum relative error between analytic and central-difference gradients
/// over every component of every parameter:
/// `|analytic - central| / max(|analytic|, |central|, 1e-8)`.
pub fn grad_check(f: &impl ScalarFn, params: &[Tensor], step: f64) -> Result<f64> {
    assert!(step > 0.0, "grad_check step must be positive");

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f.eval(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.param(v).clone()).collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, grad) in analytic.iter().enumerate() {
        for ci in 0..grad.numel() {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + step;
            let plus = eval_value(f, &work)?;
            work[pi].data_mut()[ci] = orig - step;
            let minus = eval_value(f, &work)?;
            work[pi].data_mut()[ci] = orig;

            let central = (plus - minus) / (2.0 * step);
            let a = grad.data()[ci];
            let rel = (a - central).abs() / a.abs().max(central.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
