//! Central-difference gradient verification.

use crate::error::{Result, RmnError};

use super::ParamRegistry;

/// A scalar loss over a set of registered parameters, with an analytic
/// gradient path. `loss` must be side-effect free and deterministic;
/// `loss_with_grad` must leave fresh gradients in the registry tensors.
pub trait Differentiable {
    fn loss(&mut self) -> Result<f64>;
    fn loss_with_grad(&mut self) -> Result<f64>;
    fn params(&mut self) -> &mut ParamRegistry;
}

/// Compare the analytic gradient of every parameter entry against the
/// central difference `(L(t+e) - L(t-e)) / 2e` and return the maximum
/// relative error `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// Non-deterministic functions (for example dropout in train mode) are
/// rejected: two evaluations at the unperturbed point must agree bitwise.
pub fn gradient_check<D: Differentiable>(f: &mut D, epsilon: f64) -> Result<f64> {
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(RmnError::InvalidArgument {
            what: "gradient_check",
            why: format!("epsilon must lie in [1e-6, 1e-4], got {epsilon}"),
        });
    }
    let first = f.loss()?;
    let second = f.loss()?;
    if first.to_bits() != second.to_bits() {
        return Err(RmnError::NonDeterministic);
    }

    f.params().zero_all_grads();
    f.loss_with_grad()?;
    let analytic: Vec<Vec<f64>> = f
        .params()
        .iter()
        .map(|(_, t)| t.grad().to_vec())
        .collect();

    let mut max_rel = 0.0f64;
    let ids: Vec<_> = f.params().ids().collect();
    for (pi, id) in ids.iter().enumerate() {
        let entries = f.params().get(*id).len();
        for k in 0..entries {
            let orig = f.params().get(*id).values()[k];
            f.params().get_mut(*id).values_mut()[k] = orig + epsilon;
            let up = f.loss()?;
            f.params().get_mut(*id).values_mut()[k] = orig - epsilon;
            let down = f.loss()?;
            f.params().get_mut(*id).values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic[pi][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
