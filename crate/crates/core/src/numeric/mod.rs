//! Minimal dense linear algebra with reverse-mode differentiation.
//!
//! Just enough machinery for the model's equations: rank-1/2 tensors, a
//! named parameter registry, a tape for reverse-mode gradients, numerically
//! stable softmax, global-norm gradient clipping, and a central-difference
//! gradient checker.

mod check;
mod tape;
mod tensor;

pub use check::{gradient_check, Differentiable};
pub use tape::{NodeId, Tape};
pub use tensor::{ParamId, ParamRegistry, Tensor};

use crate::error::{Result, RmnError};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Softmax with max-subtraction so arbitrarily large logits cannot overflow.
///
/// Order-preserving: logit ranks equal probability ranks.
pub fn softmax_stable(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(RmnError::EmptyInput("softmax_stable"));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(RmnError::NonFinite {
            op: "softmax_stable",
        });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// `log(sum(exp(logits)))` computed with the same max-subtraction trick.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Rescale all gradients in the registry when their global L2 norm exceeds
/// `threshold`. Returns the scale that was applied (1.0 when unchanged).
pub fn clip_gradients(params: &mut ParamRegistry, threshold: f64) -> Result<f64> {
    if threshold <= 0.0 {
        return Err(RmnError::InvalidArgument {
            what: "clip_gradients",
            why: format!("threshold must be positive, got {threshold}"),
        });
    }
    let mut sq_sum = 0.0;
    for id in params.ids() {
        for &g in params.get(id).grad() {
            if !g.is_finite() {
                return Err(RmnError::NonFinite {
                    op: "clip_gradients",
                });
            }
            sq_sum += g * g;
        }
    }
    let norm = sq_sum.sqrt();
    if norm <= threshold {
        return Ok(1.0);
    }
    let scale = threshold / norm;
    for id in params.ids() {
        for g in params.get_mut(id).grad_mut() {
            *g *= scale;
        }
    }
    Ok(scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn softmax_oracle(logits: &[f64]) -> Vec<f64> {
        // Direct evaluation of e^{x_i} / sum_j e^{x_j}; only valid for
        // moderate logits, which is the point of keeping it separate.
        let exps: Vec<f64> = logits.iter().map(|&v| v.exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|&e| e / sum).collect()
    }

    #[test]
    fn softmax_symmetry() {
        let p = softmax_stable(&[0.0, 0.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_does_not_overflow_on_large_logits() {
        let p = softmax_stable(&[1000.0, 0.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!(p[0] > 1.0 - 1e-12);
        assert!(p[1] < 1e-12 && p[2] < 1e-12);
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let p = softmax_stable(&[1.0, 2.0, 3.0]).unwrap();
        let oracle = softmax_oracle(&[1.0, 2.0, 3.0]);
        for (a, b) in p.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p[0] - 0.090031).abs() < 1e-5);
        assert!((p[1] - 0.244728).abs() < 1e-5);
        assert!((p[2] - 0.665241).abs() < 1e-5);
    }

    #[test]
    fn softmax_rejects_empty_and_non_finite() {
        assert!(matches!(
            softmax_stable(&[]),
            Err(RmnError::EmptyInput(_))
        ));
        assert!(matches!(
            softmax_stable(&[1.0, f64::INFINITY]),
            Err(RmnError::NonFinite { .. })
        ));
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut reg = ParamRegistry::new();
        let id = reg.register("w", Tensor::zeros(2, 1)).unwrap();
        reg.get_mut(id).grad_mut().copy_from_slice(&[3.0, 0.0]);
        let scale = clip_gradients(&mut reg, 5.0).unwrap();
        assert_eq!(scale, 1.0);
        assert_eq!(reg.get(id).grad(), &[3.0, 0.0]);
    }

    #[test]
    fn clip_rescales_large_gradients() {
        let mut reg = ParamRegistry::new();
        let id = reg.register("w", Tensor::zeros(1, 1)).unwrap();
        reg.get_mut(id).grad_mut()[0] = 10.0;
        let scale = clip_gradients(&mut reg, 5.0).unwrap();
        assert!((scale - 0.5).abs() < 1e-15);
        assert!((reg.get(id).grad()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn clip_boundary_norm_is_not_rescaled() {
        let mut reg = ParamRegistry::new();
        let id = reg.register("w", Tensor::zeros(2, 1)).unwrap();
        reg.get_mut(id).grad_mut().copy_from_slice(&[3.0, 4.0]);
        let scale = clip_gradients(&mut reg, 5.0).unwrap();
        assert_eq!(scale, 1.0);
        assert_eq!(reg.get(id).grad(), &[3.0, 4.0]);
    }

    #[test]
    fn clip_rejects_non_finite_gradients() {
        let mut reg = ParamRegistry::new();
        let id = reg.register("w", Tensor::zeros(1, 1)).unwrap();
        reg.get_mut(id).grad_mut()[0] = f64::NAN;
        assert!(clip_gradients(&mut reg, 5.0).is_err());
    }

    proptest! {
        #[test]
        fn softmax_is_a_probability_vector(
            logits in proptest::collection::vec(-1e6f64..1e6, 1..40)
        ) {
            let p = softmax_stable(&logits).unwrap();
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }

        #[test]
        fn softmax_is_shift_invariant(
            logits in proptest::collection::vec(-100.0f64..100.0, 1..20),
            shift in -100.0f64..100.0,
        ) {
            let base = softmax_stable(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|&v| v + shift).collect();
            let moved = softmax_stable(&shifted).unwrap();
            for (a, b) in base.iter().zip(moved.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_preserves_order(
            logits in proptest::collection::vec(-50.0f64..50.0, 2..10)
        ) {
            let p = softmax_stable(&logits).unwrap();
            for i in 0..logits.len() {
                for j in 0..logits.len() {
                    if logits[i] < logits[j] {
                        prop_assert!(p[i] <= p[j]);
                    }
                }
            }
        }

        #[test]
        fn clipped_norm_never_exceeds_threshold(
            grads in proptest::collection::vec(-1e4f64..1e4, 1..30),
            threshold in 0.1f64..10.0,
        ) {
            let mut reg = ParamRegistry::new();
            let n = grads.len();
            let id = reg.register("w", Tensor::zeros(n, 1)).unwrap();
            reg.get_mut(id).grad_mut().copy_from_slice(&grads);
            clip_gradients(&mut reg, threshold).unwrap();
            let norm: f64 = reg.get(id).grad().iter().map(|g| g * g).sum::<f64>().sqrt();
            prop_assert!(norm <= threshold + 1e-9);
        }
    }
}
