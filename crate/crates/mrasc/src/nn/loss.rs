//! Numerically stable softmax cross-entropy.

use super::tensor::Scalar;
use super::NnError;

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .fold(logits[0], |m, &v| m.maximum(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let mut sum = T::ZERO;
    for &e in &exps {
        sum += e;
    }
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy against a class index.
///
/// Returns `(loss, probabilities, gradient w.r.t. logits)` where the
/// gradient is `p - onehot(target)`.
pub fn softmax_xent<T: Scalar>(
    logits: &[T],
    target: usize,
) -> Result<(T, Vec<T>, Vec<T>), NnError> {
    let k = logits.len();
    if k < 2 {
        return Err(NnError::Shape(format!("need at least 2 classes, got {k}")));
    }
    if target >= k {
        return Err(NnError::BadTarget { index: target, classes: k });
    }
    let max = logits.iter().fold(logits[0], |m, &v| m.maximum(v));
    let mut sum = T::ZERO;
    let exps: Vec<T> = logits
        .iter()
        .map(|&v| {
            let e = (v - max).exp();
            sum += e;
            e
        })
        .collect();
    // -ln p_t = -(l_t - max - ln sum)
    let loss = sum.ln() - (logits[target] - max);
    let probs: Vec<T> = exps.into_iter().map(|e| e / sum).collect();
    let mut grad = probs.clone();
    grad[target] -= T::ONE;
    Ok((loss, probs, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_fifteen_classes() {
        let logits = vec![0.3f64; 15];
        let (loss, probs, _) = softmax_xent(&logits, 4).unwrap();
        assert!((loss - (15.0f64).ln()).abs() < 1e-12);
        assert!((loss - 2.708).abs() < 1e-3);
        for p in probs {
            assert!((p - 1.0 / 15.0).abs() < 1e-12);
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let (loss, probs, grad) = softmax_xent(&[1000.0f64, 0.0], 0).unwrap();
        assert!(loss.is_finite());
        assert!(loss >= 0.0);
        assert!((probs[0] - 1.0).abs() < 1e-12);
        assert!(probs[1] < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn target_out_of_range_is_an_index_error() {
        assert!(matches!(
            softmax_xent(&[0.0f64, 1.0], 2),
            Err(NnError::BadTarget { index: 2, classes: 2 })
        ));
    }

    #[test]
    fn probabilities_sum_to_one_and_shift_invariant() {
        let logits = vec![0.2f64, -1.3, 4.0, 0.0, 2.2];
        let p = softmax(&logits);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|&v| v >= 0.0));
        let shifted: Vec<f64> = logits.iter().map(|v| v + 11.5).collect();
        let q = softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = vec![0.7f64, -0.2, 1.1, 0.4, -1.0];
        let target = 2;
        let (_, _, grad) = softmax_xent(&logits, target).unwrap();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus[i] += h;
            let mut minus = logits.clone();
            minus[i] -= h;
            let lp = softmax_xent(&plus, target).unwrap().0;
            let lm = softmax_xent(&minus, target).unwrap().0;
            let numeric = (lp - lm) / (2.0 * h);
            let denom = grad[i].abs().max(numeric.abs()).max(1e-8);
            assert!(
                ((grad[i] - numeric) / denom).abs() < 1e-6,
                "coord {i}: {} vs {numeric}",
                grad[i]
            );
        }
    }
}
