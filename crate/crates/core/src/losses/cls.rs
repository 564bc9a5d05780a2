use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Softmax probabilities with the maximum logit subtracted first.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax cross-entropy of `logits` against `label`; gradient is `softmax - one_hot`.
pub fn cls_loss<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if logits.len() < 2 {
        return Err(Error::invalid(format!("cls_loss needs at least 2 classes, got {}", logits.len())));
    }
    if label >= logits.len() {
        return Err(Error::invalid(format!("label {label} out of range for {} classes", logits.len())));
    }
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().fold(T::zero(), |a, &z| a + (z - max).exp()).ln() + max;
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] = grad[label] - T::one();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_check;

    #[test]
    fn uniform_logits_give_log_k() {
        let (l, g) = cls_loss(&[0.3f64; 15], 4).unwrap();
        assert!((l - 15f64.ln()).abs() < 1e-12);
        assert!((l - 2.70805).abs() < 1e-5);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logit_gives_vanishing_loss() {
        let mut logits = vec![0.0f64; 15];
        logits[3] = 50.0;
        let (l, _) = cls_loss(&logits, 3).unwrap();
        assert!(l < 1e-20);
    }

    #[test]
    fn random_logits_match_direct_formula() {
        let logits = [0.2, -1.3, 2.7, 0.05, -0.6];
        let (l, g) = cls_loss(&logits, 2).unwrap();
        let z: f64 = logits.iter().map(|v: &f64| v.exp()).sum();
        assert!((l - (-(logits[2].exp() / z).ln())).abs() < 1e-12);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        let rep = finite_diff_check(|x: &[f64]| cls_loss(x, 2).unwrap().0, &logits, &g, 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6);
    }

    #[test]
    fn rejects_bad_label() {
        assert!(cls_loss(&[0.0, 1.0], 2).is_err());
        assert!(cls_loss(&[0.0], 0).is_err());
    }
}
