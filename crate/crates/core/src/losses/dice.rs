use crate::error::{Error, Result};
use crate::groundtruth::{SegPyramid, SEG_LEVELS};
use crate::numerics::Tensor4;
use crate::scalar::Scalar;

/// Smoothing term added to numerator and denominator of every level.
pub const DICE_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DiceOutput<T> {
    pub total: T,
    pub per_level: [T; SEG_LEVELS],
    /// Gradient of `total` with respect to each level's probabilities.
    pub grads: Vec<Tensor4<T>>,
}

/// Soft Dice loss of one probability map against a binary target, and its gradient.
pub fn dice_level<T: Scalar>(pred: &Tensor4<T>, gt: &Tensor4<T>) -> Result<(T, Tensor4<T>)> {
    pred.ensure_same_dims(gt, "dice_loss level")?;
    let eps = T::of(DICE_EPS);
    let two = T::of(2.0);
    let (mut inter, mut p2, mut s2) = (T::zero(), T::zero(), T::zero());
    for (&p, &s) in pred.as_slice().iter().zip(gt.as_slice()) {
        inter = inter + p * s;
        p2 = p2 + p * p;
        s2 = s2 + s * s;
    }
    let num = two * inter + eps;
    let den = p2 + s2 + eps;
    let loss = T::one() - num / den;
    let den2 = den * den;
    let grad = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&p, &s)| -(two * s * den - num * two * p) / den2)
        .collect();
    Ok((loss, Tensor4::from_vec(pred.dims(), grad)?))
}

/// Sum over the three pyramid levels of `1 - (2 Σ p s + ε) / (Σ p² + Σ s² + ε)`.
pub fn dice_loss<T: Scalar>(pred_probs: &[Tensor4<T>], gt: &SegPyramid) -> Result<DiceOutput<T>> {
    if pred_probs.len() != SEG_LEVELS {
        return Err(Error::shape(format!(
            "dice_loss expects {SEG_LEVELS} levels, got {}",
            pred_probs.len()
        )));
    }
    let mut per_level = [T::zero(); SEG_LEVELS];
    let mut grads = Vec::with_capacity(SEG_LEVELS);
    for (k, (p, level)) in pred_probs.iter().zip(&gt.levels).enumerate() {
        if (p.height(), p.width()) != (level.height, level.width) || p.batch() * p.channels() != 1 {
            return Err(Error::shape(format!(
                "dice_loss level {k}: prediction {:?} vs target {}x{}",
                p.dims(),
                level.height,
                level.width
            )));
        }
        let (l, g) = dice_level(p, &level.to_tensor())?;
        per_level[k] = l;
        grads.push(g);
    }
    let total = per_level.iter().fold(T::zero(), |a, &b| a + b);
    Ok(DiceOutput { total, per_level, grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{build_seg_pyramid, encode_segmentation, AnnotationSet, Point};
    use crate::numerics::finite_diff_check;
    use crate::numerics::testutil::{random_tensor, rng};

    fn pyramid() -> SegPyramid {
        let ann = AnnotationSet::new(32, 32, vec![Point { x: 10.0, y: 12.0 }, Point { x: 25.0, y: 3.0 }]).unwrap();
        build_seg_pyramid(&encode_segmentation(&ann))
    }

    #[test]
    fn perfect_overlap_is_near_zero() {
        let gt = pyramid();
        let preds: Vec<Tensor4<f64>> = gt.levels.iter().map(|l| l.to_tensor()).collect();
        let out = dice_loss(&preds, &gt).unwrap();
        assert!(out.per_level.iter().all(|&l| l.abs() < 1e-5));
    }

    #[test]
    fn empty_against_empty_is_stable() {
        let ann = AnnotationSet::empty(16, 16);
        let gt = build_seg_pyramid(&encode_segmentation(&ann));
        let preds: Vec<Tensor4<f64>> = gt.levels.iter().map(|l| l.to_tensor()).collect();
        let out = dice_loss(&preds, &gt).unwrap();
        assert!(out.total.abs() < 1e-5);
        assert!(out.grads.iter().all(|g| g.all_finite()));
    }

    #[test]
    fn empty_target_gradient_closed_form() {
        // s = 0: L = 1 - ε / (Σp² + ε), so ∂L/∂p_i = 2 ε p_i / (Σp² + ε)².
        let mut r = rng(5);
        let pred = random_tensor(&mut r, [1, 1, 3, 4]).map(|v| 0.5 + 0.4 * v);
        let (_, g) = dice_level(&pred, &Tensor4::zeros(pred.dims())).unwrap();
        let den = pred.as_slice().iter().map(|p| p * p).sum::<f64>() + DICE_EPS;
        for (&gi, &p) in g.as_slice().iter().zip(pred.as_slice()) {
            let want = 2.0 * DICE_EPS * p / (den * den);
            assert!((gi - want).abs() <= 1e-12 * want.abs());
        }
    }

    #[test]
    fn uniform_half_against_half_foreground() {
        // 4x4 map, 8 foreground pixels, prediction 0.5 everywhere:
        // 1 - (2*4 + ε) / (16*0.25 + 8 + ε) = 1 - (8 + ε) / (12 + ε)
        let pred = Tensor4::filled([1, 1, 4, 4], 0.5f64);
        let gt = Tensor4::from_fn([1, 1, 4, 4], |[_, _, y, _]| if y < 2 { 1.0 } else { 0.0 });
        let (l, _) = dice_level(&pred, &gt).unwrap();
        let expected = 1.0 - (8.0 + 1e-6) / (12.0 + 1e-6);
        assert!((l - expected).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let gt = pyramid();
        let mut r = rng(51);
        let preds: Vec<Tensor4<f64>> = gt
            .levels
            .iter()
            .map(|l| random_tensor(&mut r, [1, 1, l.height, l.width]).map(|v| 0.5 + 0.45 * v))
            .collect();
        let out = dice_loss(&preds, &gt).unwrap();
        for k in 0..3 {
            let f = |x: &[f64]| {
                let mut p = preds.clone();
                p[k] = Tensor4::from_vec(p[k].dims(), x.to_vec()).unwrap();
                dice_loss(&p, &gt).unwrap().total
            };
            let rep = finite_diff_check(f, preds[k].as_slice(), out.grads[k].as_slice(), 1e-5).unwrap();
            assert!(rep.max_rel_err < 1e-6, "level {k}: {rep:?}");
        }
    }

    #[test]
    fn mismatched_levels_are_rejected() {
        let gt = pyramid();
        let preds = vec![Tensor4::<f64>::zeros([1, 1, 4, 4]); 3];
        assert!(dice_loss(&preds, &gt).is_err());
        assert!(dice_loss(&preds[..2], &gt).is_err());
    }
}
