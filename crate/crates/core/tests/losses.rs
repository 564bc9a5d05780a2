use approx::assert_relative_eq;
use proptest::prelude::*;
use ssrhef::losses::{cls_loss, dice_level, focusing_weight, hef_loss, HefConfig};
use ssrhef::numerics::sigmoid;
use ssrhef::Tensor;

fn plane(h: usize, w: usize, v: Vec<f64>) -> Tensor {
    Tensor::from_vec([1, 1, h, w], v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hef_without_focusing_is_mse(pred in prop::collection::vec(-3.0f64..3.0, 12), gt in prop::collection::vec(0.0f64..2.0, 12)) {
        let (l, _) = hef_loss(&plane(3, 4, pred.clone()), &plane(3, 4, gt.clone()), &HefConfig { gamma: 0.0 }).unwrap();
        let mse = pred.iter().zip(&gt).map(|(p, g)| (p - g) * (p - g)).sum::<f64>() / 12.0;
        prop_assert!((l - mse).abs() < 1e-12);
    }

    #[test]
    fn hef_is_non_negative_and_zero_only_on_match(pred in prop::collection::vec(0.0f64..3.0, 6), gamma in 0.0f64..4.0) {
        let p = plane(2, 3, pred);
        let cfg = HefConfig { gamma };
        let (same, _) = hef_loss(&p, &p, &cfg).unwrap();
        prop_assert_eq!(same, 0.0);
        let shifted = p.map(|v| v + 0.5);
        let (l, _) = hef_loss(&p, &shifted, &cfg).unwrap();
        prop_assert!(l > 0.0);
    }

    #[test]
    fn dice_levels_stay_in_unit_range(pred in prop::collection::vec(0.0f64..1.0, 16), mask in prop::collection::vec(any::<bool>(), 16)) {
        let gt = plane(4, 4, mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        let (l, _) = dice_level(&plane(4, 4, pred), &gt).unwrap();
        prop_assert!((0.0..=1.001).contains(&l));
    }

    #[test]
    fn dice_is_symmetric_for_binary_maps(a in prop::collection::vec(any::<bool>(), 16), b in prop::collection::vec(any::<bool>(), 16)) {
        let to = |m: &[bool]| plane(4, 4, m.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect());
        let (ab, _) = dice_level(&to(&a), &to(&b)).unwrap();
        let (ba, _) = dice_level(&to(&b), &to(&a)).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn cls_gradient_sums_to_zero(logits in prop::collection::vec(-20.0f64..20.0, 15), label in 0usize..15) {
        let (l, g) = cls_loss(&logits, label).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }
}

#[test]
fn focusing_weight_decreases_with_prediction() {
    for r in [0.1, 1.0, 10.0] {
        let terms: Vec<f64> = (0..=100)
            .map(|i| {
                let d = -5.0 + 0.1 * i as f64;
                focusing_weight(d, 2.0) * r * r
            })
            .collect();
        assert!(terms.windows(2).all(|w| w[1] < w[0]), "r={r}");
    }
}

#[test]
fn easy_predictions_are_down_weighted() {
    let ratio = focusing_weight(0.0, 2.0) / focusing_weight(4.0, 2.0);
    assert_relative_eq!(ratio, (0.5 / (1.0 - sigmoid(4.0f64))).powi(2), max_relative = 1e-12);
    assert!(ratio > 100.0);
}

#[test]
fn single_pixel_value() {
    // (1 - 1/(1+e^-1))^2 · 1^2
    let s = 1.0 / (1.0 + (-1.0f64).exp());
    let (l, _) = hef_loss(&plane(1, 1, vec![1.0]), &plane(1, 1, vec![0.0]), &HefConfig::default()).unwrap();
    assert_relative_eq!(l, (1.0 - s).powi(2), max_relative = 1e-12);
}

#[test]
fn uniform_logits_cost_log_k() {
    let (l, _) = cls_loss(&[0.3; 15], 7).unwrap();
    assert_relative_eq!(l, 15f64.ln(), epsilon = 1e-12);
}

#[test]
fn invalid_loss_inputs() {
    let p = plane(1, 2, vec![0.0, 1.0]);
    assert!(hef_loss(&p, &plane(1, 2, vec![0.0, -1.0]), &HefConfig::default()).is_err());
    assert!(hef_loss(&p, &plane(2, 1, vec![0.0, 1.0]), &HefConfig::default()).is_err());
    assert!(hef_loss(&plane(1, 2, vec![f64::NAN, 0.0]), &p, &HefConfig::default()).is_err());
    assert!(HefConfig::new(-1.0).is_err());
    assert!(cls_loss(&[0.0, 1.0], 2).is_err());
}
