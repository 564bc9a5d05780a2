//! Count-error metrics and localized easy/hard head diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundtruth::{downsample_density, encode_density, AnnotationSet, DensityMap, HeadKind, OUTPUT_STRIDE};
use crate::model::{forward, ModelParams};
use crate::numerics::Tensor4;
use crate::scalar::Scalar;
use crate::trainer::fit_to_stride;

/// Side of the square window around a head, in input pixels.
pub const LOCAL_WINDOW: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadScore {
    pub kind: HeadKind,
    pub gt_local: f64,
    pub est_local: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub gt_count: f64,
    pub est_count: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub heads: Vec<HeadScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    pub heads: usize,
    pub mean_gt_local: f64,
    pub mean_est_local: f64,
    pub mean_abs_err: f64,
    /// Mean of `max(0, gt_local - est_local)`.
    pub mean_underestimation: f64,
}

impl SubsetStats {
    fn from_scores<'a>(scores: impl Iterator<Item = &'a HeadScore>) -> Option<Self> {
        let (mut n, mut gt, mut est, mut abs, mut under) = (0usize, 0.0, 0.0, 0.0, 0.0);
        for s in scores {
            n += 1;
            gt += s.gt_local;
            est += s.est_local;
            abs += (s.gt_local - s.est_local).abs();
            under += (s.gt_local - s.est_local).max(0.0);
        }
        (n > 0).then(|| {
            let k = n as f64;
            SubsetStats {
                heads: n,
                mean_gt_local: gt / k,
                mean_est_local: est / k,
                mean_abs_err: abs / k,
                mean_underestimation: under / k,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: Vec<ImageEval>,
    pub mae: f64,
    /// Root of the mean squared count error.
    pub mse: f64,
    pub easy: Option<SubsetStats>,
    pub hard: Option<SubsetStats>,
}

impl EvalReport {
    pub fn from_counts(gt: &[f64], est: &[f64]) -> Result<Self> {
        let images = gt
            .iter()
            .zip(est)
            .map(|(&g, &e)| ImageEval {
                gt_count: g,
                est_count: e,
                heads: Vec::new(),
            })
            .collect();
        if gt.len() != est.len() {
            return Err(Error::invalid(format!("{} ground-truth counts for {} estimates", gt.len(), est.len())));
        }
        Self::from_images(images)
    }

    pub fn from_images(images: Vec<ImageEval>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::invalid("cannot evaluate an empty dataset"));
        }
        let e = images.len() as f64;
        let mae = images.iter().map(|i| (i.gt_count - i.est_count).abs()).sum::<f64>() / e;
        let mse = (images.iter().map(|i| (i.gt_count - i.est_count).powi(2)).sum::<f64>() / e).sqrt();
        let heads = || images.iter().flat_map(|i| i.heads.iter());
        let easy = SubsetStats::from_scores(heads().filter(|h| h.kind == HeadKind::Easy));
        let hard = SubsetStats::from_scores(heads().filter(|h| h.kind == HeadKind::Hard));
        Ok(Self {
            images,
            mae,
            mse,
            easy,
            hard,
        })
    }

    /// Mean shortfall of estimated mass around hard heads.
    pub fn hard_underestimation(&self) -> Option<f64> {
        self.hard.map(|h| h.mean_underestimation)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Stride-8 cells overlapped by the window centred on `c`, as a half-open range.
fn window_cells(c: f64, cells: usize) -> (usize, usize) {
    let half = (LOCAL_WINDOW / 2) as f64;
    let centre = c.round();
    let lo = ((centre - half).max(0.0) as usize) / OUTPUT_STRIDE;
    let hi = (((centre + half).max(0.0) as usize) / OUTPUT_STRIDE + 1).min(cells);
    (lo.min(cells), hi)
}

fn window_sum(d: &DensityMap<f64>, x: (usize, usize), y: (usize, usize)) -> f64 {
    let mut s = 0.0;
    for r in y.0..y.1 {
        for c in x.0..x.1 {
            s += d.at(r, c);
        }
    }
    s
}

/// Scores one image from an estimated stride-8 density and its annotations.
pub fn score_image(est: &DensityMap<f64>, ann: &AnnotationSet, sigma: f64) -> Result<ImageEval> {
    let gt = downsample_density(&encode_density::<f64>(ann, sigma)?, OUTPUT_STRIDE)?;
    if (gt.height, gt.width) != (est.height, est.width) {
        return Err(Error::shape(format!(
            "estimated density is {}x{}, ground truth at stride {OUTPUT_STRIDE} is {}x{}",
            est.width, est.height, gt.width, gt.height
        )));
    }
    let mut heads = Vec::new();
    for (i, p) in ann.points.iter().enumerate() {
        if let Some(kind) = ann.kind_of(i) {
            let (xr, yr) = (window_cells(p.x, gt.width), window_cells(p.y, gt.height));
            heads.push(HeadScore {
                kind,
                gt_local: window_sum(&gt, xr, yr),
                est_local: window_sum(est, xr, yr),
            });
        }
    }
    Ok(ImageEval {
        gt_count: ann.len() as f64,
        est_count: est.sum(),
        heads,
    })
}

/// Scores precomputed stride-8 density estimates.
pub fn evaluate_densities(preds: &[DensityMap<f64>], anns: &[AnnotationSet], sigma: f64) -> Result<EvalReport> {
    if preds.len() != anns.len() {
        return Err(Error::invalid(format!("{} predictions for {} images", preds.len(), anns.len())));
    }
    let images = preds
        .iter()
        .zip(anns)
        .map(|(p, a)| score_image(p, a, sigma))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_images(images)
}

/// Runs the model on every image and scores counts and local head mass.
/// Images are first trimmed to multiples of the output stride.
pub fn evaluate<T: Scalar>(
    params: &ModelParams<T>,
    dataset: &[(Tensor4<T>, AnnotationSet)],
    sigma: f64,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty dataset"));
    }
    let mut preds = Vec::with_capacity(dataset.len());
    let mut anns = Vec::with_capacity(dataset.len());
    for (img, ann) in dataset {
        let (img, ann) = fit_to_stride(img, ann)?;
        let out = forward(params, &img)?;
        let d = DensityMap::from_tensor(&out.density.cast::<f64>(), OUTPUT_STRIDE);
        preds.push(d);
        anns.push(ann);
    }
    evaluate_densities(&preds, &anns, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::Point;

    #[test]
    fn hand_case() {
        let r = EvalReport::from_counts(&[12.0, 16.0], &[10.0, 20.0]).unwrap();
        assert!((r.mae - 3.0).abs() < 1e-15);
        assert!((r.mse - 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_image_and_perfect_predictions() {
        let r = EvalReport::from_counts(&[7.0], &[4.5]).unwrap();
        assert_eq!(r.mae, r.mse);
        let r = EvalReport::from_counts(&[3.0, 9.0], &[3.0, 9.0]).unwrap();
        assert_eq!((r.mae, r.mse), (0.0, 0.0));
        assert!(EvalReport::from_counts(&[], &[]).is_err());
        assert!(EvalReport::from_counts(&[1.0], &[]).is_err());
    }

    #[test]
    fn window_projection() {
        assert_eq!(window_cells(0.0, 8), (0, 1));
        assert_eq!(window_cells(12.0, 8), (0, 3));
        assert_eq!(window_cells(20.4, 8), (1, 4));
        assert_eq!(window_cells(63.0, 8), (7, 8));
    }

    #[test]
    fn ground_truth_as_prediction_scores_zero() {
        let pts = vec![Point { x: 10.0, y: 10.0 }, Point { x: 40.0, y: 50.0 }];
        let ann = AnnotationSet::new(64, 64, pts)
            .unwrap()
            .with_kinds(vec![HeadKind::Easy, HeadKind::Hard])
            .unwrap();
        let gt = downsample_density(&encode_density::<f64>(&ann, 4.0).unwrap(), 8).unwrap();
        let r = evaluate_densities(&[gt.clone()], &[ann.clone()], 4.0).unwrap();
        assert!(r.mae < 1e-12);
        assert_eq!(r.hard_underestimation(), Some(0.0));
        assert!(r.easy.unwrap().mean_gt_local > 0.5);

        let zero = DensityMap::zeros(8, 8, 8);
        let r = evaluate_densities(&[zero], &[ann], 4.0).unwrap();
        let hard = r.hard.unwrap();
        assert_eq!(hard.mean_underestimation, hard.mean_gt_local);
    }
}
