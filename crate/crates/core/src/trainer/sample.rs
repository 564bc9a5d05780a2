use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::groundtruth::{make_bundle, AnnotationSet, ClassLabelSpec, GroundTruthBundle, OUTPUT_STRIDE};
use crate::numerics::Tensor4;
use crate::scalar::Scalar;
use crate::trainer::config::TrainConfig;

/// One training example: an image patch and the targets regenerated for it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T> {
    pub image: Tensor4<T>,
    pub gt: GroundTruthBundle<T>,
    /// Top-left corner `(x, y)` of the patch in the source image.
    pub origin: (usize, usize),
}

/// Copies the `h`×`w` window at (`y0`, `x0`) out of a single-plane image.
pub fn crop_image<T: Scalar>(image: &Tensor4<T>, x0: usize, y0: usize, w: usize, h: usize) -> Result<Tensor4<T>> {
    let [n, c, ih, iw] = image.dims();
    if n != 1 || c != 1 {
        return Err(Error::shape(format!("expected a 1x1xHxW image, got {:?}", image.dims())));
    }
    if x0 + w > iw || y0 + h > ih {
        return Err(Error::shape(format!("crop {w}x{h} at ({x0}, {y0}) exceeds {iw}x{ih}")));
    }
    Ok(Tensor4::from_fn([1, 1, h, w], |[_, _, y, x]| image.at(0, 0, y0 + y, x0 + x)))
}

/// Trims the bottom and right edges so both sides are multiples of the output stride.
pub fn fit_to_stride<T: Scalar>(image: &Tensor4<T>, ann: &AnnotationSet) -> Result<(Tensor4<T>, AnnotationSet)> {
    let h = image.height() / OUTPUT_STRIDE * OUTPUT_STRIDE;
    let w = image.width() / OUTPUT_STRIDE * OUTPUT_STRIDE;
    if h == 0 || w == 0 {
        return Err(Error::Data(format!(
            "image {}x{} is smaller than the output stride",
            image.width(),
            image.height()
        )));
    }
    if (h, w) == (image.height(), image.width()) {
        return Ok((image.clone(), ann.clone()));
    }
    Ok((crop_image(image, 0, 0, w, h)?, ann.crop(0, 0, w, h)))
}

fn patch_side(len: usize, area_frac: f64) -> usize {
    ((len as f64 * area_frac.sqrt()).floor() as usize) / OUTPUT_STRIDE * OUTPUT_STRIDE
}

/// Random crops at each configured scale, with ground truth rebuilt from the
/// points that fall inside each patch.
pub fn crop_patches<T: Scalar, R: Rng + ?Sized>(
    image: &Tensor4<T>,
    ann: &AnnotationSet,
    cfg: &TrainConfig,
    spec: &ClassLabelSpec,
    rng: &mut R,
) -> Result<Vec<TrainSample<T>>> {
    let (h, w) = (image.height(), image.width());
    if (ann.width, ann.height) != (w, h) {
        return Err(Error::Data(format!(
            "annotations are for {}x{} but the image is {w}x{h}",
            ann.width, ann.height
        )));
    }
    let mut out = Vec::with_capacity(cfg.pool_size());
    for (&frac, &count) in cfg.patch_fracs.iter().zip(&cfg.patch_counts) {
        let (ph, pw) = (patch_side(h, frac), patch_side(w, frac));
        if ph == 0 || pw == 0 {
            return Err(Error::Data(format!(
                "image {w}x{h} is too small for patches of area fraction {frac}"
            )));
        }
        for _ in 0..count {
            let y0 = rng.random_range(0..=h - ph);
            let x0 = rng.random_range(0..=w - pw);
            let patch_ann = ann.crop(x0, y0, pw, ph);
            out.push(TrainSample {
                image: crop_image(image, x0, y0, pw, ph)?,
                gt: make_bundle(&patch_ann, cfg.sigma, spec)?,
                origin: (x0, y0),
            });
        }
    }
    Ok(out)
}

/// Applies augmentation with explicit coin outcomes.
pub fn augment_with<T: Scalar, R: Rng + ?Sized>(
    sample: &TrainSample<T>,
    flip: bool,
    noise: bool,
    noise_std: f64,
    rng: &mut R,
) -> TrainSample<T> {
    let mut out = if flip {
        TrainSample {
            image: sample.image.flip_horizontal(),
            gt: sample.gt.flip_horizontal(),
            origin: sample.origin,
        }
    } else {
        sample.clone()
    };
    if noise && noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("std is positive");
        for v in out.image.as_mut_slice() {
            let noisy = v.to_f64_lossy() + normal.sample(rng);
            *v = T::of(noisy.clamp(0.0, 1.0));
        }
    }
    out
}

/// Random horizontal flip of image and targets, then random pixel noise on the image.
pub fn augment<T: Scalar, R: Rng + ?Sized>(sample: &TrainSample<T>, cfg: &TrainConfig, rng: &mut R) -> TrainSample<T> {
    let flip = rng.random::<f64>() < cfg.flip_prob;
    let noise = rng.random::<f64>() < cfg.noise_prob;
    augment_with(sample, flip, noise, cfg.noise_std, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{compute_thr, Point};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene(size: usize) -> (Tensor4<f64>, AnnotationSet) {
        let pts = (0..20)
            .map(|i| Point {
                x: ((i * 13) % size) as f64 + 0.5,
                y: ((i * 29 + 7) % size) as f64 + 0.25,
            })
            .collect();
        let img = Tensor4::from_fn([1, 1, size, size], |[_, _, y, x]| ((x * 7 + y * 3) % 10) as f64 / 10.0);
        (img, AnnotationSet::new(size, size, pts).unwrap())
    }

    #[test]
    fn fourteen_patches_with_expected_sides() {
        let (img, ann) = scene(64);
        let spec = compute_thr(&[20.0], 15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let patches = crop_patches(&img, &ann, &TrainConfig::default(), &spec, &mut rng).unwrap();
        assert_eq!(patches.len(), 14);
        let sides: Vec<usize> = patches.iter().map(|p| p.image.width()).collect();
        assert_eq!(&sides[..9], &[16; 9]);
        assert_eq!(&sides[9..13], &[32; 4]);
        assert_eq!(sides[13], 64);
        assert_eq!(patches[13].gt.head_count, 20);
        assert_eq!(patches[13].image, img);
    }

    #[test]
    fn sides_round_down_to_stride() {
        assert_eq!(patch_side(100, 1.0 / 16.0), 24);
        assert_eq!(patch_side(100, 0.25), 48);
        assert_eq!(patch_side(100, 1.0), 96);
        assert_eq!(patch_side(31, 1.0 / 16.0), 0);
    }

    #[test]
    fn too_small_image_is_an_error() {
        let (img, ann) = scene(24);
        let spec = compute_thr(&[20.0], 15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(crop_patches(&img, &ann, &TrainConfig::default(), &spec, &mut rng).is_err());
    }

    #[test]
    fn fit_to_stride_trims_edges() {
        let img = Tensor4::<f64>::zeros([1, 1, 21, 35]);
        let ann = AnnotationSet::new(35, 21, vec![Point { x: 2.0, y: 2.0 }, Point { x: 33.0, y: 3.0 }]).unwrap();
        let (i2, a2) = fit_to_stride(&img, &ann).unwrap();
        assert_eq!(i2.dims(), [1, 1, 16, 32]);
        assert_eq!(a2.len(), 1);
    }

    #[test]
    fn flip_twice_is_identity_and_noise_spares_targets() {
        let (img, ann) = scene(64);
        let spec = compute_thr(&[20.0], 15).unwrap();
        let s = TrainSample {
            image: img,
            gt: make_bundle(&ann, 4.0, &spec).unwrap(),
            origin: (0, 0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let once = augment_with(&s, true, false, 0.01, &mut rng);
        // Same multiset of values, so the sum only moves by summation order.
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        assert_eq!(sorted(&once.gt.density.values), sorted(&s.gt.density.values));
        assert!((once.gt.density.sum() - s.gt.density.sum()).abs() < 1e-12);
        assert_eq!(augment_with(&once, true, false, 0.01, &mut rng), s);

        let noisy = augment_with(&s, false, true, 0.01, &mut rng);
        assert_ne!(noisy.image, s.image);
        assert_eq!(noisy.gt, s.gt);
        assert!(noisy.image.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
