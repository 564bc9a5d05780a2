use crate::error::{Error, Result};
use crate::groundtruth::annotation::AnnotationSet;
use crate::numerics::Tensor4;
use crate::scalar::Scalar;

/// Truncation radius in units of the kernel's standard deviation.
pub const TRUNCATION_SIGMAS: f64 = 4.0;

/// Non-negative density grid whose sum is the head count.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap<T> {
    pub height: usize,
    pub width: usize,
    /// Downsampling factor relative to the image.
    pub stride: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> DensityMap<T> {
    pub fn zeros(height: usize, width: usize, stride: usize) -> Self {
        Self {
            height,
            width,
            stride,
            values: vec![T::zero(); height * width],
        }
    }

    pub fn sum(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a + v)
    }

    pub fn at(&self, y: usize, x: usize) -> T {
        self.values[y * self.width + x]
    }

    pub fn to_tensor(&self) -> Tensor4<T> {
        Tensor4::from_vec([1, 1, self.height, self.width], self.values.clone()).expect("dims match")
    }

    /// Takes channel 0 of batch item 0.
    pub fn from_tensor(t: &Tensor4<T>, stride: usize) -> Self {
        Self {
            height: t.height(),
            width: t.width(),
            stride,
            values: t.plane(0, 0).to_vec(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut values = self.values.clone();
        for row in values.chunks_mut(self.width.max(1)) {
            row.reverse();
        }
        Self { values, ..*self }
    }
}

/// Gaussian weights along one axis, centred at `c` and truncated to the image.
fn axis_weights(c: f64, sigma: f64, radius: i64, len: usize) -> (usize, Vec<f64>) {
    let centre = c.round() as i64;
    let lo = (centre - radius).max(0);
    let hi = (centre + radius).min(len as i64 - 1);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let w = (lo..=hi)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d * inv).exp()
        })
        .collect();
    (lo as usize, w)
}

/// Sum of per-head Gaussians (std `sigma` pixels), each renormalized over the
/// part of its truncated footprint that lies inside the image so it contributes
/// exactly one unit of mass.
pub fn encode_density<T: Scalar>(ann: &AnnotationSet, sigma: f64) -> Result<DensityMap<T>> {
    if ann.width == 0 || ann.height == 0 {
        return Err(Error::invalid("encode_density on an empty image"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (TRUNCATION_SIGMAS * sigma).ceil() as i64;
    let (h, w) = (ann.height, ann.width);
    let mut acc = vec![0.0f64; h * w];
    for p in &ann.points {
        let (x0, wx) = axis_weights(p.x, sigma, radius, w);
        let (y0, wy) = axis_weights(p.y, sigma, radius, h);
        let norm = wx.iter().sum::<f64>() * wy.iter().sum::<f64>();
        for (j, &gy) in wy.iter().enumerate() {
            let row = &mut acc[(y0 + j) * w + x0..(y0 + j) * w + x0 + wx.len()];
            for (d, &gx) in row.iter_mut().zip(&wx) {
                *d += gy * gx / norm;
            }
        }
    }
    Ok(DensityMap {
        height: h,
        width: w,
        stride: 1,
        values: acc.into_iter().map(T::of).collect(),
    })
}

/// Sum-pools `factor`×`factor` blocks, zero-padding the bottom/right edges.
pub fn downsample_density<T: Scalar>(d: &DensityMap<T>, factor: usize) -> Result<DensityMap<T>> {
    if factor == 0 {
        return Err(Error::invalid("downsample factor must be positive"));
    }
    let (oh, ow) = (d.height.div_ceil(factor), d.width.div_ceil(factor));
    let mut out = DensityMap::zeros(oh, ow, d.stride * factor);
    for y in 0..d.height {
        let orow = (y / factor) * ow;
        for x in 0..d.width {
            let o = orow + x / factor;
            out.values[o] = out.values[o] + d.values[y * d.width + x];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::annotation::Point;

    fn one_head(x: f64, y: f64, size: usize) -> AnnotationSet {
        AnnotationSet::new(size, size, vec![Point { x, y }]).unwrap()
    }

    #[test]
    fn empty_annotations_give_zero_map() {
        let d: DensityMap<f64> = encode_density(&AnnotationSet::empty(16, 12), 4.0).unwrap();
        assert_eq!((d.height, d.width, d.stride), (12, 16, 1));
        assert_eq!(d.sum(), 0.0);
    }

    #[test]
    fn centred_head_integrates_to_one_and_peaks_at_head() {
        let d: DensityMap<f64> = encode_density(&one_head(32.0, 32.0, 64), 4.0).unwrap();
        assert!((d.sum() - 1.0).abs() < 1e-9);
        let max = d.values.iter().cloned().fold(0.0, f64::max);
        assert_eq!(d.at(32, 32), max);
    }

    #[test]
    fn corner_head_is_renormalized() {
        let d: DensityMap<f64> = encode_density(&one_head(0.0, 0.0, 64), 4.0).unwrap();
        // Direct summation over all pixels.
        let mut s = 0.0;
        for y in 0..64 {
            for x in 0..64 {
                s += d.at(y, x);
            }
        }
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_inputs() {
        assert!(encode_density::<f64>(&AnnotationSet::empty(0, 4), 4.0).is_err());
        assert!(encode_density::<f64>(&AnnotationSet::empty(4, 4), 0.0).is_err());
        assert!(downsample_density(&DensityMap::<f64>::zeros(4, 4, 1), 0).is_err());
    }

    #[test]
    fn uniform_map_downsamples_to_block_sums() {
        let d = DensityMap {
            height: 16,
            width: 24,
            stride: 1,
            values: vec![0.125; 16 * 24],
        };
        let s = downsample_density(&d, 8).unwrap();
        assert_eq!((s.height, s.width, s.stride), (2, 3, 8));
        assert!(s.values.iter().all(|&v| v == 64.0 * 0.125));
    }

    #[test]
    fn downsample_matches_block_oracle_with_padding() {
        let (h, w) = (13, 10);
        let values: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 11) as f64 / 7.0).collect();
        let d = DensityMap { height: h, width: w, stride: 1, values };
        let s = downsample_density(&d, 4).unwrap();
        assert_eq!((s.height, s.width), (4, 3));
        for by in 0..4 {
            for bx in 0..3 {
                let mut acc = 0.0;
                for y in by * 4..((by + 1) * 4).min(h) {
                    for x in bx * 4..((bx + 1) * 4).min(w) {
                        acc += d.at(y, x);
                    }
                }
                assert!((s.at(by, bx) - acc).abs() < 1e-12);
            }
        }
        assert!((s.sum() - d.sum()).abs() < 1e-12);
    }

    #[test]
    fn interior_shift_shifts_the_map() {
        let a: DensityMap<f64> = encode_density(&one_head(20.25, 17.5, 64), 3.0).unwrap();
        let b: DensityMap<f64> = encode_density(&one_head(22.25, 19.5, 64), 3.0).unwrap();
        for y in 0..62 {
            for x in 0..62 {
                assert!((a.at(y, x) - b.at(y + 2, x + 2)).abs() < 1e-15);
            }
        }
    }
}
