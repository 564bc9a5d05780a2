//! Dilated 2-d convolution with "same" zero padding.
//!
//! Each kernel tap contributes a shifted copy of an input row to an output
//! row, so both passes are written as row-wise axpy/dot loops over the
//! overlapping column range of that tap.

use crate::error::{Error, Result};
use crate::numerics::cache::{check_grad_dims, OpCache, OpKind, Record};
use crate::numerics::tensor::Tensor4;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weights: Tensor4<T>,
    pub bias: Vec<T>,
}

/// Column range `[lo, hi)` of output pixels whose tap at offset `off` lands inside a row of `len`.
/// Empty (`lo == hi`) when the tap falls outside for every pixel.
#[inline]
fn overlap(len: usize, off: isize) -> (usize, usize) {
    let lo = ((-off).max(0) as usize).min(len);
    let hi = (len as isize - off).clamp(0, len as isize) as usize;
    (lo, hi.max(lo))
}

fn validate<T: Scalar>(input: &Tensor4<T>, weights: &Tensor4<T>, bias: &[T], dilation: usize) -> Result<()> {
    let [_, in_ch, _, _] = input.dims();
    let [out_ch, w_in, kh, kw] = weights.dims();
    if w_in != in_ch {
        return Err(Error::shape(format!(
            "conv2d input {:?} vs weights {:?}: channel mismatch",
            input.dims(),
            weights.dims()
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::shape(format!(
            "conv2d kernel must have odd extent, weights {:?}",
            weights.dims()
        )));
    }
    if bias.len() != out_ch {
        return Err(Error::shape(format!(
            "conv2d bias length {} vs weights {:?}",
            bias.len(),
            weights.dims()
        )));
    }
    if dilation == 0 {
        return Err(Error::invalid("conv2d dilation must be positive"));
    }
    Ok(())
}

pub fn conv2d<T: Scalar>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    bias: &[T],
    dilation: usize,
) -> Result<(Tensor4<T>, OpCache<T>)> {
    validate(input, weights, bias, dilation)?;
    let [n, in_ch, h, w] = input.dims();
    let [out_ch, _, kh, kw] = weights.dims();
    let pad_y = ((kh - 1) * dilation / 2) as isize;
    let pad_x = ((kw - 1) * dilation / 2) as isize;

    let mut out = Tensor4::zeros([n, out_ch, h, w]);
    for b in 0..n {
        for co in 0..out_ch {
            let plane = out.plane_mut(b, co);
            plane.fill(bias[co]);
            for ci in 0..in_ch {
                let src = input.plane(b, ci);
                for ky in 0..kh {
                    let dy = (ky * dilation) as isize - pad_y;
                    let (y_lo, y_hi) = overlap(h, dy);
                    for kx in 0..kw {
                        let wv = weights.at(co, ci, ky, kx);
                        if wv == T::zero() {
                            continue;
                        }
                        let dx = (kx * dilation) as isize - pad_x;
                        let (x_lo, x_hi) = overlap(w, dx);
                        if x_lo == x_hi {
                            continue;
                        }
                        for y in y_lo..y_hi {
                            let iy = (y as isize + dy) as usize;
                            let dst = &mut plane[y * w + x_lo..y * w + x_hi];
                            let s0 = (iy * w) as isize + x_lo as isize + dx;
                            let s = &src[s0 as usize..s0 as usize + (x_hi - x_lo)];
                            for (d, &v) in dst.iter_mut().zip(s) {
                                *d = *d + wv * v;
                            }
                        }
                    }
                }
            }
        }
    }

    let cache = OpCache::new(Record::Conv2d {
        input: input.clone(),
        weights: weights.clone(),
        dilation,
    });
    Ok((out, cache))
}

pub fn conv2d_backward<T: Scalar>(cache: &OpCache<T>, grad_out: &Tensor4<T>) -> Result<ConvGrads<T>> {
    let Record::Conv2d {
        input,
        weights,
        dilation,
    } = cache.expect(OpKind::Conv2d)?
    else {
        unreachable!()
    };
    let dilation = *dilation;
    let [n, in_ch, h, w] = input.dims();
    let [out_ch, _, kh, kw] = weights.dims();
    check_grad_dims([n, out_ch, h, w], grad_out.dims(), OpKind::Conv2d)?;
    let pad_y = ((kh - 1) * dilation / 2) as isize;
    let pad_x = ((kw - 1) * dilation / 2) as isize;

    let mut grad_in = Tensor4::zeros(input.dims());
    let mut grad_w = Tensor4::zeros(weights.dims());
    let mut grad_b = vec![T::zero(); out_ch];

    for b in 0..n {
        for co in 0..out_ch {
            let g = grad_out.plane(b, co);
            grad_b[co] = g.iter().fold(grad_b[co], |acc, &v| acc + v);
            for ci in 0..in_ch {
                let src = input.plane(b, ci);
                for ky in 0..kh {
                    let dy = (ky * dilation) as isize - pad_y;
                    let (y_lo, y_hi) = overlap(h, dy);
                    for kx in 0..kw {
                        let dx = (kx * dilation) as isize - pad_x;
                        let (x_lo, x_hi) = overlap(w, dx);
                        if x_lo == x_hi {
                            continue;
                        }
                        let mut acc = T::zero();
                        for y in y_lo..y_hi {
                            let iy = (y as isize + dy) as usize;
                            let gs = &g[y * w + x_lo..y * w + x_hi];
                            let s0 = ((iy * w) as isize + x_lo as isize + dx) as usize;
                            let s = &src[s0..s0 + (x_hi - x_lo)];
                            for (&gv, &sv) in gs.iter().zip(s) {
                                acc = acc + gv * sv;
                            }
                        }
                        let o = grad_w.offset(co, ci, ky, kx);
                        grad_w.as_mut_slice()[o] = grad_w.as_slice()[o] + acc;
                    }
                }
            }
        }

        for ci in 0..in_ch {
            let dst_plane_start = grad_in.offset(b, ci, 0, 0);
            for co in 0..out_ch {
                let g = grad_out.plane(b, co);
                for ky in 0..kh {
                    let dy = (ky * dilation) as isize - pad_y;
                    let (y_lo, y_hi) = overlap(h, dy);
                    for kx in 0..kw {
                        let wv = weights.at(co, ci, ky, kx);
                        if wv == T::zero() {
                            continue;
                        }
                        let dx = (kx * dilation) as isize - pad_x;
                        let (x_lo, x_hi) = overlap(w, dx);
                        if x_lo == x_hi {
                            continue;
                        }
                        for y in y_lo..y_hi {
                            let iy = (y as isize + dy) as usize;
                            let gs = &g[y * w + x_lo..y * w + x_hi];
                            let d0 = dst_plane_start + ((iy * w) as isize + x_lo as isize + dx) as usize;
                            let dst = &mut grad_in.as_mut_slice()[d0..d0 + (x_hi - x_lo)];
                            for (d, &gv) in dst.iter_mut().zip(gs) {
                                *d = *d + wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::finite_diff_check;
    use crate::numerics::testutil::{random_tensor, rng, weighted_sum};

    /// Direct evaluation of the convolution sum with explicit bounds checks.
    fn conv_oracle(input: &Tensor4<f64>, weights: &Tensor4<f64>, bias: &[f64], d: usize) -> Tensor4<f64> {
        let [n, in_ch, h, w] = input.dims();
        let [out_ch, _, kh, kw] = weights.dims();
        let (ry, rx) = ((kh / 2 * d) as i64, (kw / 2 * d) as i64);
        Tensor4::from_fn([n, out_ch, h, w], |[b, co, y, x]| {
            let mut s = bias[co];
            for ci in 0..in_ch {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = y as i64 + (ky * d) as i64 - ry;
                        let ix = x as i64 + (kx * d) as i64 - rx;
                        if iy >= 0 && ix >= 0 && iy < h as i64 && ix < w as i64 {
                            s += weights.at(co, ci, ky, kx) * input.at(b, ci, iy as usize, ix as usize);
                        }
                    }
                }
            }
            s
        })
    }

    #[test]
    fn scalar_kernel_scales_input() {
        let input = Tensor4::filled([1, 1, 3, 3], 1.0);
        let weights = Tensor4::filled([1, 1, 1, 1], 2.0);
        let (out, _) = conv2d(&input, &weights, &[0.0], 1).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn single_pixel_sees_only_center_tap() {
        let input = Tensor4::filled([1, 1, 1, 1], 5.0);
        let weights = Tensor4::filled([1, 1, 3, 3], 1.0);
        let (out, _) = conv2d(&input, &weights, &[1.0], 1).unwrap();
        assert_eq!(out.as_slice(), &[6.0]);
    }

    #[test]
    fn dilated_matches_nested_loop_oracle() {
        let mut r = rng(7);
        let input = random_tensor(&mut r, [1, 2, 5, 5]);
        let weights = random_tensor(&mut r, [3, 2, 3, 3]);
        let bias = vec![0.1, -0.2, 0.3];
        let (out, _) = conv2d(&input, &weights, &bias, 2).unwrap();
        let expected = conv_oracle(&input, &weights, &bias, 2);
        assert!(out.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn rectangular_and_wide_dilation_match_oracle() {
        let mut r = rng(8);
        let input = random_tensor(&mut r, [2, 3, 6, 9]);
        let weights = random_tensor(&mut r, [2, 3, 3, 5]);
        let bias = vec![0.5, -0.5];
        for d in 1..=4 {
            let (out, _) = conv2d(&input, &weights, &bias, d).unwrap();
            assert!(out.max_abs_diff(&conv_oracle(&input, &weights, &bias, d)).unwrap() < 1e-12);
        }
    }

    #[test]
    fn kernel_reaching_past_small_input() {
        let mut r = rng(9);
        let input = random_tensor(&mut r, [1, 2, 2, 3]);
        let weights = random_tensor(&mut r, [1, 2, 7, 7]);
        let (out, cache) = conv2d(&input, &weights, &[0.25], 2).unwrap();
        assert!(out.max_abs_diff(&conv_oracle(&input, &weights, &[0.25], 2)).unwrap() < 1e-12);
        let probe = random_tensor(&mut r, out.dims());
        let g = conv2d_backward(&cache, &probe).unwrap();
        let f = |x: &[f64]| {
            let wt = Tensor4::from_vec(weights.dims(), x.to_vec()).unwrap();
            weighted_sum(&conv2d(&input, &wt, &[0.25], 2).unwrap().0, &probe)
        };
        let rep = finite_diff_check(f, weights.as_slice(), g.weights.as_slice(), 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6, "{rep:?}");
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let input = Tensor4::<f64>::zeros([1, 2, 4, 4]);
        let weights = Tensor4::zeros([1, 3, 3, 3]);
        let msg = conv2d(&input, &weights, &[0.0], 1).unwrap_err().to_string();
        assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
        let even = Tensor4::zeros([1, 2, 2, 2]);
        assert!(conv2d(&input, &even, &[0.0], 1).is_err());
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut r = rng(1);
        let input = random_tensor(&mut r, [1, 2, 4, 4]);
        let weights = random_tensor(&mut r, [2, 2, 3, 3]);
        let (out, cache) = conv2d(&input, &weights, &[0.0, 0.0], 1).unwrap();
        let g = conv2d_backward(&cache, &Tensor4::zeros(out.dims())).unwrap();
        assert!(g.input.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.weights.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_kernel_weight_grad_is_inner_product() {
        let mut r = rng(2);
        let input = random_tensor(&mut r, [1, 1, 4, 5]);
        let weights = Tensor4::filled([1, 1, 1, 1], 0.7);
        let (out, cache) = conv2d(&input, &weights, &[0.0], 1).unwrap();
        let g_out = random_tensor(&mut r, out.dims());
        let g = conv2d_backward(&cache, &g_out).unwrap();
        let expected: f64 = input.as_slice().iter().zip(g_out.as_slice()).map(|(a, b)| a * b).sum();
        assert!((g.weights.as_slice()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..3 {
            let mut r = rng(seed);
            let input = random_tensor(&mut r, [1, 2, 5, 6]);
            let weights = random_tensor(&mut r, [3, 2, 3, 3]);
            let bias = vec![0.2, 0.0, -0.1];
            let (out, cache) = conv2d(&input, &weights, &bias, 2).unwrap();
            let probe = random_tensor(&mut r, out.dims());
            let g = conv2d_backward(&cache, &probe).unwrap();

            let f_in = |x: &[f64]| {
                let t = Tensor4::from_vec(input.dims(), x.to_vec()).unwrap();
                weighted_sum(&conv2d(&t, &weights, &bias, 2).unwrap().0, &probe)
            };
            let rep = finite_diff_check(f_in, input.as_slice(), g.input.as_slice(), 1e-5).unwrap();
            assert!(rep.max_rel_err < 1e-6, "{rep:?}");

            let f_w = |x: &[f64]| {
                let wt = Tensor4::from_vec(weights.dims(), x.to_vec()).unwrap();
                weighted_sum(&conv2d(&input, &wt, &bias, 2).unwrap().0, &probe)
            };
            let rep = finite_diff_check(f_w, weights.as_slice(), g.weights.as_slice(), 1e-5).unwrap();
            assert!(rep.max_rel_err < 1e-6, "{rep:?}");

            let f_b = |x: &[f64]| weighted_sum(&conv2d(&input, &weights, x, 2).unwrap().0, &probe);
            let rep = finite_diff_check(f_b, &bias, &g.bias, 1e-5).unwrap();
            assert!(rep.max_rel_err < 1e-6, "{rep:?}");
        }
    }

    #[test]
    fn backward_rejects_foreign_cache_and_wrong_grad_shape() {
        let input = Tensor4::<f64>::zeros([1, 1, 4, 4]);
        let (_, pool_cache) = crate::numerics::pool::maxpool2d(&input).unwrap();
        let err = conv2d_backward(&pool_cache, &input).unwrap_err();
        assert!(matches!(err, Error::CacheMismatch { .. }));

        let (_, cache) = conv2d(&input, &Tensor4::filled([1, 1, 3, 3], 1.0), &[0.0], 1).unwrap();
        assert!(conv2d_backward(&cache, &Tensor4::zeros([1, 1, 2, 2])).is_err());
    }
}
