use crate::error::{Error, Result};
use crate::numerics::cache::{check_grad_dims, OpCache, OpKind, Record};
use crate::numerics::tensor::Tensor4;
use crate::scalar::Scalar;

/// 2×2 max pooling with stride 2.
///
/// Odd heights or widths are padded on the bottom/right with the most negative
/// finite value, so the output is `ceil(H/2) × ceil(W/2)` and no pixel is dropped.
/// Ties resolve to the first window position in row-major order.
pub fn maxpool2d<T: Scalar>(input: &Tensor4<T>) -> Result<(Tensor4<T>, OpCache<T>)> {
    let [n, c, h, w] = input.dims();
    if h == 0 || w == 0 {
        return Err(Error::shape(format!("maxpool2d on empty spatial dims {:?}", input.dims())));
    }
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor4::zeros([n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let floor = T::min_value();
    for b in 0..n {
        for ch in 0..c {
            let base = input.offset(b, ch, 0, 0);
            let src = input.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = floor;
                    let mut best_idx = usize::MAX;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let (y, x) = (2 * oy + dy, 2 * ox + dx);
                        if y >= h || x >= w {
                            continue;
                        }
                        let v = src[y * w + x];
                        if best_idx == usize::MAX || v > best {
                            best = v;
                            best_idx = y * w + x;
                        }
                    }
                    dst[oy * ow + ox] = best;
                    argmax.push(base + best_idx);
                }
            }
        }
    }
    let cache = OpCache::new(Record::MaxPool2d {
        input_dims: input.dims(),
        output_dims: out.dims(),
        argmax,
    });
    Ok((out, cache))
}

pub fn maxpool2d_backward<T: Scalar>(cache: &OpCache<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let Record::MaxPool2d {
        input_dims,
        output_dims,
        argmax,
    } = cache.expect(OpKind::MaxPool2d)?
    else {
        unreachable!()
    };
    check_grad_dims(*output_dims, grad_out.dims(), OpKind::MaxPool2d)?;
    let mut grad_in = Tensor4::zeros(*input_dims);
    let g = grad_in.as_mut_slice();
    for (&idx, &v) in argmax.iter().zip(grad_out.as_slice()) {
        g[idx] = g[idx] + v;
    }
    Ok(grad_in)
}

/// Per-pixel max and mean across channels, stacked as a 2-channel map.
pub fn channel_pool<T: Scalar>(input: &Tensor4<T>) -> Result<(Tensor4<T>, OpCache<T>)> {
    let [n, c, h, w] = input.dims();
    if c == 0 {
        return Err(Error::shape(format!("channel_pool needs at least one channel, got {:?}", input.dims())));
    }
    let hw = h * w;
    let inv_c = T::one() / T::of_usize(c);
    let mut out = Tensor4::zeros([n, 2, h, w]);
    let mut argmax_channel = vec![0usize; n * hw];
    for b in 0..n {
        let mut max = input.plane(b, 0).to_vec();
        let mut sum = max.clone();
        let arg = &mut argmax_channel[b * hw..(b + 1) * hw];
        for ch in 1..c {
            for (i, &v) in input.plane(b, ch).iter().enumerate() {
                if v > max[i] {
                    max[i] = v;
                    arg[i] = ch;
                }
                sum[i] = sum[i] + v;
            }
        }
        out.plane_mut(b, 0).copy_from_slice(&max);
        for (d, s) in out.plane_mut(b, 1).iter_mut().zip(sum) {
            *d = s * inv_c;
        }
    }
    let cache = OpCache::new(Record::ChannelPool {
        input_dims: input.dims(),
        argmax_channel,
    });
    Ok((out, cache))
}

pub fn channel_pool_backward<T: Scalar>(cache: &OpCache<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let Record::ChannelPool {
        input_dims,
        argmax_channel,
    } = cache.expect(OpKind::ChannelPool)?
    else {
        unreachable!()
    };
    let [n, c, h, w] = *input_dims;
    check_grad_dims([n, 2, h, w], grad_out.dims(), OpKind::ChannelPool)?;
    let hw = h * w;
    let inv_c = T::one() / T::of_usize(c);
    let mut grad_in = Tensor4::zeros(*input_dims);
    for b in 0..n {
        let g_mean = grad_out.plane(b, 1);
        for ch in 0..c {
            for (d, &g) in grad_in.plane_mut(b, ch).iter_mut().zip(g_mean) {
                *d = g * inv_c;
            }
        }
        let g_max = grad_out.plane(b, 0);
        for i in 0..hw {
            let ch = argmax_channel[b * hw + i];
            let o = grad_in.offset(b, ch, 0, 0) + i;
            let s = grad_in.as_mut_slice();
            s[o] = s[o] + g_max[i];
        }
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::finite_diff_check;
    use crate::numerics::testutil::{random_tensor, rng, weighted_sum};

    #[test]
    fn pools_two_by_two_and_routes_to_argmax() {
        let input = Tensor4::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, cache) = maxpool2d(&input).unwrap();
        assert_eq!(out.as_slice(), &[4.0]);
        let g = maxpool2d_backward(&cache, &Tensor4::filled([1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ties_route_to_top_left() {
        let input = Tensor4::filled([1, 1, 4, 4], 3.0);
        let (out, cache) = maxpool2d(&input).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 3.0));
        let g = maxpool2d_backward(&cache, &Tensor4::filled(out.dims(), 1.0)).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let want = if y % 2 == 0 && x % 2 == 0 { 1.0 } else { 0.0 };
                assert_eq!(g.at(0, 0, y, x), want);
            }
        }
    }

    #[test]
    fn matches_window_oracle() {
        let mut r = rng(3);
        let input = random_tensor(&mut r, [1, 3, 8, 8]);
        let (out, _) = maxpool2d(&input).unwrap();
        let expected = Tensor4::from_fn([1, 3, 4, 4], |[b, c, y, x]| {
            let vals = [
                input.at(b, c, 2 * y, 2 * x),
                input.at(b, c, 2 * y, 2 * x + 1),
                input.at(b, c, 2 * y + 1, 2 * x),
                input.at(b, c, 2 * y + 1, 2 * x + 1),
            ];
            vals.into_iter().fold(f64::NEG_INFINITY, f64::max)
        });
        assert_eq!(out, expected);
    }

    #[test]
    fn odd_dims_keep_every_pixel() {
        let input = Tensor4::from_vec([1, 1, 3, 3], vec![-5.0, -4.0, -3.0, -2.0, -1.0, -6.0, -7.0, -8.0, -9.0]).unwrap();
        let (out, _) = maxpool2d(&input).unwrap();
        assert_eq!(out.dims(), [1, 1, 2, 2]);
        assert_eq!(out.as_slice(), &[-1.0, -3.0, -7.0, -9.0]);
    }

    #[test]
    fn empty_spatial_dims_are_rejected() {
        assert!(maxpool2d(&Tensor4::<f64>::zeros([1, 1, 0, 4])).is_err());
    }

    #[test]
    fn channel_pool_single_channel_duplicates_input() {
        let mut r = rng(4);
        let input = random_tensor(&mut r, [1, 1, 3, 3]);
        let (out, _) = channel_pool(&input).unwrap();
        assert_eq!(out.plane(0, 0), input.plane(0, 0));
        assert_eq!(out.plane(0, 1), input.plane(0, 0));
    }

    #[test]
    fn channel_pool_two_channel_pixel() {
        let input = Tensor4::from_vec([1, 2, 1, 1], vec![3.0, -1.0]).unwrap();
        let (out, _) = channel_pool(&input).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 1.0]);
    }

    #[test]
    fn channel_pool_matches_pixel_oracle() {
        let mut r = rng(5);
        let input = random_tensor(&mut r, [1, 8, 4, 4]);
        let (out, _) = channel_pool(&input).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let vals: Vec<f64> = (0..8).map(|c| input.at(0, c, y, x)).collect();
                let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mean = vals.iter().sum::<f64>() / 8.0;
                assert_eq!(out.at(0, 0, y, x), max);
                assert!((out.at(0, 1, y, x) - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn backwards_match_finite_differences() {
        let mut r = rng(6);
        let input = random_tensor(&mut r, [2, 3, 5, 6]);
        let (out, cache) = maxpool2d(&input).unwrap();
        let probe = random_tensor(&mut r, out.dims());
        let g = maxpool2d_backward(&cache, &probe).unwrap();
        let f = |x: &[f64]| weighted_sum(&maxpool2d(&Tensor4::from_vec(input.dims(), x.to_vec()).unwrap()).unwrap().0, &probe);
        let rep = finite_diff_check(f, input.as_slice(), g.as_slice(), 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6, "{rep:?}");

        let (out, cache) = channel_pool(&input).unwrap();
        let probe = random_tensor(&mut r, out.dims());
        let g = channel_pool_backward(&cache, &probe).unwrap();
        let f = |x: &[f64]| weighted_sum(&channel_pool(&Tensor4::from_vec(input.dims(), x.to_vec()).unwrap()).unwrap().0, &probe);
        let rep = finite_diff_check(f, input.as_slice(), g.as_slice(), 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6, "{rep:?}");
    }
}
