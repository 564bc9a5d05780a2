use crate::error::{Error, Result};
use crate::numerics::cache::{check_grad_dims, OpCache, OpKind, Record};
use crate::numerics::tensor::Tensor4;
use crate::scalar::Scalar;

/// One output coordinate's two source taps and the weight of the second.
#[derive(Debug, Clone, Copy)]
struct Tap<T> {
    i0: usize,
    i1: usize,
    frac: T,
}

/// Half-pixel-centre sampling (align_corners = false), clamped at the low edge.
fn taps<T: Scalar>(in_len: usize, out_len: usize) -> Vec<Tap<T>> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            Tap {
                i0,
                i1,
                frac: T::of(src - i0 as f64),
            }
        })
        .collect()
}

pub fn resize_bilinear<T: Scalar>(
    input: &Tensor4<T>,
    new_h: usize,
    new_w: usize,
) -> Result<(Tensor4<T>, OpCache<T>)> {
    let [n, c, h, w] = input.dims();
    if new_h == 0 || new_w == 0 || h == 0 || w == 0 {
        return Err(Error::shape(format!(
            "resize_bilinear {:?} -> {new_h}x{new_w}: dims must be positive",
            input.dims()
        )));
    }
    let ty = taps::<T>(h, new_h);
    let tx = taps::<T>(w, new_w);
    let one = T::one();
    let mut out = Tensor4::zeros([n, c, new_h, new_w]);
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for (oy, ay) in ty.iter().enumerate() {
                let r0 = &src[ay.i0 * w..(ay.i0 + 1) * w];
                let r1 = &src[ay.i1 * w..(ay.i1 + 1) * w];
                for (ox, ax) in tx.iter().enumerate() {
                    let top = r0[ax.i0] * (one - ax.frac) + r0[ax.i1] * ax.frac;
                    let bot = r1[ax.i0] * (one - ax.frac) + r1[ax.i1] * ax.frac;
                    dst[oy * new_w + ox] = top * (one - ay.frac) + bot * ay.frac;
                }
            }
        }
    }
    let cache = OpCache::new(Record::ResizeBilinear {
        input_dims: input.dims(),
        output_dims: out.dims(),
    });
    Ok((out, cache))
}

/// Transpose of the interpolation: scatters each output gradient onto its four taps.
pub fn resize_bilinear_backward<T: Scalar>(cache: &OpCache<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let Record::ResizeBilinear {
        input_dims,
        output_dims,
    } = cache.expect(OpKind::ResizeBilinear)?
    else {
        unreachable!()
    };
    check_grad_dims(*output_dims, grad_out.dims(), OpKind::ResizeBilinear)?;
    let [n, c, h, w] = *input_dims;
    let [_, _, new_h, new_w] = *output_dims;
    let ty = taps::<T>(h, new_h);
    let tx = taps::<T>(w, new_w);
    let one = T::one();
    let mut grad_in = Tensor4::zeros(*input_dims);
    for b in 0..n {
        for ch in 0..c {
            let g = grad_out.plane(b, ch);
            let dst = grad_in.plane_mut(b, ch);
            for (oy, ay) in ty.iter().enumerate() {
                for (ox, ax) in tx.iter().enumerate() {
                    let v = g[oy * new_w + ox];
                    let top = v * (one - ay.frac);
                    let bot = v * ay.frac;
                    dst[ay.i0 * w + ax.i0] = dst[ay.i0 * w + ax.i0] + top * (one - ax.frac);
                    dst[ay.i0 * w + ax.i1] = dst[ay.i0 * w + ax.i1] + top * ax.frac;
                    dst[ay.i1 * w + ax.i0] = dst[ay.i1 * w + ax.i0] + bot * (one - ax.frac);
                    dst[ay.i1 * w + ax.i1] = dst[ay.i1 * w + ax.i1] + bot * ax.frac;
                }
            }
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
    fn constant_stays_constant() {
        let input = Tensor4::filled([1, 2, 3, 5], 0.75f64);
        let (out, _) = resize_bilinear(&input, 7, 4).unwrap();
        assert!(out.as_slice().iter().all(|&v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn doubling_two_by_two_matches_hand_table() {
        // Along each axis the 2 -> 4 weights are [1, 0], [.75, .25], [.25, .75], [0, 1].
        let input = Tensor4::from_vec([1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let (out, _) = resize_bilinear(&input, 4, 4).unwrap();
        let expected = [
            1.0, 1.25, 1.75, 2.0, //
            1.5, 1.75, 2.25, 2.5, //
            2.5, 2.75, 3.25, 3.5, //
            3.0, 3.25, 3.75, 4.0,
        ];
        for (a, b) in out.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn same_size_is_identity() {
        let mut r = rng(11);
        let input = random_tensor(&mut r, [1, 2, 4, 6]);
        let (out, _) = resize_bilinear(&input, 4, 6).unwrap();
        assert!(out.max_abs_diff(&input).unwrap() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng(12);
        let input = random_tensor(&mut r, [1, 2, 4, 3]);
        for (nh, nw) in [(2, 2), (8, 6), (5, 7)] {
            let (out, cache) = resize_bilinear(&input, nh, nw).unwrap();
            let probe = random_tensor(&mut r, out.dims());
            let g = resize_bilinear_backward(&cache, &probe).unwrap();
            let f = |x: &[f64]| {
                let t = Tensor4::from_vec(input.dims(), x.to_vec()).unwrap();
                weighted_sum(&resize_bilinear(&t, nh, nw).unwrap().0, &probe)
            };
            let rep = finite_diff_check(f, input.as_slice(), g.as_slice(), 1e-5).unwrap();
            assert!(rep.max_rel_err < 1e-6, "{rep:?}");
        }
    }
}
