use crate::error::{Error, Result};
use crate::numerics::cache::{OpCache, OpKind, Record};
use crate::numerics::tensor::Tensor4;
use crate::scalar::Scalar;

/// Side of the fixed pooling grid.
pub const SPP_GRID: usize = 16;

/// Pixel range `[start, end)` covered by bin `b` of `bins` over an axis of `len`.
pub fn bin_range(b: usize, bins: usize, len: usize) -> (usize, usize) {
    let start = (b * len) / bins;
    let end = ((b + 1) * len).div_ceil(bins);
    (start, end.max(start + 1).min(len))
}

/// Adaptive max pooling onto a 16×16 grid per channel, flattened per batch item
/// to `channels * 256` values (channel-major, then grid row, then grid column).
pub fn spp_pool<T: Scalar>(input: &Tensor4<T>) -> Result<(Vec<Vec<T>>, OpCache<T>)> {
    let [n, c, h, w] = input.dims();
    if h == 0 || w == 0 {
        return Err(Error::shape(format!("spp_pool on empty spatial dims {:?}", input.dims())));
    }
    let ys: Vec<_> = (0..SPP_GRID).map(|b| bin_range(b, SPP_GRID, h)).collect();
    let xs: Vec<_> = (0..SPP_GRID).map(|b| bin_range(b, SPP_GRID, w)).collect();
    let mut outs = Vec::with_capacity(n);
    let mut argmax = Vec::with_capacity(n * c * SPP_GRID * SPP_GRID);
    for b in 0..n {
        let mut out = Vec::with_capacity(c * SPP_GRID * SPP_GRID);
        for ch in 0..c {
            let base = input.offset(b, ch, 0, 0);
            let plane = input.plane(b, ch);
            for &(y0, y1) in &ys {
                for &(x0, x1) in &xs {
                    let mut best = plane[y0 * w + x0];
                    let mut best_idx = y0 * w + x0;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let v = plane[y * w + x];
                            if v > best {
                                best = v;
                                best_idx = y * w + x;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(base + best_idx);
                }
            }
        }
        outs.push(out);
    }
    let cache = OpCache::new(Record::SppPool {
        input_dims: input.dims(),
        argmax,
    });
    Ok((outs, cache))
}

pub fn spp_pool_backward<T: Scalar>(cache: &OpCache<T>, grad_out: &[Vec<T>]) -> Result<Tensor4<T>> {
    let Record::SppPool { input_dims, argmax } = cache.expect(OpKind::SppPool)? else {
        unreachable!()
    };
    let per_item = input_dims[1] * SPP_GRID * SPP_GRID;
    if grad_out.len() != input_dims[0] || grad_out.iter().any(|g| g.len() != per_item) {
        return Err(Error::CacheMismatch {
            expected: format!("SppPool grad of {} x {per_item}", input_dims[0]),
            found: format!("{} items", grad_out.len()),
        });
    }
    let mut grad_in = Tensor4::zeros(*input_dims);
    let g = grad_in.as_mut_slice();
    for (&idx, &v) in argmax.iter().zip(grad_out.iter().flatten()) {
        g[idx] = g[idx] + v;
    }
    Ok(grad_in)
}
