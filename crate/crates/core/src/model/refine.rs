use crate::error::{Error, Result};
use crate::numerics::cache::{check_grad_dims, OpCache, OpKind, Record};
use crate::numerics::{sigmoid, Tensor4};
use crate::scalar::Scalar;

/// Gates every channel of `f` by `σ(seg_logit)`, a single-channel map broadcast across channels.
pub fn semantic_refine<T: Scalar>(f: &Tensor4<T>, seg_logit: &Tensor4<T>) -> Result<(Tensor4<T>, OpCache<T>)> {
    let [n, c, h, w] = f.dims();
    if seg_logit.dims() != [n, 1, h, w] {
        return Err(Error::shape(format!(
            "semantic_refine features {:?} vs gate logits {:?}",
            f.dims(),
            seg_logit.dims()
        )));
    }
    let gate = seg_logit.map(sigmoid);
    let mut out = f.clone();
    for b in 0..n {
        let g = gate.plane(b, 0);
        for ch in 0..c {
            for (o, &s) in out.plane_mut(b, ch).iter_mut().zip(g) {
                *o = *o * s;
            }
        }
    }
    let cache = OpCache::new(Record::SemanticRefine {
        features: f.clone(),
        gate,
    });
    Ok((out, cache))
}

/// Returns gradients with respect to the features and the gate logits.
pub fn semantic_refine_backward<T: Scalar>(
    cache: &OpCache<T>,
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let Record::SemanticRefine { features, gate } = cache.expect(OpKind::SemanticRefine)? else {
        unreachable!()
    };
    check_grad_dims(features.dims(), grad_out.dims(), OpKind::SemanticRefine)?;
    let [n, c, _, _] = features.dims();
    let mut grad_f = grad_out.clone();
    let mut grad_logit = Tensor4::zeros(gate.dims());
    for b in 0..n {
        let g = gate.plane(b, 0);
        let mut acc = vec![T::zero(); g.len()];
        for ch in 0..c {
            let f = features.plane(b, ch);
            for (i, d) in grad_f.plane_mut(b, ch).iter_mut().enumerate() {
                acc[i] = acc[i] + *d * f[i];
                *d = *d * g[i];
            }
        }
        for ((d, a), &s) in grad_logit.plane_mut(b, 0).iter_mut().zip(acc).zip(g) {
            *d = a * s * (T::one() - s);
        }
    }
    Ok((grad_f, grad_logit))
}
