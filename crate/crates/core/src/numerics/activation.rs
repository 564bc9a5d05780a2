use crate::error::Result;
use crate::numerics::cache::{check_grad_dims, OpCache, OpKind, Record};
use crate::numerics::tensor::Tensor4;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Sigmoid,
}

/// Logistic function, evaluated so that `exp` never overflows.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn activation<T: Scalar>(input: &Tensor4<T>, kind: ActivationKind) -> Result<(Tensor4<T>, OpCache<T>)> {
    let output = match kind {
        ActivationKind::Relu => input.map(|v| v.max(T::zero())),
        ActivationKind::Sigmoid => input.map(sigmoid),
    };
    let cache = OpCache::new(Record::Activation {
        kind,
        output: output.clone(),
    });
    Ok((output, cache))
}

pub fn activation_backward<T: Scalar>(cache: &OpCache<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let Record::Activation { kind, output } = cache.expect(OpKind::Activation)? else {
        unreachable!()
    };
    check_grad_dims(output.dims(), grad_out.dims(), OpKind::Activation)?;
    let data = output
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&y, &g)| match kind {
            ActivationKind::Relu => {
                if y > T::zero() {
                    g
                } else {
                    T::zero()
                }
            }
            ActivationKind::Sigmoid => g * y * (T::one() - y),
        })
        .collect();
    Tensor4::from_vec(output.dims(), data)
}
