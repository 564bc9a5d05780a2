//! Spatial attention over the fused features.
//!
//! `a = relu(conv3x3(f))`, `m = [max_c a, mean_c a]`, `s = σ(conv7x7(m))`,
//! `out = a ⊙ s` with `s` broadcast across channels.

use crate::error::Result;
use crate::model::refine::{semantic_refine, semantic_refine_backward};
use crate::numerics::cache::{OpCache, OpKind, Record};
use crate::numerics::{
    activation, activation_backward, channel_pool, channel_pool_backward, conv2d, conv2d_backward, ActivationKind,
    Tensor4,
};
use crate::scalar::Scalar;

/// Borrowed weights of the enhancement layer.
pub struct FelParams<'a, T> {
    pub conv_w: &'a Tensor4<T>,
    pub conv_b: &'a [T],
    pub attn_w: &'a Tensor4<T>,
    pub attn_b: &'a [T],
}

pub struct FelGrads<T> {
    pub input: Tensor4<T>,
    pub conv_w: Tensor4<T>,
    pub conv_b: Vec<T>,
    pub attn_w: Tensor4<T>,
    pub attn_b: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct EnhanceTrace<T> {
    conv: OpCache<T>,
    relu: OpCache<T>,
    pool: OpCache<T>,
    attn: OpCache<T>,
    gate: OpCache<T>,
}

pub fn feature_enhance<T: Scalar>(f: &Tensor4<T>, p: &FelParams<'_, T>) -> Result<(Tensor4<T>, OpCache<T>)> {
    let (pre, conv) = conv2d(f, p.conv_w, p.conv_b, 1)?;
    let (a, relu) = activation(&pre, ActivationKind::Relu)?;
    let (m, pool) = channel_pool(&a)?;
    let (logits, attn) = conv2d(&m, p.attn_w, p.attn_b, 1)?;
    let (out, gate) = semantic_refine(&a, &logits)?;
    let trace = EnhanceTrace {
        conv,
        relu,
        pool,
        attn,
        gate,
    };
    Ok((out, OpCache::new(Record::FeatureEnhance(Box::new(trace)))))
}

pub fn feature_enhance_backward<T: Scalar>(cache: &OpCache<T>, grad_out: &Tensor4<T>) -> Result<FelGrads<T>> {
    let Record::FeatureEnhance(t) = cache.expect(OpKind::FeatureEnhance)? else {
        unreachable!()
    };
    let (mut grad_a, grad_logits) = semantic_refine_backward(&t.gate, grad_out)?;
    let attn = conv2d_backward(&t.attn, &grad_logits)?;
    grad_a.add_assign(&channel_pool_backward(&t.pool, &attn.input)?)?;
    let grad_pre = activation_backward(&t.relu, &grad_a)?;
    let conv = conv2d_backward(&t.conv, &grad_pre)?;
    Ok(FelGrads {
        input: conv.input,
        conv_w: conv.weights,
        conv_b: conv.bias,
        attn_w: attn.weights,
        attn_b: attn.bias,
    })
}
