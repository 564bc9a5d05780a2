//! Hard-example-focusing regression loss.
//!
//! Each squared residual is weighted by `(1 - σ(d))^γ` where `d` is the raw
//! predicted density, so pixels already predicted with high density (easy
//! examples) contribute less than pixels predicted near or below zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Tensor4};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HefConfig {
    pub gamma: f64,
}

impl Default for HefConfig {
    fn default() -> Self {
        Self { gamma: 2.0 }
    }
}

impl HefConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be non-negative, got {gamma}")));
        }
        Ok(Self { gamma })
    }
}

/// Modulating factor `(1 - σ(d))^γ`, using `1 - σ(d) = σ(-d)`.
#[inline]
pub fn focusing_weight<T: Scalar>(d: T, gamma: T) -> T {
    if gamma == T::zero() {
        T::one()
    } else {
        sigmoid(-d).powf(gamma)
    }
}

/// Mean over pixels of `(1 - σ(pred))^γ (pred - gt)^2`, with its full gradient
/// (the modulating factor is differentiated too).
pub fn hef_loss<T: Scalar>(pred: &Tensor4<T>, gt: &Tensor4<T>, cfg: &HefConfig) -> Result<(T, Tensor4<T>)> {
    pred.ensure_same_dims(gt, "hef_loss")?;
    if !pred.all_finite() || !gt.all_finite() {
        return Err(Error::NonFinite("hef_loss input".into()));
    }
    if gt.as_slice().iter().any(|&v| v < T::zero()) {
        return Err(Error::invalid("hef_loss ground truth must be non-negative"));
    }
    let gamma = T::of(cfg.gamma);
    let two = T::of(2.0);
    let inv_n = T::one() / T::of_usize(pred.len().max(1));
    let mut loss = T::zero();
    let grad: Vec<T> = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&d, &g)| {
            let r = d - g;
            let m = focusing_weight(d, gamma);
            loss = loss + m * r * r;
            // d/dd (1-σ)^γ = -γ σ (1-σ)^γ
            (two * m * r - gamma * sigmoid(d) * m * r * r) * inv_n
        })
        .collect();
    Ok((loss * inv_n, Tensor4::from_vec(pred.dims(), grad)?))
}
