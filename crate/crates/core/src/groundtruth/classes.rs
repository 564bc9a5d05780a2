use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NUM_CLASSES: usize = 15;

/// Adaptive count-class binning: class width `thr = C / K` for dataset maximum `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassLabelSpec {
    pub num_classes: usize,
    pub thr: f64,
    pub max_count: f64,
}

/// Class width from the largest per-image count. A dataset without any heads
/// gets `thr = 1` so that every count still maps to a class.
pub fn compute_thr(counts: &[f64], num_classes: usize) -> Result<ClassLabelSpec> {
    if counts.is_empty() {
        return Err(Error::invalid("compute_thr needs at least one count"));
    }
    if num_classes == 0 {
        return Err(Error::invalid("number of classes must be positive"));
    }
    if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::invalid("counts must be finite and non-negative"));
    }
    let max_count = counts.iter().cloned().fold(0.0, f64::max);
    let thr = if max_count > 0.0 {
        max_count / num_classes as f64
    } else {
        1.0
    };
    Ok(ClassLabelSpec {
        num_classes,
        thr,
        max_count,
    })
}

/// `floor(count / thr)` on half-open bins, clamped to the last class.
pub fn encode_class_label(count: f64, spec: &ClassLabelSpec) -> Result<usize> {
    if !(count >= 0.0) {
        return Err(Error::invalid(format!("count must be non-negative, got {count}")));
    }
    let class = (count / spec.thr).floor();
    Ok((class as usize).min(spec.num_classes - 1))
}
