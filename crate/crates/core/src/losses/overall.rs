use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_seg: f64,
    pub lambda_cla: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_seg: 1e-2,
            lambda_cla: 1e-3,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_seg: f64, lambda_cla: f64) -> Result<Self> {
        if !(lambda_seg >= 0.0 && lambda_cla >= 0.0) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        Ok(Self { lambda_seg, lambda_cla })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub hef: f64,
    pub segs: f64,
    pub cla: f64,
    pub overall: f64,
}

/// Multipliers applied to each term's gradient before backpropagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradScales {
    pub hef: f64,
    pub seg: f64,
    pub cla: f64,
}

/// `hef + λ_seg·segs + λ_cla·cla`.
pub fn overall_loss(hef: f64, segs: f64, cla: f64, w: &LossWeights) -> (LossBreakdown, GradScales) {
    let breakdown = LossBreakdown {
        hef,
        segs,
        cla,
        overall: hef + w.lambda_seg * segs + w.lambda_cla * cla,
    };
    let scales = GradScales {
        hef: 1.0,
        seg: w.lambda_seg,
        cla: w.lambda_cla,
    };
    (breakdown, scales)
}
