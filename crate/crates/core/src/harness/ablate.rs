//! Paired training runs with and without hard-example focusing.

use serde::Serialize;

use crate::error::Result;
use crate::groundtruth::AnnotationSet;
use crate::harness::eval::{evaluate, EvalReport};
use crate::losses::LossBreakdown;
use crate::numerics::Tensor4;
use crate::trainer::{train, TrainConfig};

#[derive(Debug, Clone, Serialize)]
pub struct AblationArm {
    pub gamma: f64,
    pub final_loss: Option<LossBreakdown>,
    pub report: EvalReport,
    pub hard_underestimation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub seed: u64,
    pub iterations: usize,
    pub focused: AblationArm,
    pub plain: AblationArm,
    /// Hard-subset under-estimation of the focused arm minus that of the plain arm.
    /// Negative means focusing left less hard-head mass missing.
    pub hard_underestimation_delta: Option<f64>,
}

pub const FOCUSED_GAMMA: f64 = 2.0;

fn run_arm(data: &[(Tensor4<f64>, AnnotationSet)], cfg: &TrainConfig, gamma: f64) -> Result<AblationArm> {
    let cfg = TrainConfig { gamma, ..cfg.clone() };
    let outcome = train(data, &cfg)?;
    let report = evaluate(&outcome.params, data, cfg.sigma)?;
    Ok(AblationArm {
        gamma,
        final_loss: outcome.log.steps().last().map(|(_, l)| *l),
        hard_underestimation: report.hard_underestimation(),
        report,
    })
}

/// Trains twice with identical seeds and schedules, once with `γ = 2` and once
/// with `γ = 0` (plain squared error), and scores both on the training data.
pub fn ablate(data: &[(Tensor4<f64>, AnnotationSet)], cfg: &TrainConfig) -> Result<AblationReport> {
    let focused = run_arm(data, cfg, FOCUSED_GAMMA)?;
    let plain = run_arm(data, cfg, 0.0)?;
    let hard_underestimation_delta = focused
        .hard_underestimation
        .zip(plain.hard_underestimation)
        .map(|(f, p)| f - p);
    Ok(AblationReport {
        seed: cfg.seed,
        iterations: cfg.iterations,
        focused,
        plain,
        hard_underestimation_delta,
    })
}
