use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{HefConfig, LossWeights};
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub lambda_seg: f64,
    pub lambda_cla: f64,
    pub flip_prob: f64,
    pub noise_prob: f64,
    /// Standard deviation of the pixel noise as a fraction of the [0, 1] range.
    pub noise_std: f64,
    /// Patch areas as fractions of the image area.
    pub patch_fracs: [f64; 3],
    pub patch_counts: [usize; 3],
    pub iterations: usize,
    pub seed: u64,
    /// Gaussian kernel std for density targets, in pixels.
    pub sigma: f64,
    /// Training-set MAE is logged every this many iterations (0 disables).
    pub eval_every: usize,
    /// Global gradient-norm clip; off unless set.
    pub clip_norm: Option<f64>,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            batch_size: 1,
            gamma: 2.0,
            lambda_seg: 1e-2,
            lambda_cla: 1e-3,
            flip_prob: 0.5,
            noise_prob: 0.5,
            noise_std: 0.01,
            patch_fracs: [1.0 / 16.0, 1.0 / 4.0, 1.0],
            patch_counts: [9, 4, 1],
            iterations: 1000,
            seed: 0,
            sigma: 4.0,
            eval_every: 100,
            clip_norm: None,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size != 1 {
            return Err(Error::invalid("only batch size 1 is supported"));
        }
        if !prob(self.flip_prob) || !prob(self.noise_prob) {
            return Err(Error::invalid("augmentation probabilities must lie in [0, 1]"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        if self.patch_counts.contains(&0) {
            return Err(Error::invalid("patch counts must be positive"));
        }
        if self.patch_fracs.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::invalid("patch area fractions must lie in (0, 1]"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid("clip norm must be positive"));
            }
        }
        HefConfig::new(self.gamma)?;
        LossWeights::new(self.lambda_seg, self.lambda_cla)?;
        self.model.validate()
    }

    pub fn hef(&self) -> HefConfig {
        HefConfig { gamma: self.gamma }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_seg: self.lambda_seg,
            lambda_cla: self.lambda_cla,
        }
    }

    pub fn pool_size(&self) -> usize {
        self.patch_counts.iter().sum()
    }
}
