use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundtruth::DEFAULT_NUM_CLASSES;

/// Largest parameter count a built model may have.
pub const PARAMETER_BUDGET: usize = 2_500_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Filters per dilated stem branch; every other width is a multiple of it.
    pub base_channels: usize,
    pub dilations: [usize; 4],
    pub num_classes: usize,
    pub output_stride: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            dilations: [1, 2, 3, 4],
            num_classes: DEFAULT_NUM_CLASSES,
            output_stride: 8,
        }
    }
}

/// Channel widths derived from `base_channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Widths {
    pub stem: usize,
    pub stages: [usize; 3],
    pub fused: usize,
    pub enhanced: usize,
    pub head: usize,
    pub hidden: usize,
}

/// Width of the fully connected layer after spatial pyramid pooling.
pub const CLASSIFIER_HIDDEN: usize = 64;

/// Kernel side of the spatial attention convolution.
pub const ATTENTION_KERNEL: usize = 7;

impl ModelConfig {
    pub fn with_base_channels(base_channels: usize) -> Self {
        Self {
            base_channels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::invalid("base_channels must be positive"));
        }
        if self.dilations.contains(&0) {
            return Err(Error::invalid("dilations must be positive"));
        }
        let mut sorted = self.dilations;
        sorted.sort_unstable();
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::invalid(format!("dilations must be distinct, got {:?}", self.dilations)));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least two count classes"));
        }
        if self.output_stride != 8 {
            return Err(Error::invalid(format!(
                "output stride is fixed by three 2x2 pools to 8, got {}",
                self.output_stride
            )));
        }
        Ok(())
    }

    pub fn widths(&self) -> Widths {
        let b = self.base_channels;
        Widths {
            stem: 4 * b,
            stages: [4 * b, 6 * b, 8 * b],
            fused: 8 * b,
            enhanced: 4 * b,
            head: 4 * b,
            hidden: CLASSIFIER_HIDDEN,
        }
    }
}
