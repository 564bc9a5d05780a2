//! Training objectives, each returning its value and the gradient with respect to its predictions.

pub mod cls;
pub mod dice;
pub mod hef;
pub mod overall;

pub use cls::{cls_loss, softmax};
pub use dice::{dice_level, dice_loss, DiceOutput, DICE_EPS};
pub use hef::{focusing_weight, hef_loss, HefConfig};
pub use overall::{overall_loss, GradScales, LossBreakdown, LossWeights};
