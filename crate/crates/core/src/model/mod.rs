//! Network definition with hand-written forward and backward passes.

pub mod config;
pub mod enhance;
pub mod network;
pub mod params;
pub mod refine;

pub use config::{ModelConfig, Widths, PARAMETER_BUDGET};
pub use enhance::{feature_enhance, feature_enhance_backward, FelGrads, FelParams};
pub use network::{
    backward, build_model, conv_parameter_count, forward, forward_with, predict_count, ForwardOptions, ForwardTrace,
    ModelOutputs, OutputGrads,
};
pub use params::{ModelParams, Param, ParamGrads};
pub use refine::{semantic_refine, semantic_refine_backward};
