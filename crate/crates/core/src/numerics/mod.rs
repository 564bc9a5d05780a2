//! Differentiable tensor operations with explicit vector-Jacobian backward passes.

pub mod activation;
pub mod cache;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod matrix;
pub mod pool;
pub mod resize;
pub mod spp;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use activation::{activation, activation_backward, sigmoid, ActivationKind};
pub use cache::{OpCache, OpKind};
pub use conv::{conv2d, conv2d_backward, ConvGrads};
pub use dense::{dense, dense_backward, DenseGrads};
pub use gradcheck::{finite_diff_check, finite_diff_check_at, relative_error, GradCheckReport, DEFAULT_EPSILON};
pub use matrix::Matrix;
pub use pool::{channel_pool, channel_pool_backward, maxpool2d, maxpool2d_backward};
pub use resize::{resize_bilinear, resize_bilinear_backward};
pub use spp::{spp_pool, spp_pool_backward, SPP_GRID};
pub use tensor::{concat_channels, split_channels, Tensor4};
