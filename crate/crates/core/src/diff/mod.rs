//! Reverse-mode differentiation for the two parameterized layer types used
//! by the models: fully connected networks and circular convolutions.

mod conv;
mod init;
mod mlp;

pub use conv::{conv_apply, conv_backward, stencil_to_matrix, ConvStencil};
pub use init::{init_mlp, init_stencil, WeightInit};
pub use mlp::{mlp_backward, mlp_forward, Activation, MlpGrad, MlpParams, MlpTape};
