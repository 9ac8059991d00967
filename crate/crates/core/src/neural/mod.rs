//! Reverse-mode automatic differentiation and the layers the generator and
//! discriminator are built from.

pub mod graph;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod params;
pub mod tensor;

pub use graph::{ConvGeom, Gradients, Graph, Var};
pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_FLOOR};
pub use layers::{
    leaky_relu, scale_activation, scale_activation_var, sigmoid, spectral_normalize, BiLstm, Conv2d, Dense, Lstm,
    SpectralNormState, LEAKY_SLOPE, SN_WARMUP_ITERATIONS, SCALE_GAIN, SCALE_OFFSET,
};
pub use params::{AdamConfig, ParamId, ParamStore};
pub use tensor::Tensor;
