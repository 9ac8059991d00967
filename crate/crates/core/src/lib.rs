//! Near-end listening enhancement with a metric-surrogate GAN.
//!
//! A generator reallocates speech energy across time-frequency bins under an
//! RMS/duration constraint; a discriminator learns to predict objective
//! intelligibility scores (SIIB, ESTOI) so that its gradient can steer the
//! generator. The crate contains the DSP kernels, both metrics, a small
//! reverse-mode autodiff engine, the networks and training loop, a rule-based
//! reference modifier, and the data/checkpoint plumbing.

pub mod data;
pub mod dsp;
pub mod error;
pub mod gan;
pub mod metrics;
pub mod neural;
pub mod refmod;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Waveform32 = dsp::Waveform<f32>;
pub type Waveform64 = dsp::Waveform<f64>;
pub type Tensor32 = neural::Tensor<f32>;
pub type Tensor64 = neural::Tensor<f64>;
pub type ParamStore32 = neural::ParamStore<f32>;
pub type ParamStore64 = neural::ParamStore<f64>;
pub type Generator32 = gan::Generator<f32>;
pub type Discriminator32 = gan::Discriminator<f32>;
pub type Trainer32 = gan::Trainer<f32>;
pub type Trainer64 = gan::Trainer<f64>;
