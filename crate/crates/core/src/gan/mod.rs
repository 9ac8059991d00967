//! The metric-surrogate GAN: generator, discriminator, losses, training
//! loop and the enhancement pipeline.

pub mod config;
pub mod discriminator;
pub mod generator;
pub mod loss;
pub mod pipeline;
pub mod train;

pub use config::{ArchConfig, MaskDomain, Variant};
pub use discriminator::Discriminator;
pub use generator::{generator_forward, Generator, GeneratorVars};
pub use loss::{d_loss_with_examples, d_loss_zero_knowledge, g_loss, DItem, Scored};
pub use pipeline::{compressed_magnitude, SpecFeatures};
pub use train::{
    checkpoint_config, enhance, pearson, EarlyStop, EpochSummary, HeldoutReport, LogRecord, Prediction, StepResult,
    TrainConfig, TrainSample, Trainer,
};
