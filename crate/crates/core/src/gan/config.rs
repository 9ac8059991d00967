use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricSelection;

/// The three training set-ups compared in the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// SIIB target, zero-knowledge discriminator loss.
    #[serde(rename = "siibgan-zs")]
    SiibGanZs,
    /// SIIB target, loss with enhanced examples.
    #[serde(rename = "siibgan")]
    SiibGan,
    /// SIIB and ESTOI targets, loss with enhanced examples.
    #[serde(rename = "multigan")]
    MultiGan,
}

impl Variant {
    pub fn metrics(self) -> MetricSelection {
        match self {
            Variant::SiibGanZs | Variant::SiibGan => MetricSelection::siib_only(),
            Variant::MultiGan => MetricSelection::siib_estoi(),
        }
    }

    pub fn uses_examples(self) -> bool {
        !matches!(self, Variant::SiibGanZs)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::SiibGanZs => "siibgan-zs",
            Variant::SiibGan => "siibgan",
            Variant::MultiGan => "multigan",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "siibgan-zs" => Ok(Variant::SiibGanZs),
            "siibgan" => Ok(Variant::SiibGan),
            "multigan" => Ok(Variant::MultiGan),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

/// Where the generator's mask is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskDomain {
    /// Mask multiplies the power-law compressed magnitudes.
    #[default]
    Compressed,
    /// Mask multiplies linear magnitudes.
    Linear,
}

/// Layer sizes of both networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub n_bins: usize,
    pub g_hidden: usize,
    pub g_dense: usize,
    pub d_channels: Vec<usize>,
    pub d_kernels: Vec<usize>,
    /// Frequency stride of every discriminator convolution.
    pub d_freq_stride: usize,
    pub d_dense: Vec<usize>,
    #[serde(default)]
    pub mask_domain: MaskDomain,
    /// Multiplier on the initial weights of the generator's output layer.
    #[serde(default = "one")]
    pub g_out_init_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ArchConfig {
    /// Full-size networks: 2 x BLSTM(400), dense 600, conv stack 8-16-32-48-64.
    pub fn full() -> Self {
        Self {
            n_bins: 513,
            g_hidden: 400,
            g_dense: 600,
            d_channels: vec![8, 16, 32, 48, 64],
            d_kernels: vec![5, 7, 10, 15, 20],
            d_freq_stride: 1,
            d_dense: vec![64, 10],
            mask_domain: MaskDomain::Compressed,
            g_out_init_scale: 1.0,
        }
    }

    /// Reduced networks that train in minutes on a CPU.
    pub fn desk() -> Self {
        Self {
            n_bins: 513,
            g_hidden: 32,
            g_dense: 64,
            d_channels: vec![4, 8, 8],
            d_kernels: vec![5, 5, 5],
            d_freq_stride: 2,
            d_dense: vec![32, 10],
            mask_domain: MaskDomain::Compressed,
            g_out_init_scale: 0.1,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::InvalidArgument(format!("unknown architecture preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("architecture: {m}")));
        if self.n_bins < 2 || self.g_hidden == 0 || self.g_dense == 0 {
            return bad("sizes must be positive");
        }
        if self.d_channels.is_empty() || self.d_channels.len() != self.d_kernels.len() {
            return bad("d_channels and d_kernels must be non-empty and of equal length");
        }
        if self.d_channels.iter().chain(&self.d_kernels).chain(&self.d_dense).any(|&v| v == 0) {
            return bad("channel, kernel and dense sizes must be positive");
        }
        if self.d_freq_stride == 0 {
            return bad("d_freq_stride must be at least 1");
        }
        if !(self.g_out_init_scale > 0.0 && self.g_out_init_scale.is_finite()) {
            return bad("g_out_init_scale must be positive");
        }
        Ok(())
    }

    /// Generator input width (speech and noise features per frame).
    pub fn g_input(&self) -> usize {
        2 * self.n_bins
    }
}
