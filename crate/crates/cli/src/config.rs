use std::fs;
use std::path::{Path, PathBuf};

use imetricgan::dsp::StftConfig;
use imetricgan::gan::{ArchConfig, TrainConfig, Variant};
use imetricgan::metrics::MetricSelection;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size networks, learning rates 2e-4, 50 epochs.
    #[default]
    Full,
    /// Small networks tuned for CPU training on small corpora.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftParams {
    pub window_len: usize,
    pub hop: usize,
    pub n_fft: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        let c = StftConfig::default();
        Self { window_len: c.window_len, hop: c.hop, n_fft: c.n_fft }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
}

/// Training run configuration file. Unset fields take the preset's values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preset: Preset,
    pub variant: Variant,
    /// Must match the variant when given.
    #[serde(default)]
    pub metrics: Option<MetricSelection>,
    #[serde(default)]
    pub arch: Option<ArchConfig>,
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default)]
    pub lr_g: Option<f64>,
    #[serde(default)]
    pub lr_d: Option<f64>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub target: Option<f64>,
    #[serde(default)]
    pub sn_iterations: Option<usize>,
    #[serde(default)]
    pub stft: Option<StftParams>,
    #[serde(default)]
    pub paths: Paths,
}

/// Fully resolved configuration, written to `config.json` in the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveConfig {
    pub train: TrainConfig,
    pub stft: StftParams,
    pub manifest: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn resolve(&self) -> CliResult<EffectiveConfig> {
        let mut t = match self.preset {
            Preset::Full => TrainConfig { variant: self.variant, ..TrainConfig::default() },
            Preset::Desk => TrainConfig::desk(self.variant),
        };
        if let Some(m) = &self.metrics {
            if *m != self.variant.metrics() {
                return Err(CliError::Usage(format!(
                    "metrics {:?} do not match variant {} ({:?})",
                    m.metrics(),
                    self.variant,
                    self.variant.metrics().metrics()
                )));
            }
        }
        if let Some(a) = &self.arch {
            t.arch = a.clone();
        }
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { t.$f = v; })* };
        }
        take!(r_max, lr_g, lr_d, epochs, patience, seed, target, sn_iterations);
        t.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let stft = self.stft.unwrap_or_default();
        if stft != StftParams::default() {
            return Err(CliError::Usage(format!(
                "STFT layout is fixed at window {}, hop {}, FFT {} (got {stft:?})",
                StftParams::default().window_len,
                StftParams::default().hop,
                StftParams::default().n_fft
            )));
        }
        if t.arch.n_bins != stft.n_fft / 2 + 1 {
            return Err(CliError::Usage(format!("arch.n_bins must be {}", stft.n_fft / 2 + 1)));
        }
        Ok(EffectiveConfig { train: t, stft, manifest: self.paths.manifest.clone() })
    }
}
