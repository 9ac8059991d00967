//! Deterministic signal-processing kernels.
//!
//! Everything here is a pure function over immutable inputs; the only
//! randomness (noise cropping) is driven by an explicit seed.

mod filterbank;
mod resample;
mod silence;
mod stft;

pub use filterbank::{
    erb_space, gammatone_bank, gammatone_power_response, third_octave_bands, GammatoneConfig,
    ThirdOctaveBands,
};
pub use resample::{resample, Resampler};
pub use silence::{remove_silent_frames, SilenceConfig};
pub use stft::{
    compress, energy_normalize, expand, hann_periodic, istft, recombine, stft, stft_with,
    ComplexSpectrogram, MagSpectrogram, StftConfig, COMPRESSION_EXPONENT,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mono audio at a fixed sample rate. Samples are full-scale `±1.0` and
/// always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform<S> {
    samples: Vec<S>,
    sample_rate: u32,
}

impl<S: Real> Waveform<S> {
    pub fn new(samples: Vec<S>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![S::zero(); len], sample_rate: sample_rate.max(1) }
    }

    pub fn samples(&self) -> &[S] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<S> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Converts to another scalar type.
    pub fn cast<T: Real>(&self) -> Waveform<T> {
        Waveform {
            samples: self.samples.iter().map(|v| T::lit(v.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: S) -> Self {
        Self {
            samples: self.samples.iter().map(|&v| v * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum of two equally long signals at the same rate.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::ShapeMismatch(format!(
                "sample rates differ: {} vs {}",
                self.sample_rate, other.sample_rate
            )));
        }
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch(format!(
                "lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Self {
            samples: self.samples.iter().zip(&other.samples).map(|(&a, &b)| a + b).collect(),
            sample_rate: self.sample_rate,
        })
    }

    /// Copy of `len` samples starting at `offset`.
    pub fn slice(&self, offset: usize, len: usize) -> Result<Self> {
        if offset + len > self.len() {
            return Err(Error::InvalidArgument(format!(
                "slice {offset}..{} out of range for {} samples",
                offset + len,
                self.len()
            )));
        }
        Ok(Self { samples: self.samples[offset..offset + len].to_vec(), sample_rate: self.sample_rate })
    }
}

/// Root-mean-square level.
pub fn rms<S: Real>(w: &Waveform<S>) -> Result<S> {
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = w.samples.iter().map(|v| v.as_f64() * v.as_f64()).sum();
    Ok(S::lit((sum / w.len() as f64).sqrt()))
}

/// Level difference in dB between two RMS values.
pub fn db_ratio(a: f64, b: f64) -> f64 {
    20.0 * (a / b).log10()
}

/// Rescales `w` so that its RMS equals `target_rms`.
pub fn match_rms<S: Real>(w: &Waveform<S>, target_rms: S) -> Result<Waveform<S>> {
    let current = rms(w)?;
    if current <= S::zero() {
        return Err(Error::DegenerateEnhancement("cannot rescale a silent signal".into()));
    }
    Ok(w.scaled(target_rms / current))
}

/// A speech/noise mixture at a requested SNR, with the scaled masker kept
/// separately so that metrics can rebuild `processed + noise`.
#[derive(Clone, Debug)]
pub struct Mixture<S> {
    pub mixture: Waveform<S>,
    /// Cropped noise after applying `gain`.
    pub noise: Waveform<S>,
    pub gain: S,
    pub crop_offset: usize,
}

/// Picks a seeded random window of `len` samples from `noise`.
pub fn crop_noise<S: Real>(noise: &Waveform<S>, len: usize, seed: u64) -> Result<(Waveform<S>, usize)> {
    if noise.len() < len {
        return Err(Error::InvalidArgument(format!(
            "noise ({} samples) shorter than speech ({len} samples)",
            noise.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.random_range(0..=noise.len() - len);
    log::debug!("noise crop offset {offset} (seed {seed})");
    Ok((noise.slice(offset, len)?, offset))
}

/// Gain that brings `noise` to `snr_db` below `speech` in global RMS.
pub fn snr_gain<S: Real>(speech: &Waveform<S>, noise: &Waveform<S>, snr_db: f64) -> Result<S> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument("snr_db must be finite".into()));
    }
    let rs = rms(speech)?.as_f64();
    let rn = rms(noise)?.as_f64();
    if rs <= 0.0 {
        return Err(Error::InvalidArgument("speech has zero RMS".into()));
    }
    if rn <= 0.0 {
        return Err(Error::InvalidArgument("noise has zero RMS".into()));
    }
    Ok(S::lit(rs / rn * 10f64.powf(-snr_db / 20.0)))
}

/// Mixes `speech` with a seeded crop of `noise` at `snr_db` (global RMS).
pub fn mix_at_snr<S: Real>(
    speech: &Waveform<S>,
    noise: &Waveform<S>,
    snr_db: f64,
    seed: u64,
) -> Result<Mixture<S>> {
    if speech.is_empty() {
        return Err(Error::EmptyInput);
    }
    if speech.sample_rate() != noise.sample_rate() {
        return Err(Error::ShapeMismatch(format!(
            "sample rates differ: {} vs {}",
            speech.sample_rate(),
            noise.sample_rate()
        )));
    }
    let (cropped, crop_offset) = crop_noise(noise, speech.len(), seed)?;
    let gain = snr_gain(speech, &cropped, snr_db)?;
    let scaled = cropped.scaled(gain);
    let mixture = speech.add(&scaled)?;
    Ok(Mixture { mixture, noise: scaled, gain, crop_offset })
}
