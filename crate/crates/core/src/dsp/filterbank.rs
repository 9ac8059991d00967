//! Auditory filterbanks used by the intelligibility front-ends.

use super::{stft_with, ComplexSpectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One-third-octave band layout on a one-sided FFT grid.
#[derive(Clone, Debug)]
pub struct ThirdOctaveBands {
    /// Half-open bin ranges `[lo, hi)`, one per band.
    pub ranges: Vec<(usize, usize)>,
    pub centers: Vec<f64>,
    pub sample_rate: u32,
    pub n_fft: usize,
}

impl ThirdOctaveBands {
    /// Layout used by the envelope-correlation metric: 15 bands from 150 Hz,
    /// 512-point FFT at 10 kHz.
    pub fn standard() -> Self {
        Self::new(10_000, 512, 15, 150.0)
    }

    pub fn new(sample_rate: u32, n_fft: usize, n_bands: usize, min_freq: f64) -> Self {
        let n_bins = n_fft / 2 + 1;
        let freqs: Vec<f64> = (0..n_bins).map(|k| k as f64 * sample_rate as f64 / n_fft as f64).collect();
        let nearest = |target: f64| {
            freqs
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - target).abs().partial_cmp(&(b.1 - target).abs()).unwrap())
                .map(|(k, _)| k)
                .unwrap()
        };
        let mut ranges = Vec::with_capacity(n_bands);
        let mut centers = Vec::with_capacity(n_bands);
        for i in 0..n_bands {
            let k = i as f64;
            centers.push(min_freq * 2f64.powf(k / 3.0));
            let lo = min_freq * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = min_freq * 2f64.powf((2.0 * k + 1.0) / 6.0);
            ranges.push((nearest(lo), nearest(hi)));
        }
        Self { ranges, centers, sample_rate, n_fft }
    }

    pub fn n_bands(&self) -> usize {
        self.ranges.len()
    }

    /// Band amplitudes `sqrt(sum |X_k|^2)` for every frame (`frames x bands`).
    pub fn apply<S: Real>(&self, spec: &ComplexSpectrogram<S>) -> Result<Vec<Vec<f64>>> {
        if spec.sample_rate() != self.sample_rate || spec.config().n_fft != self.n_fft {
            return Err(Error::InvalidArgument(format!(
                "band layout expects {} Hz / {}-point FFT, got {} Hz / {}-point",
                self.sample_rate,
                self.n_fft,
                spec.sample_rate(),
                spec.config().n_fft
            )));
        }
        Ok((0..spec.n_frames())
            .map(|t| {
                let frame = spec.frame(t);
                self.ranges
                    .iter()
                    .map(|&(lo, hi)| {
                        frame[lo..hi].iter().map(|c| c.norm_sqr().as_f64()).sum::<f64>().sqrt()
                    })
                    .collect()
            })
            .collect())
    }
}

/// Standard 15-band one-third-octave analysis of a 10 kHz spectrogram.
pub fn third_octave_bands<S: Real>(spec: &ComplexSpectrogram<S>) -> Result<Vec<Vec<f64>>> {
    ThirdOctaveBands::standard().apply(spec)
}

fn erb_number(f: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * f).log10()
}

fn erb_number_inv(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) / 0.00437
}

/// Equivalent rectangular bandwidth (Glasberg & Moore) in Hz.
fn erb(f: f64) -> f64 {
    24.7 * (4.37 * f / 1000.0 + 1.0)
}

/// `n` center frequencies equally spaced on the ERB-number scale, endpoints included.
pub fn erb_space(f_lo: f64, f_hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![f_lo];
    }
    let (a, b) = (erb_number(f_lo), erb_number(f_hi));
    (0..n).map(|i| erb_number_inv(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// Power response of a 4th-order gammatone filter centered at `fc`.
pub fn gammatone_power_response(f: f64, fc: f64) -> f64 {
    let x = (f - fc) / (1.019 * erb(fc));
    (1.0 + x * x).powi(-4)
}

/// Frame layout and channel spacing of the gammatone front-end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammatoneConfig {
    pub n_filters: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub frame: usize,
    pub hop: usize,
    pub n_fft: usize,
}

impl Default for GammatoneConfig {
    fn default() -> Self {
        Self { n_filters: 31, f_lo: 100.0, f_hi: 6500.0, frame: 400, hop: 200, n_fft: 512 }
    }
}

/// Short-time channel energies (`frames x n_filters`) of a gammatone
/// filterbank applied in the frequency domain.
pub fn gammatone_bank<S: Real>(x: &Waveform<S>, cfg: GammatoneConfig) -> Result<Vec<Vec<f64>>> {
    let nyquist = x.sample_rate() as f64 / 2.0;
    if cfg.n_filters == 0 || !(cfg.f_lo > 0.0 && cfg.f_lo < cfg.f_hi && cfg.f_hi < nyquist) {
        return Err(Error::InvalidArgument(format!(
            "gammatone band edges {}..{} Hz invalid for Nyquist {nyquist} Hz",
            cfg.f_lo, cfg.f_hi
        )));
    }
    let stft_cfg = StftConfig { window_len: cfg.frame, hop: cfg.hop, n_fft: cfg.n_fft, centered: false };
    let spec = stft_with(x, stft_cfg)?;
    let centers = erb_space(cfg.f_lo, cfg.f_hi, cfg.n_filters);
    let bin_hz = x.sample_rate() as f64 / cfg.n_fft as f64;
    let weights: Vec<Vec<f64>> = centers
        .iter()
        .map(|&fc| (0..spec.n_bins()).map(|k| gammatone_power_response(k as f64 * bin_hz, fc)).collect())
        .collect();
    Ok((0..spec.n_frames())
        .map(|t| {
            let power: Vec<f64> = spec.frame(t).iter().map(|c| c.norm_sqr().as_f64()).collect();
            weights.iter().map(|w| w.iter().zip(&power).map(|(a, b)| a * b).sum()).collect()
        })
        .collect())
}
