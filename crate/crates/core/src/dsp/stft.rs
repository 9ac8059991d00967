//! Short-time Fourier analysis/synthesis and magnitude-domain helpers.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Power-law exponent applied to magnitude features.
pub const COMPRESSION_EXPONENT: f64 = 0.3;

/// Frame layout of a short-time transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    /// FFT size; frames shorter than this are zero-padded.
    pub n_fft: usize,
    /// Pad `window_len / 2` zeros at the start (and enough at the end for
    /// every sample to be covered by two frames).
    pub centered: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_len: 1024, hop: 512, n_fft: 1024, centered: true }
    }
}

impl StftConfig {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 || self.n_fft < self.window_len {
            return Err(Error::InvalidArgument(format!("invalid STFT layout {self:?}")));
        }
        Ok(())
    }

    /// Leading and trailing padding for a signal of `len` samples.
    fn padding(&self, len: usize) -> (usize, usize) {
        if self.centered {
            let lead = self.window_len / 2;
            let rem = len % self.hop;
            let fill = if rem == 0 { 0 } else { self.hop - rem };
            (lead, lead + fill)
        } else if len < self.window_len {
            (0, self.window_len - len)
        } else {
            (0, 0)
        }
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        let (lead, trail) = self.padding(len);
        let padded = len + lead + trail;
        (padded - self.window_len) / self.hop + 1
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic<S: Real>(n: usize) -> Vec<S> {
    (0..n)
        .map(|i| S::lit(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// One-sided complex spectrogram, stored frame-major (`frames x bins`).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram<S> {
    bins: Vec<Complex<S>>,
    n_frames: usize,
    config: StftConfig,
    sample_rate: u32,
    signal_len: usize,
}

impl<S: Real> ComplexSpectrogram<S> {
    /// Builds a spectrogram from raw bins; `signal_len` is the length of the
    /// waveform that synthesis should produce.
    pub fn from_parts(
        bins: Vec<Complex<S>>,
        n_frames: usize,
        config: StftConfig,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        config.validate()?;
        let n_bins = config.n_bins();
        if n_frames == 0 || bins.len() != n_frames * n_bins {
            return Err(Error::ShapeMismatch(format!(
                "expected {n_frames} frames x {n_bins} bins, got {} values",
                bins.len()
            )));
        }
        Ok(Self { bins, n_frames, config, sample_rate, signal_len })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.config.n_bins()
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn bins(&self) -> &[Complex<S>] {
        &self.bins
    }

    pub fn frame(&self, t: usize) -> &[Complex<S>] {
        let nb = self.n_bins();
        &self.bins[t * nb..(t + 1) * nb]
    }

    /// Uncompressed magnitudes.
    pub fn magnitude(&self) -> MagSpectrogram<S> {
        MagSpectrogram {
            mags: self.bins.iter().map(|c| c.norm()).collect(),
            n_frames: self.n_frames,
            n_bins: self.n_bins(),
            compressed: false,
            p: S::lit(COMPRESSION_EXPONENT),
        }
    }

    pub fn scaled(&self, gain: S) -> Self {
        let mut out = self.clone();
        out.bins.iter_mut().for_each(|c| *c = *c * gain);
        out
    }
}

/// Real, non-negative magnitude spectrogram (`frames x bins`), optionally
/// power-law compressed.
#[derive(Clone, Debug, PartialEq)]
pub struct MagSpectrogram<S> {
    mags: Vec<S>,
    n_frames: usize,
    n_bins: usize,
    compressed: bool,
    p: S,
}

impl<S: Real> MagSpectrogram<S> {
    pub fn new(mags: Vec<S>, n_frames: usize, n_bins: usize, compressed: bool) -> Result<Self> {
        if mags.len() != n_frames * n_bins {
            return Err(Error::ShapeMismatch(format!(
                "expected {n_frames} x {n_bins} magnitudes, got {}",
                mags.len()
            )));
        }
        if let Some(v) = mags.iter().find(|v| !v.is_finite() || **v < S::zero()) {
            return Err(Error::InvalidArgument(format!("magnitude {v} is negative or non-finite")));
        }
        Ok(Self { mags, n_frames, n_bins, compressed, p: S::lit(COMPRESSION_EXPONENT) })
    }

    pub fn with_exponent(mut self, p: S) -> Self {
        self.p = p;
        self
    }

    pub fn mags(&self) -> &[S] {
        &self.mags
    }

    pub fn into_mags(self) -> Vec<S> {
        self.mags
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn is_compressed(&self) -> bool {
        self.compressed
    }

    pub fn exponent(&self) -> S {
        self.p
    }

    pub fn frame(&self, t: usize) -> &[S] {
        &self.mags[t * self.n_bins..(t + 1) * self.n_bins]
    }

    /// Sum of squared entries.
    pub fn energy(&self) -> f64 {
        self.mags.iter().map(|v| v.as_f64() * v.as_f64()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_frames == other.n_frames && self.n_bins == other.n_bins
    }

    pub fn scaled(&self, gain: S) -> Self {
        let mut out = self.clone();
        out.mags.iter_mut().for_each(|v| *v *= gain);
        out
    }
}

/// STFT with the default 1024/512 periodic-Hann layout.
pub fn stft<S: Real>(w: &Waveform<S>) -> Result<ComplexSpectrogram<S>> {
    stft_with(w, StftConfig::default())
}

pub fn stft_with<S: Real>(w: &Waveform<S>, config: StftConfig) -> Result<ComplexSpectrogram<S>> {
    config.validate()?;
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    let len = w.len();
    let (lead, trail) = config.padding(len);
    let mut padded = vec![S::zero(); lead + len + trail];
    padded[lead..lead + len].copy_from_slice(w.samples());
    let n_frames = config.n_frames(len);
    let n_bins = config.n_bins();
    let window = hann_periodic::<S>(config.window_len);
    let fft = FftPlanner::<S>::new().plan_fft_forward(config.n_fft);
    let mut buf = vec![Complex::new(S::zero(), S::zero()); config.n_fft];
    let mut bins = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        let start = t * config.hop;
        buf.iter_mut().for_each(|c| *c = Complex::new(S::zero(), S::zero()));
        for (i, (&x, &wv)) in padded[start..start + config.window_len].iter().zip(&window).enumerate() {
            buf[i] = Complex::new(x * wv, S::zero());
        }
        fft.process(&mut buf);
        bins.extend_from_slice(&buf[..n_bins]);
    }
    Ok(ComplexSpectrogram { bins, n_frames, config, sample_rate: w.sample_rate(), signal_len: len })
}

/// Weighted overlap-add synthesis with the analysis window.
pub fn istft<S: Real>(s: &ComplexSpectrogram<S>) -> Result<Waveform<S>> {
    let config = s.config;
    config.validate()?;
    let n_bins = config.n_bins();
    if s.bins.len() != s.n_frames * n_bins {
        return Err(Error::ShapeMismatch(format!(
            "bin count {} inconsistent with {} frames of {n_bins} bins",
            s.bins.len(),
            s.n_frames
        )));
    }
    let (lead, _) = config.padding(s.signal_len);
    let out_len = (s.n_frames - 1) * config.hop + config.window_len;
    let window = hann_periodic::<S>(config.window_len);
    let ifft = FftPlanner::<S>::new().plan_fft_inverse(config.n_fft);
    let norm = S::one() / S::lit(config.n_fft as f64);
    let mut acc = vec![S::zero(); out_len.max(lead + s.signal_len)];
    let mut wsum = vec![S::zero(); acc.len()];
    let mut buf = vec![Complex::new(S::zero(), S::zero()); config.n_fft];
    for t in 0..s.n_frames {
        let frame = s.frame(t);
        buf[..n_bins].copy_from_slice(frame);
        // Hermitian completion: DC and Nyquist must be real for a real signal.
        buf[0].im = S::zero();
        if config.n_fft % 2 == 0 {
            buf[n_bins - 1].im = S::zero();
        }
        for k in n_bins..config.n_fft {
            buf[k] = buf[config.n_fft - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * config.hop;
        for i in 0..config.window_len {
            acc[start + i] += buf[i].re * norm * window[i];
            wsum[start + i] += window[i] * window[i];
        }
    }
    let tiny = S::lit(1e-10);
    let samples = (0..s.signal_len)
        .map(|i| {
            let ws = wsum[lead + i];
            if ws > tiny {
                acc[lead + i] / ws
            } else {
                S::zero()
            }
        })
        .collect();
    Waveform::new(samples, s.sample_rate)
}

/// Combines (uncompressed) magnitudes with the phase of `phase_source` and
/// synthesizes a waveform.
pub fn recombine<S: Real>(
    modified_mag: &MagSpectrogram<S>,
    phase_source: &ComplexSpectrogram<S>,
) -> Result<Waveform<S>> {
    if modified_mag.compressed {
        return Err(Error::CompressionState("recombine needs linear magnitudes".into()));
    }
    if modified_mag.n_frames != phase_source.n_frames || modified_mag.n_bins != phase_source.n_bins() {
        return Err(Error::ShapeMismatch(format!(
            "magnitudes {}x{} vs phase source {}x{}",
            modified_mag.n_frames,
            modified_mag.n_bins,
            phase_source.n_frames,
            phase_source.n_bins()
        )));
    }
    let bins = modified_mag
        .mags
        .iter()
        .zip(&phase_source.bins)
        .map(|(&m, c)| {
            let r = c.norm();
            if r > S::zero() {
                *c * (m / r)
            } else {
                Complex::new(m, S::zero())
            }
        })
        .collect();
    let spec = ComplexSpectrogram { bins, ..phase_source.clone() };
    istft(&spec)
}

/// Entrywise `mag^p`.
pub fn compress<S: Real>(m: &MagSpectrogram<S>, p: S) -> Result<MagSpectrogram<S>> {
    if m.compressed {
        return Err(Error::CompressionState("spectrogram is already compressed".into()));
    }
    if !(p > S::zero()) {
        return Err(Error::InvalidArgument("compression exponent must be positive".into()));
    }
    Ok(MagSpectrogram {
        mags: m.mags.iter().map(|v| v.powf(p)).collect(),
        compressed: true,
        p,
        ..*m
    })
}

/// Entrywise `mag^(1/p)`, undoing [`compress`].
pub fn expand<S: Real>(m: &MagSpectrogram<S>) -> Result<MagSpectrogram<S>> {
    if !m.compressed {
        return Err(Error::CompressionState("spectrogram is not compressed".into()));
    }
    let inv = S::one() / m.p;
    Ok(MagSpectrogram { mags: m.mags.iter().map(|v| v.powf(inv)).collect(), compressed: false, ..*m })
}

/// Rescales `modified` so its total squared magnitude equals that of
/// `reference`. Both must be linear magnitudes.
pub fn energy_normalize<S: Real>(
    modified: &MagSpectrogram<S>,
    reference: &MagSpectrogram<S>,
) -> Result<MagSpectrogram<S>> {
    if modified.compressed || reference.compressed {
        return Err(Error::CompressionState("energy normalization needs linear magnitudes".into()));
    }
    if !modified.same_shape(reference) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            modified.n_frames, modified.n_bins, reference.n_frames, reference.n_bins
        )));
    }
    let e_ref = reference.energy();
    if e_ref <= 0.0 {
        return Err(Error::DegenerateReference("reference spectrogram is all zero".into()));
    }
    let e_mod = modified.energy();
    if e_mod <= 0.0 {
        return Err(Error::DegenerateEnhancement("modified spectrogram is all zero".into()));
    }
    Ok(modified.scaled(S::lit((e_ref / e_mod).sqrt())))
}
