//! Hermetic stand-in corpus: formant-filtered harmonic complexes with
//! fricative bursts as "speech", and spectrally tilted noise as the masker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{match_rms, Waveform};
use crate::error::Result;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyConfig {
    pub sample_rate: u32,
    pub speech_secs: f64,
    pub noise_secs: f64,
    /// RMS of every generated speech and noise signal.
    pub level_rms: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { sample_rate: 16_000, speech_secs: 2.5, noise_secs: 8.0, level_rms: 0.05 }
    }
}

/// Two-pole resonator (constant 0 dB peak gain band-pass).
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, fs: f64) -> Self {
        let r = (-std::f64::consts::PI * bandwidth / fs).exp();
        let theta = 2.0 * std::f64::consts::PI * freq / fs;
        Self { a1: 2.0 * r * theta.cos(), a2: -r * r, gain: 1.0 - r, y1: 0.0, y2: 0.0 }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn formant_gain(f: f64, formants: &[(f64, f64, f64)]) -> f64 {
    let tilt = (f / 150.0).max(1.0).powf(-0.6);
    tilt * formants.iter().map(|&(fc, bw, g)| g / (1.0 + ((f - fc) / bw).powi(2))).sum::<f64>()
}

fn raised_cosine_envelope(i: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    let edge = |k: usize| 0.5 - 0.5 * (std::f64::consts::PI * k as f64 / ramp as f64).cos();
    if i < ramp {
        edge(i)
    } else if i + ramp >= len {
        edge(len - 1 - i)
    } else {
        1.0
    }
}

fn voiced_syllable(rng: &mut ChaCha8Rng, len: usize, fs: f64) -> Vec<f64> {
    let f0_start = rng.random_range(100.0..220.0);
    let f0_end = f0_start * rng.random_range(0.8..1.2);
    let start = [
        (rng.random_range(300.0..850.0), 90.0, 1.0),
        (rng.random_range(850.0..2400.0), 130.0, 0.6),
        (rng.random_range(2300.0..3400.0), 200.0, 0.35),
    ];
    let end: Vec<(f64, f64, f64)> =
        start.iter().map(|&(f, b, g)| (f * rng.random_range(0.85..1.15), b, g)).collect();
    let mut phase = 0.0;
    let mut out = vec![0.0; len];
    let ramp = (0.025 * fs) as usize;
    for (i, o) in out.iter_mut().enumerate() {
        let a = i as f64 / len as f64;
        let f0 = f0_start + (f0_end - f0_start) * a;
        phase += 2.0 * std::f64::consts::PI * f0 / fs;
        let formants: Vec<(f64, f64, f64)> = start
            .iter()
            .zip(&end)
            .map(|(s, e)| (s.0 + (e.0 - s.0) * a, s.1, s.2))
            .collect();
        let n_harm = ((0.45 * fs) / f0) as usize;
        let mut v = 0.0;
        for h in 1..=n_harm {
            v += formant_gain(h as f64 * f0, &formants) * (h as f64 * phase).sin();
        }
        *o = v * raised_cosine_envelope(i, len, ramp);
    }
    out
}

fn fricative_syllable(rng: &mut ChaCha8Rng, len: usize, fs: f64) -> Vec<f64> {
    let centre = rng.random_range(2500.0..(0.4 * fs).min(6000.0));
    let mut res = Resonator::new(centre, rng.random_range(600.0..1500.0), fs);
    let ramp = (0.015 * fs) as usize;
    (0..len)
        .map(|i| {
            let x: f64 = StandardNormal.sample(rng);
            res.tick(x) * raised_cosine_envelope(i, len, ramp)
        })
        .collect()
}

/// Synthesizes one seeded toy utterance of `cfg.speech_secs` seconds.
pub fn toy_speech<S: Real>(cfg: &ToyConfig, seed: u64) -> Result<Waveform<S>> {
    let fs = cfg.sample_rate as f64;
    let total = (cfg.speech_secs * fs) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5bee_c4u64);
    let mut out = vec![0.0f64; total];
    let mut pos = (rng.random_range(0.08..0.18) * fs) as usize;
    let tail = (0.1 * fs) as usize;
    while pos + tail < total {
        let len = ((rng.random_range(0.14..0.32) * fs) as usize).min(total - tail - pos);
        if len < (0.05 * fs) as usize {
            break;
        }
        let level = 10f64.powf(rng.random_range(-6.0..3.0) / 20.0);
        let syl = if rng.random_bool(0.2) {
            fricative_syllable(&mut rng, len, fs)
        } else {
            voiced_syllable(&mut rng, len, fs)
        };
        let peak = syl.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for (o, v) in out[pos..pos + len].iter_mut().zip(&syl) {
            *o += level * v / peak;
        }
        pos += len + (rng.random_range(0.03..0.12) * fs) as usize;
    }
    let w = Waveform::new(out.into_iter().map(S::lit).collect(), cfg.sample_rate)?;
    match_rms(&w, S::lit(cfg.level_rms))
}

/// Seeded masker: Gaussian noise with a one-pole (-6 dB/octave) roll-off
/// above 1 kHz, a weak white floor and a slow level wobble.
pub fn toy_noise<S: Real>(cfg: &ToyConfig, seed: u64) -> Result<Waveform<S>> {
    let fs = cfg.sample_rate as f64;
    let n = (cfg.noise_secs * fs) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a15_e5ee_dd);
    let a = (-2.0 * std::f64::consts::PI * 1000.0 / fs).exp();
    let mut lp = 0.0;
    let wobble_hz = rng.random_range(0.5..2.0);
    let wobble_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let samples: Vec<S> = (0..n)
        .map(|i| {
            let x: f64 = StandardNormal.sample(&mut rng);
            lp = a * lp + (1.0 - a) * x;
            let floor: f64 = StandardNormal.sample(&mut rng);
            let wobble = 1.0 + 0.3 * (std::f64::consts::TAU * wobble_hz * i as f64 / fs + wobble_phase).sin();
            S::lit(wobble * (lp + 0.05 * floor))
        })
        .collect();
    match_rms(&Waveform::new(samples, cfg.sample_rate)?, S::lit(cfg.level_rms))
}
