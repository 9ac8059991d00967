//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc kernel.

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Real;

const TAPS_PER_PHASE: usize = 32;
const KAISER_BETA: f64 = 8.0;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Precomputed polyphase filter for one `from -> to` rate pair.
#[derive(Clone, Debug)]
pub struct Resampler {
    up: usize,
    down: usize,
    /// `up` phases of `TAPS_PER_PHASE` taps, each phase normalized to unit DC gain.
    table: Vec<f64>,
    from: u32,
    to: u32,
}

impl Resampler {
    pub fn new(from: u32, to: u32) -> Result<Self> {
        if from == 0 || to == 0 {
            return Err(Error::InvalidArgument(format!("non-positive sample rate {from} -> {to}")));
        }
        let g = gcd(from as u64, to as u64);
        let up = (to as u64 / g) as usize;
        let down = (from as u64 / g) as usize;
        // Cutoff as a fraction of the input rate, below both Nyquist limits.
        let cutoff = 0.5 * (up as f64 / down as f64).min(1.0);
        let half = (TAPS_PER_PHASE / 2) as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let mut table = Vec::with_capacity(up * TAPS_PER_PHASE);
        for phase in 0..up {
            let frac = phase as f64 / up as f64;
            let start = table.len();
            for k in 0..TAPS_PER_PHASE {
                let tau = k as f64 - (half - 1.0) - frac;
                let x = tau / (half + 1.0);
                let window = if x.abs() < 1.0 {
                    bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / i0_beta
                } else {
                    0.0
                };
                table.push(2.0 * cutoff * sinc(2.0 * cutoff * tau) * window);
            }
            let sum: f64 = table[start..].iter().sum();
            table[start..].iter_mut().for_each(|h| *h /= sum);
        }
        Ok(Self { up, down, table, from, to })
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    pub fn process<S: Real>(&self, input: &[S]) -> Vec<S> {
        if self.up == self.down {
            return input.to_vec();
        }
        if input.is_empty() {
            return Vec::new();
        }
        let last = input.len() as isize - 1;
        let offset = (TAPS_PER_PHASE / 2) as isize - 1;
        (0..self.output_len(input.len()))
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as isize;
                let phase = pos % self.up;
                let taps = &self.table[phase * TAPS_PER_PHASE..(phase + 1) * TAPS_PER_PHASE];
                let acc: f64 = taps
                    .iter()
                    .enumerate()
                    .map(|(k, h)| {
                        // Input index base + tau, with tau = k - offset - frac.
                        let idx = (base + k as isize - offset).clamp(0, last);
                        h * input[idx as usize].as_f64()
                    })
                    .sum();
                S::lit(acc)
            })
            .collect()
    }

    pub fn rates(&self) -> (u32, u32) {
        (self.from, self.to)
    }
}

/// Resamples `w` to `target_rate`; the identity rate returns the input unchanged.
pub fn resample<S: Real>(w: &Waveform<S>, target_rate: u32) -> Result<Waveform<S>> {
    let r = Resampler::new(w.sample_rate(), target_rate)?;
    Waveform::new(r.process(w.samples()), target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peak_bin(x: &[f64], n: usize) -> usize {
        (1..n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &v) in x.iter().take(n).enumerate() {
                    let a = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                (k, re * re + im * im)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn identity_rate_is_exact() {
        let w = Waveform::new(vec![0.1f64, -0.2, 0.3], 16000).unwrap();
        assert_eq!(resample(&w, 16000).unwrap(), w);
    }

    #[test]
    fn rejects_zero_rate() {
        let w = Waveform::new(vec![0.1f64], 16000).unwrap();
        assert!(resample(&w, 0).is_err());
    }

    #[test]
    fn dc_is_preserved() {
        for (from, to) in [(44100, 10000), (16000, 44100), (44100, 16000)] {
            let w = Waveform::new(vec![0.25f64; 5000], from).unwrap();
            let y = resample(&w, to).unwrap();
            assert!(y.samples().iter().all(|v| (v - 0.25).abs() < 1e-3));
        }
    }

    #[test]
    fn output_length_tracks_ratio() {
        let w = Waveform::new(vec![0.0f64; 44100], 44100).unwrap();
        let y = resample(&w, 10000).unwrap();
        assert!((y.len() as i64 - 10000).abs() <= 1);
    }

    #[test]
    fn sine_frequency_survives_downsampling() {
        let fs = 44100;
        let x: Vec<f64> = (0..44100)
            .map(|n| (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / fs as f64).sin())
            .collect();
        let y = resample(&Waveform::new(x, fs).unwrap(), 10000).unwrap();
        // 1000-point DFT at 10 kHz: 10 Hz per bin, 1 kHz lands on bin 100.
        let k = peak_bin(&y.samples()[2000..], 1000);
        assert!((k as i64 - 100).abs() <= 1, "peak at bin {k}");
    }

    #[test]
    fn aliasing_tone_is_suppressed() {
        // 7 kHz is above the 5 kHz output Nyquist and must be filtered out.
        let fs = 44100;
        let x: Vec<f64> = (0..22050)
            .map(|n| (2.0 * std::f64::consts::PI * 7000.0 * n as f64 / fs as f64).sin())
            .collect();
        let y = resample(&Waveform::new(x, fs).unwrap(), 10000).unwrap();
        let interior = &y.samples()[100..y.len() - 100];
        let r = (interior.iter().map(|v| v * v).sum::<f64>() / interior.len() as f64).sqrt();
        assert!(r < 0.05, "alias rms {r}");
    }
}
