//! Extended short-time objective intelligibility.

use crate::dsp::{remove_silent_frames, resample, stft_with, SilenceConfig, StftConfig, ThirdOctaveBands, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const ESTOI_RATE: u32 = 10_000;
/// Frames per envelope segment.
pub const SEGMENT_FRAMES: usize = 30;

const EPS: f64 = 1e-12;

fn analysis() -> StftConfig {
    StftConfig { window_len: 512, hop: 256, n_fft: 512, centered: false }
}

/// Subtracts the mean and scales to unit L2 norm.
fn standardize(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt() + EPS;
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Row-then-column normalized copy of one `bands x frames` segment.
fn normalized_segment(env: &[Vec<f64>], start: usize) -> Vec<Vec<f64>> {
    let n_bands = env[0].len();
    // rows: one band envelope over the segment
    let mut rows: Vec<Vec<f64>> = (0..n_bands)
        .map(|j| (start..start + SEGMENT_FRAMES).map(|t| env[t][j]).collect())
        .collect();
    rows.iter_mut().for_each(|r| standardize(r));
    // columns: one spectral snapshot across bands
    let mut cols: Vec<Vec<f64>> = (0..SEGMENT_FRAMES).map(|n| rows.iter().map(|r| r[n]).collect()).collect();
    cols.iter_mut().for_each(|c| standardize(c));
    cols
}

/// ESTOI of `degraded` against `reference`; roughly 0 (unintelligible) to 1.
pub fn estoi<S: Real>(reference: &Waveform<S>, degraded: &Waveform<S>) -> Result<f64> {
    if reference.len() != degraded.len() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} samples, degraded {}",
            reference.len(),
            degraded.len()
        )));
    }
    if reference.sample_rate() != degraded.sample_rate() {
        return Err(Error::ShapeMismatch("sample rates differ".into()));
    }
    let x = resample(&reference.cast::<f64>(), ESTOI_RATE)?;
    let y = resample(&degraded.cast::<f64>(), ESTOI_RATE)?;
    let (x, y) = remove_silent_frames(&x, &y, SilenceConfig::default())?;
    let bands = ThirdOctaveBands::standard();
    let x_env = bands.apply(&stft_with(&x, analysis())?)?;
    let y_env = bands.apply(&stft_with(&y, analysis())?)?;
    let n_frames = x_env.len();
    if n_frames < SEGMENT_FRAMES {
        return Err(Error::SignalTooShort(format!(
            "{n_frames} active frames, need at least {SEGMENT_FRAMES}"
        )));
    }
    let n_segments = n_frames - SEGMENT_FRAMES + 1;
    let total: f64 = (0..n_segments)
        .map(|m| {
            let xs = normalized_segment(&x_env, m);
            let ys = normalized_segment(&y_env, m);
            xs.iter()
                .zip(&ys)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>())
                .sum::<f64>()
                / SEGMENT_FRAMES as f64
        })
        .sum();
    Ok(total / n_segments as f64)
}
