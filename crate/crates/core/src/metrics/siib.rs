//! Speech intelligibility in bits, Gaussian-capacity variant.
//!
//! Log-energy gammatone features of the clean reference are decorrelated with
//! a Karhunen-Loeve transform; the degraded features are projected onto the
//! same basis and each component contributes the capacity of a Gaussian
//! channel with correlation `rho_k`, capped by the speech production noise.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dsp::{gammatone_bank, remove_silent_frames, resample, GammatoneConfig, SilenceConfig, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiibConfig {
    pub sample_rate: u32,
    pub gammatone: GammatoneConfig,
    pub silence: SilenceConfig,
    /// Correlation between the message and the clean features.
    pub production_corr: f64,
    /// Minimum number of active feature frames.
    pub min_frames: usize,
}

impl Default for SiibConfig {
    fn default() -> Self {
        let gammatone = GammatoneConfig::default();
        Self {
            sample_rate: 16_000,
            gammatone,
            silence: SilenceConfig { dyn_range_db: 40.0, frame: gammatone.frame, hop: gammatone.hop },
            production_corr: 0.75,
            // 1.5 s at 80 frames/s
            min_frames: 120,
        }
    }
}

impl SiibConfig {
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.gammatone.hop as f64
    }

    /// Information rate of a perfectly transmitted signal (all `rho_k = 1`).
    pub fn ceiling(&self) -> f64 {
        let r2 = self.production_corr * self.production_corr;
        self.gammatone.n_filters as f64 * -0.5 * (1.0 - r2).log2() * self.frame_rate()
    }
}

fn log_features(energies: &[Vec<f64>], floor: f64) -> DMatrix<f64> {
    let (rows, cols) = (energies.len(), energies[0].len());
    DMatrix::from_fn(rows, cols, |t, j| (energies[t][j] + floor).ln())
}

fn center_columns(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// SIIB in bits per second with the default configuration.
pub fn siib<S: Real>(reference: &Waveform<S>, degraded: &Waveform<S>) -> Result<f64> {
    siib_with(reference, degraded, &SiibConfig::default())
}

pub fn siib_with<S: Real>(reference: &Waveform<S>, degraded: &Waveform<S>, cfg: &SiibConfig) -> Result<f64> {
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
    let x = resample(&reference.cast::<f64>(), cfg.sample_rate)?;
    let y = resample(&degraded.cast::<f64>(), cfg.sample_rate)?;
    let (x, y) = remove_silent_frames(&x, &y, cfg.silence)?;
    let ex = gammatone_bank(&x, cfg.gammatone)?;
    let ey = gammatone_bank(&y, cfg.gammatone)?;
    if ex.len() < cfg.min_frames {
        return Err(Error::InsufficientSpeech(format!(
            "{} active frames, need at least {}",
            ex.len(),
            cfg.min_frames
        )));
    }
    // Floor tied to the reference level so that a common gain cancels out.
    let mean_energy = ex.iter().flatten().sum::<f64>() / (ex.len() * ex[0].len()) as f64;
    let floor = 1e-8 * mean_energy + f64::MIN_POSITIVE;
    let mut fx = log_features(&ex, floor);
    let mut fy = log_features(&ey, floor);
    center_columns(&mut fx);
    center_columns(&mut fy);
    let cov = fx.transpose() * &fx / (fx.nrows() as f64 - 1.0);
    let basis = SymmetricEigen::new(cov).eigenvectors;
    let px = &fx * &basis;
    let py = &fy * &basis;
    let r2 = cfg.production_corr * cfg.production_corr;
    let bits_per_frame: f64 = (0..basis.ncols())
        .map(|k| {
            let a: Vec<f64> = px.column(k).iter().copied().collect();
            let b: Vec<f64> = py.column(k).iter().copied().collect();
            let rho = correlation(&a, &b);
            -0.5 * (1.0 - r2 * rho * rho).log2()
        })
        .sum();
    Ok((bits_per_frame * cfg.frame_rate()).max(0.0))
}
