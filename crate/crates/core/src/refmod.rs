//! Rule-based reference modifier: spectral shaping followed by dynamic range
//! compression, at constant RMS and duration. Produces the enhanced examples
//! the discriminator learns from.

use serde::{Deserialize, Serialize};

use crate::dsp::{istft, match_rms, rms, stft_with, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Parameters of [`spectral_shape`] and [`drc`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingProfile {
    /// Gain of the plateau between `plateau_lo_hz` and `plateau_hi_hz`.
    pub formant_gain_db: f64,
    /// Below this frequency the gain falls at `tilt_db_per_octave`.
    pub tilt_corner_hz: f64,
    pub plateau_lo_hz: f64,
    pub plateau_hi_hz: f64,
    /// Upper end of the raised-cosine roll-off back to 0 dB.
    pub rolloff_end_hz: f64,
    pub tilt_db_per_octave: f64,
    pub attack_ms: f64,
    pub release_ms: f64,
    /// Static curve as (input dB, output dB) knee points. Identity below the
    /// first knee; the last segment's slope continues past the last knee.
    pub knees: Vec<(f64, f64)>,
}

impl Default for ShapingProfile {
    fn default() -> Self {
        Self {
            formant_gain_db: 12.0,
            tilt_corner_hz: 500.0,
            plateau_lo_hz: 1000.0,
            plateau_hi_hz: 4000.0,
            rolloff_end_hz: 8000.0,
            tilt_db_per_octave: 6.0,
            attack_ms: 2.0,
            release_ms: 50.0,
            knees: vec![(-20.0, -20.0), (0.0, -10.0)],
        }
    }
}

const MIN_SHAPING_HZ: f64 = 20.0;

impl ShapingProfile {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.formant_gain_db,
            self.tilt_corner_hz,
            self.plateau_lo_hz,
            self.plateau_hi_hz,
            self.rolloff_end_hz,
            self.tilt_db_per_octave,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("shaping profile values must be finite".into()));
        }
        if !(self.tilt_corner_hz > 0.0
            && self.tilt_corner_hz <= self.plateau_lo_hz
            && self.plateau_lo_hz <= self.plateau_hi_hz
            && self.plateau_hi_hz <= self.rolloff_end_hz)
        {
            return Err(Error::InvalidArgument("shaping corner frequencies must be increasing".into()));
        }
        if !(self.attack_ms > 0.0 && self.release_ms > 0.0) {
            return Err(Error::InvalidArgument("attack and release must be positive".into()));
        }
        if self.knees.is_empty() || self.knees.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidArgument("compression curve needs finite knee points".into()));
        }
        for w in self.knees.windows(2) {
            let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            if dx <= 0.0 || dy < 0.0 || dy > dx {
                return Err(Error::InvalidArgument(
                    "compression curve must be increasing in input with slopes in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    /// Shaping gain in dB at frequency `f`.
    pub fn gain_db(&self, f: f64) -> f64 {
        let g = self.formant_gain_db;
        let rc = |a: f64| 0.5 - 0.5 * (std::f64::consts::PI * a.clamp(0.0, 1.0)).cos();
        if f < self.tilt_corner_hz {
            self.tilt_db_per_octave * (f.max(MIN_SHAPING_HZ) / self.tilt_corner_hz).log2()
        } else if f < self.plateau_lo_hz {
            g * rc((f - self.tilt_corner_hz) / (self.plateau_lo_hz - self.tilt_corner_hz))
        } else if f <= self.plateau_hi_hz {
            g
        } else if f < self.rolloff_end_hz {
            g * rc((self.rolloff_end_hz - f) / (self.rolloff_end_hz - self.plateau_hi_hz))
        } else {
            0.0
        }
    }

    /// Static compression curve: output level for input level (both dB).
    pub fn curve_db(&self, level_db: f64) -> f64 {
        let k = &self.knees;
        if level_db <= k[0].0 {
            return level_db - k[0].0 + k[0].1;
        }
        for w in k.windows(2) {
            if level_db <= w[1].0 {
                let a = (level_db - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + a * (w[1].1 - w[0].1);
            }
        }
        let slope = match k.len() {
            1 => 1.0,
            n => (k[n - 1].1 - k[n - 2].1) / (k[n - 1].0 - k[n - 2].0),
        };
        let last = k[k.len() - 1];
        last.1 + slope * (level_db - last.0)
    }
}

/// Applies [`ShapingProfile::gain_db`] to every STFT frame.
pub fn spectral_shape<S: Real>(w: &Waveform<S>, profile: &ShapingProfile) -> Result<Waveform<S>> {
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cfg = StftConfig::default();
    let spec = stft_with(w, cfg)?;
    let nb = cfg.n_bins();
    let hz_per_bin = w.sample_rate() as f64 / cfg.n_fft as f64;
    let gains: Vec<S> = (0..nb).map(|k| S::lit(10f64.powf(profile.gain_db(k as f64 * hz_per_bin) / 20.0))).collect();
    let bins = spec.bins().chunks(nb).flat_map(|fr| fr.iter().zip(&gains).map(|(&c, &g)| c * g)).collect();
    let shaped = crate::dsp::ComplexSpectrogram::from_parts(
        bins,
        spec.n_frames(),
        cfg,
        spec.sample_rate(),
        spec.signal_len(),
    )?;
    istft(&shaped)
}

/// Linear gain the compressor applies at envelope level `env` (linear).
pub fn drc_gain(env: f64, profile: &ShapingProfile) -> f64 {
    let level = 20.0 * env.max(1e-10).log10();
    10f64.powf((profile.curve_db(level) - level) / 20.0)
}

/// Per-sample gains of the compressor driven by an attack/release follower
/// of `|x|`.
pub fn drc_gains<S: Real>(w: &Waveform<S>, profile: &ShapingProfile) -> Vec<f64> {
    let fs = w.sample_rate() as f64;
    let a_att = (-1.0 / (profile.attack_ms * 1e-3 * fs)).exp();
    let a_rel = (-1.0 / (profile.release_ms * 1e-3 * fs)).exp();
    let mut env = 0.0f64;
    w.samples()
        .iter()
        .map(|x| {
            let m = x.as_f64().abs();
            let a = if m > env { a_att } else { a_rel };
            env = a * env + (1.0 - a) * m;
            drc_gain(env, profile)
        })
        .collect()
}

/// Dynamic range compression, renormalized to the input RMS and clipped to
/// `[-1, 1]`.
pub fn drc<S: Real>(w: &Waveform<S>, profile: &ShapingProfile) -> Result<Waveform<S>> {
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    profile.validate()?;
    let gains = drc_gains(w, profile);
    let out: Vec<S> = w.samples().iter().zip(&gains).map(|(&x, &g)| x * S::lit(g)).collect();
    let out = Waveform::new(out, w.sample_rate())?;
    let target = rms(w)?;
    let out = if target > S::zero() { match_rms(&out, target)? } else { out };
    Ok(clip_unit(out))
}

fn clip_unit<S: Real>(w: Waveform<S>) -> Waveform<S> {
    let rate = w.sample_rate();
    let s = w.into_samples().into_iter().map(|v| v.max(-S::one()).min(S::one())).collect();
    Waveform::new(s, rate).expect("same length")
}

/// Enhanced example: `drc(spectral_shape(s))` at the RMS and length of `s`.
pub fn make_example<S: Real>(s: &Waveform<S>, profile: &ShapingProfile) -> Result<Waveform<S>> {
    profile.validate()?;
    let shaped = spectral_shape(s, profile)?;
    let compressed = drc(&shaped, profile)?;
    let target = rms(s)?;
    if target <= S::zero() {
        return Ok(compressed);
    }
    match_rms(&compressed, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_is_valid() {
        ShapingProfile::default().validate().unwrap();
        let mut p = ShapingProfile::default();
        p.knees = vec![(-20.0, -20.0), (0.0, -30.0)];
        assert!(p.validate().is_err());
        let mut p = ShapingProfile::default();
        p.attack_ms = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn gain_curve_shape() {
        let p = ShapingProfile::default();
        assert_eq!(p.gain_db(2000.0), 12.0);
        assert!((p.gain_db(250.0) + 6.0).abs() < 1e-12);
        assert!(p.gain_db(500.0).abs() < 1e-12);
        assert!((p.gain_db(750.0) - 6.0).abs() < 1e-9);
        assert!(p.gain_db(8000.0).abs() < 1e-12);
    }

    #[test]
    fn curve_is_two_to_one_above_threshold() {
        let p = ShapingProfile::default();
        assert_eq!(p.curve_db(-40.0), -40.0);
        assert_eq!(p.curve_db(-10.0), -15.0);
        assert_eq!(p.curve_db(10.0), -5.0);
        assert!((drc_gain(0.01, &p) - 1.0).abs() < 1e-12);
    }
}
