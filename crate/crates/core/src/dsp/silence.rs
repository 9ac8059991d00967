use super::{hann_periodic, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Frame layout and threshold for silent-frame removal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SilenceConfig {
    pub dyn_range_db: f64,
    pub frame: usize,
    pub hop: usize,
}

impl Default for SilenceConfig {
    fn default() -> Self {
        Self { dyn_range_db: 40.0, frame: 256, hop: 128 }
    }
}

fn frame_count(len: usize, frame: usize, hop: usize) -> usize {
    if len <= frame {
        1
    } else {
        (len - frame) / hop + 1
    }
}

fn windowed_frame<S: Real>(x: &[S], start: usize, window: &[S]) -> Vec<S> {
    window
        .iter()
        .enumerate()
        .map(|(i, &w)| x.get(start + i).map_or(S::zero(), |&v| v * w))
        .collect()
}

/// Per-frame activity of `reference`: a frame is active when its windowed
/// energy is within `dyn_range_db` of the loudest frame.
pub(crate) fn frame_activity<S: Real>(reference: &[S], cfg: &SilenceConfig) -> Vec<bool> {
    let window = hann_periodic::<S>(cfg.frame);
    let n = frame_count(reference.len(), cfg.frame, cfg.hop);
    let norms: Vec<f64> = (0..n)
        .map(|t| {
            windowed_frame(reference, t * cfg.hop, &window)
                .iter()
                .map(|v| v.as_f64() * v.as_f64())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![false; n];
    }
    let max_db = 20.0 * max.log10();
    norms
        .iter()
        .map(|&e| e > 0.0 && 20.0 * e.log10() > max_db - cfg.dyn_range_db)
        .collect()
}

/// Drops frames where the reference is silent from both signals and
/// re-synthesizes the survivors by overlap-add.
pub fn remove_silent_frames<S: Real>(
    reference: &Waveform<S>,
    degraded: &Waveform<S>,
    cfg: SilenceConfig,
) -> Result<(Waveform<S>, Waveform<S>)> {
    if reference.len() != degraded.len() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} samples, degraded {}",
            reference.len(),
            degraded.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    if cfg.frame == 0 || cfg.hop == 0 || cfg.hop > cfg.frame {
        return Err(Error::InvalidArgument(format!("invalid framing {cfg:?}")));
    }
    let active = frame_activity(reference.samples(), &cfg);
    let kept: Vec<usize> = active.iter().enumerate().filter(|(_, &a)| a).map(|(t, _)| t).collect();
    if kept.is_empty() {
        return Err(Error::NoActiveSpeech);
    }
    let window = hann_periodic::<S>(cfg.frame);
    let out_len = (kept.len() - 1) * cfg.hop + cfg.frame;
    let rebuild = |x: &[S]| {
        let mut out = vec![S::zero(); out_len];
        for (j, &t) in kept.iter().enumerate() {
            for (i, v) in windowed_frame(x, t * cfg.hop, &window).into_iter().enumerate() {
                out[j * cfg.hop + i] += v;
            }
        }
        out
    };
    Ok((
        Waveform::new(rebuild(reference.samples()), reference.sample_rate())?,
        Waveform::new(rebuild(degraded.samples()), degraded.sample_rate())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    #[test]
    fn fully_active_signal_keeps_its_length_and_interior() {
        let len = 256 + 128 * 40;
        let x = Waveform::new(noise(len, 1), 10000).unwrap();
        let (r, d) = remove_silent_frames(&x, &x, SilenceConfig::default()).unwrap();
        assert_eq!(r.len(), len);
        assert_eq!(r, d);
        for i in 128..len - 128 {
            assert!((r.samples()[i] - x.samples()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn appended_silence_is_removed() {
        let mut s = noise(128 * 30, 2);
        let active_len = s.len();
        s.extend(std::iter::repeat_n(0.0, 128 * 20));
        let x = Waveform::new(s, 10000).unwrap();
        let (r, _) = remove_silent_frames(&x, &x, SilenceConfig::default()).unwrap();
        // Frame-energy oracle: frames starting before the end of the active part
        // contain speech, later ones are digital silence.
        let kept = active_len / 128;
        assert_eq!(r.len(), (kept - 1) * 128 + 256);
        assert!(r.samples()[active_len..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_active_input_keeps_exactly_the_active_frames() {
        let half = 128 * 25;
        let mut s = vec![0.0; half];
        s.extend(noise(half, 3));
        let x = Waveform::new(s, 10000).unwrap();
        let cfg = SilenceConfig::default();
        let activity = frame_activity(x.samples(), &cfg);
        let oracle: Vec<bool> = (0..activity.len())
            .map(|t| x.samples()[t * 128..t * 128 + 256].iter().any(|&v| v != 0.0))
            .collect();
        assert_eq!(activity, oracle);
        let (r, d) = remove_silent_frames(&x, &x.scaled(0.5), cfg).unwrap();
        let n_active = oracle.iter().filter(|&&a| a).count();
        assert_eq!(r.len(), (n_active - 1) * 128 + 256);
        for (a, b) in r.samples().iter().zip(d.samples()) {
            assert!((0.5 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn silence_only_is_an_error() {
        let z = Waveform::<f64>::zeros(4000, 10000);
        assert!(matches!(
            remove_silent_frames(&z, &z, SilenceConfig::default()),
            Err(Error::NoActiveSpeech)
        ));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = Waveform::<f64>::zeros(400, 10000);
        let b = Waveform::<f64>::zeros(401, 10000);
        assert!(remove_silent_frames(&a, &b, SilenceConfig::default()).is_err());
    }
}
