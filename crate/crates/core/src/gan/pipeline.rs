use crate::dsp::{compress, expand, match_rms, recombine, rms, stft, ComplexSpectrogram, MagSpectrogram, Waveform, COMPRESSION_EXPONENT};
use crate::error::{Error, Result};
use crate::neural::Tensor;
use crate::scalar::Real;

/// Spectral features of one (speech, noise) pair.
#[derive(Clone, Debug)]
pub struct SpecFeatures<S> {
    pub speech: ComplexSpectrogram<S>,
    pub speech_c: MagSpectrogram<S>,
    pub noise_c: MagSpectrogram<S>,
    pub speech_rms: S,
}

pub fn compressed_magnitude<S: Real>(w: &Waveform<S>) -> Result<MagSpectrogram<S>> {
    compress(&stft(w)?.magnitude(), S::lit(COMPRESSION_EXPONENT))
}

impl<S: Real> SpecFeatures<S> {
    pub fn new(speech: &Waveform<S>, noise: &Waveform<S>) -> Result<Self> {
        if speech.len() != noise.len() || speech.sample_rate() != noise.sample_rate() {
            return Err(Error::ShapeMismatch(format!(
                "speech {} samples at {} Hz vs noise {} samples at {} Hz",
                speech.len(),
                speech.sample_rate(),
                noise.len(),
                noise.sample_rate()
            )));
        }
        let spec = stft(speech)?;
        let speech_c = compress(&spec.magnitude(), S::lit(COMPRESSION_EXPONENT))?;
        let noise_c = compressed_magnitude(noise)?;
        Ok(Self { speech: spec, speech_c, noise_c, speech_rms: rms(speech)? })
    }

    pub fn n_frames(&self) -> usize {
        self.speech_c.n_frames()
    }

    pub fn n_bins(&self) -> usize {
        self.speech_c.n_bins()
    }

    /// A `[frames, bins]` magnitude matrix.
    pub fn as_matrix(m: &MagSpectrogram<S>) -> Tensor<S> {
        Tensor::matrix(m.n_frames(), m.n_bins(), m.mags().to_vec()).expect("consistent sizes")
    }

    /// Sum of squared linear speech magnitudes.
    pub fn reference_energy(&self) -> f64 {
        self.speech.magnitude().energy()
    }

    /// Waveform of an energy-normalized compressed spectrogram, using the
    /// speech phase, matched to the speech RMS and length.
    pub fn synthesize(&self, enhanced_c: &MagSpectrogram<S>) -> Result<Waveform<S>> {
        let lin = expand(enhanced_c)?;
        let w = recombine(&lin, &self.speech)?;
        if self.speech_rms > S::zero() {
            match_rms(&w, self.speech_rms)
        } else {
            Ok(w)
        }
    }
}
