use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ArchConfig, MaskDomain};
use super::pipeline::SpecFeatures;
use crate::dsp::{expand, MagSpectrogram, COMPRESSION_EXPONENT};
use crate::error::{Error, Result};
use crate::neural::{scale_activation_var, BiLstm, Dense, Graph, ParamStore, Tensor, Var, LEAKY_SLOPE};
use crate::scalar::Real;

/// Mask generator: two BLSTM layers, a LeakyReLU dense layer and a bounded
/// per-bin output layer.
#[derive(Clone, Debug)]
pub struct Generator<S> {
    arch: ArchConfig,
    store: ParamStore<S>,
    bl1: BiLstm,
    bl2: BiLstm,
    dense1: Dense,
    out: Dense,
}

/// Graph handles of one generator pass.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorVars {
    pub mask: Var,
    /// Energy-normalized, compressed enhanced magnitudes (`[frames, bins]`).
    pub enhanced_c: Var,
}

impl<S: Real> Generator<S> {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = arch.g_hidden;
        let bl1 = BiLstm::new(&mut store, "g.blstm1", arch.g_input(), h, &mut rng)?;
        let bl2 = BiLstm::new(&mut store, "g.blstm2", 2 * h, h, &mut rng)?;
        let dense1 = Dense::new(&mut store, "g.dense1", 2 * h, arch.g_dense, &mut rng)?;
        let out = Dense::new(&mut store, "g.dense_out", arch.g_dense, arch.n_bins, &mut rng)?;
        let scale = S::lit(arch.g_out_init_scale);
        store.get_mut(out.w).data_mut().iter_mut().for_each(|v| *v *= scale);
        Ok(Self { arch: arch.clone(), store, bl1, bl2, dense1, out })
    }

    /// Closed-form parameter count.
    pub fn num_params(arch: &ArchConfig) -> usize {
        let h = arch.g_hidden;
        BiLstm::num_params(arch.g_input(), h)
            + BiLstm::num_params(2 * h, h)
            + Dense::num_params(2 * h, arch.g_dense)
            + Dense::num_params(arch.g_dense, arch.n_bins)
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn store(&self) -> &ParamStore<S> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.store
    }

    pub fn output_layer(&self) -> &Dense {
        &self.out
    }

    /// Mask `[frames, bins]` from generator input `[frames, 2 * bins]`.
    pub fn mask_graph(&self, g: &mut Graph<S>, p: &[Var], input: Var) -> Result<Var> {
        let (_, width) = g.value(input).dims2()?;
        if width != self.arch.g_input() {
            return Err(Error::ShapeMismatch(format!(
                "generator input must be {} wide, got {width}",
                self.arch.g_input()
            )));
        }
        let h1 = self.bl1.forward(g, p, input)?;
        let h2 = self.bl2.forward(g, p, h1)?;
        let d1 = self.dense1.forward(g, p, h2)?;
        let a1 = g.leaky_relu(d1, S::lit(LEAKY_SLOPE));
        let m = self.out.forward(g, p, a1)?;
        Ok(scale_activation_var(g, m))
    }

    /// Mask and energy-normalized compressed enhancement for `feats`.
    pub fn graph(&self, g: &mut Graph<S>, p: &[Var], feats: &SpecFeatures<S>) -> Result<GeneratorVars> {
        self.graph_parts(g, p, &feats.speech_c, &feats.noise_c, feats.reference_energy())
    }

    /// As [`Generator::graph`], from compressed magnitudes and the linear
    /// energy the output must match.
    pub fn graph_parts(
        &self,
        g: &mut Graph<S>,
        p: &[Var],
        speech_c: &MagSpectrogram<S>,
        noise_c: &MagSpectrogram<S>,
        e_ref: f64,
    ) -> Result<GeneratorVars> {
        if !speech_c.is_compressed() || !noise_c.is_compressed() {
            return Err(Error::CompressionState("generator inputs must be compressed".into()));
        }
        if !speech_c.same_shape(noise_c) {
            return Err(Error::ShapeMismatch(format!(
                "speech {}x{} vs noise {}x{}",
                speech_c.n_frames(),
                speech_c.n_bins(),
                noise_c.n_frames(),
                noise_c.n_bins()
            )));
        }
        if speech_c.n_bins() != self.arch.n_bins {
            return Err(Error::ShapeMismatch(format!(
                "generator expects {} bins, got {}",
                self.arch.n_bins,
                speech_c.n_bins()
            )));
        }
        let nb = speech_c.n_bins();
        let mut features = Vec::with_capacity(speech_c.n_frames() * 2 * nb);
        for t in 0..speech_c.n_frames() {
            features.extend_from_slice(speech_c.frame(t));
            features.extend_from_slice(noise_c.frame(t));
        }
        let input = g.constant(Tensor::matrix(speech_c.n_frames(), 2 * nb, features)?);
        let mask = self.mask_graph(g, p, input)?;
        let speech_c = g.constant(SpecFeatures::as_matrix(speech_c));
        if !(e_ref > 0.0) {
            return Err(Error::DegenerateReference("speech spectrogram is all zero".into()));
        }
        let pexp = COMPRESSION_EXPONENT;
        let unnormalized = match self.arch.mask_domain {
            MaskDomain::Compressed => g.mul(mask, speech_c)?,
            MaskDomain::Linear => {
                let mp = g.pow_const(mask, S::lit(pexp));
                g.mul(mp, speech_c)?
            }
        };
        // (y^(1/p) * sqrt(E_ref / E))^p = y * (E_ref / E)^(p/2)
        let lin = g.pow_const(unnormalized, S::lit(1.0 / pexp));
        let energy = g.sum_squares(lin);
        let inv = g.pow_const(energy, S::lit(-pexp / 2.0));
        let factor = g.affine(inv, S::lit(e_ref.powf(pexp / 2.0)), S::zero());
        let enhanced_c = g.mul_scalar(unnormalized, factor)?;
        Ok(GeneratorVars { mask, enhanced_c })
    }

    /// Inference pass: the mask and the normalized compressed enhancement.
    pub fn forward(&self, feats: &SpecFeatures<S>) -> Result<(Tensor<S>, MagSpectrogram<S>)> {
        self.forward_parts(&feats.speech_c, &feats.noise_c, feats.reference_energy())
    }

    fn forward_parts(
        &self,
        speech_c: &MagSpectrogram<S>,
        noise_c: &MagSpectrogram<S>,
        e_ref: f64,
    ) -> Result<(Tensor<S>, MagSpectrogram<S>)> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let vars = self.graph_parts(&mut g, &p, speech_c, noise_c, e_ref)?;
        g.check_finite()?;
        let enh = g.value(vars.enhanced_c);
        let spec = MagSpectrogram::new(enh.data().to_vec(), speech_c.n_frames(), speech_c.n_bins(), true)?
            .with_exponent(S::lit(COMPRESSION_EXPONENT));
        Ok((g.value(vars.mask).clone(), spec))
    }
}

/// Runs the generator on compressed speech and noise magnitudes. The result
/// is compressed and carries the linear energy of the speech.
pub fn generator_forward<S: Real>(
    gen: &Generator<S>,
    speech_c: &MagSpectrogram<S>,
    noise_c: &MagSpectrogram<S>,
) -> Result<(Tensor<S>, MagSpectrogram<S>)> {
    if !speech_c.is_compressed() {
        return Err(Error::CompressionState("generator inputs must be compressed".into()));
    }
    let e_ref = expand(speech_c)?.energy();
    gen.forward_parts(speech_c, noise_c, e_ref)
}
