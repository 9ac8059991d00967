use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ArchConfig;
use crate::dsp::MagSpectrogram;
use crate::error::{Error, Result};
use crate::neural::{Conv2d, Dense, Graph, ParamId, ParamStore, SpectralNormState, Tensor, Var, LEAKY_SLOPE};
use crate::scalar::Real;

/// Metric predictor over 3-channel (processed, unprocessed, noise) compressed
/// spectrograms. Every layer is spectrally normalized.
#[derive(Clone, Debug)]
pub struct Discriminator<S> {
    arch: ArchConfig,
    k: usize,
    store: ParamStore<S>,
    convs: Vec<Conv2d>,
    dense: Vec<Dense>,
    /// One state per weight: convolutions first, then dense layers.
    sn: Vec<SpectralNormState<S>>,
}

pub const D_INPUT_CHANNELS: usize = 3;

impl<S: Real> Discriminator<S> {
    pub fn new(arch: &ArchConfig, k: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        if !(1..=2).contains(&k) {
            return Err(Error::InvalidArgument(format!("discriminator needs 1 or 2 outputs, got {k}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut convs = Vec::new();
        let mut c_in = D_INPUT_CHANNELS;
        for (i, (&c, &kern)) in arch.d_channels.iter().zip(&arch.d_kernels).enumerate() {
            let name = format!("d.conv{}", i + 1);
            convs.push(Conv2d::new(&mut store, &name, c_in, c, (kern, kern), (arch.d_freq_stride, 1), &mut rng)?);
            c_in = c;
        }
        let mut dense = Vec::new();
        for (i, &n) in arch.d_dense.iter().chain(std::iter::once(&k)).enumerate() {
            dense.push(Dense::new(&mut store, &format!("d.dense{}", i + 1), c_in, n, &mut rng)?);
            c_in = n;
        }
        let weights: Vec<ParamId> = convs.iter().map(|c| c.w).chain(dense.iter().map(|d| d.w)).collect();
        let sn = weights.iter().map(|&w| SpectralNormState::for_weight(store.get(w), &mut rng)).collect();
        Ok(Self { arch: arch.clone(), k, store, convs, dense, sn })
    }

    /// Closed-form parameter count.
    pub fn num_params(arch: &ArchConfig, k: usize) -> usize {
        let mut c_in = D_INPUT_CHANNELS;
        let mut n = 0;
        for (&c, &kern) in arch.d_channels.iter().zip(&arch.d_kernels) {
            n += Conv2d::num_params(c_in, c, (kern, kern));
            c_in = c;
        }
        for &d in arch.d_dense.iter().chain(std::iter::once(&k)) {
            n += Dense::num_params(c_in, d);
            c_in = d;
        }
        n
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn outputs(&self) -> usize {
        self.k
    }

    pub fn store(&self) -> &ParamStore<S> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.store
    }

    fn weight_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.convs.iter().map(|c| c.w).chain(self.dense.iter().map(|d| d.w))
    }

    /// Names of the spectrally normalized weights, in state order.
    pub fn sn_weight_names(&self) -> Vec<String> {
        self.weight_ids().map(|id| self.store.names()[id.index()].clone()).collect()
    }

    pub fn sn_states(&self) -> &[SpectralNormState<S>] {
        &self.sn
    }

    pub fn set_sn_states(&mut self, states: Vec<SpectralNormState<S>>) -> Result<()> {
        let ok = states.len() == self.sn.len()
            && states.iter().zip(&self.sn).all(|(a, b)| a.u.len() == b.u.len() && a.v.len() == b.v.len());
        if !ok {
            return Err(Error::ShapeMismatch("spectral-norm states do not match the discriminator".into()));
        }
        self.sn = states;
        Ok(())
    }

    /// One power-iteration step for every weight (done before each training
    /// forward pass).
    pub fn update_spectral_norm(&mut self) -> Result<()> {
        let ids: Vec<ParamId> = self.weight_ids().collect();
        for (st, id) in self.sn.iter_mut().zip(ids) {
            st.power_iteration(self.store.get(id))?;
        }
        Ok(())
    }

    /// Effective (normalized) weights under the current estimates, as
    /// `(name, rows, cols, values)` with the 2-D view used for normalization.
    pub fn effective_weights(&self) -> Result<Vec<(String, usize, usize, Vec<S>)>> {
        let names = self.sn_weight_names();
        self.weight_ids()
            .zip(&self.sn)
            .zip(names)
            .map(|((id, st), name)| {
                let w = self.store.get(id);
                let (rows, cols) = w.as_matrix_dims();
                let mut g = Graph::new();
                let wv = g.constant(w.clone());
                let n = g.spectral_norm(wv, &st.u, &st.v)?;
                Ok((name, rows, cols, g.value(n).data().to_vec()))
            })
            .collect()
    }

    /// `[1, K]` scores for a `[3, F, T]` input map.
    pub fn forward(&self, g: &mut Graph<S>, p: &[Var], input: Var) -> Result<Var> {
        let shape = g.shape(input);
        if shape.len() != 3 || shape[0] != D_INPUT_CHANNELS {
            return Err(Error::ShapeMismatch(format!("discriminator input must be [3, F, T], got {shape:?}")));
        }
        let slope = S::lit(LEAKY_SLOPE);
        let mut x = input;
        let mut sn = self.sn.iter();
        for c in &self.convs {
            let st = sn.next().expect("state per weight");
            let w = g.spectral_norm(p[c.w.index()], &st.u, &st.v)?;
            let y = c.forward_with_weight(g, w, p[c.b.index()], x)?;
            x = g.leaky_relu(y, slope);
        }
        x = g.global_avg_pool(x)?;
        let last = self.dense.len() - 1;
        for (i, d) in self.dense.iter().enumerate() {
            let st = sn.next().expect("state per weight");
            let w = g.spectral_norm(p[d.w.index()], &st.u, &st.v)?;
            let y = d.forward_with_weight(g, w, p[d.b.index()], x)?;
            x = if i == last { g.sigmoid(y) } else { g.leaky_relu(y, slope) };
        }
        Ok(x)
    }

    /// Input map from three `[frames, bins]` compressed spectrogram nodes.
    pub fn input_map(g: &mut Graph<S>, processed: Var, unprocessed: Var, noise: Var) -> Result<Var> {
        g.to_channels(&[processed, unprocessed, noise])
    }

    /// Inference: scores for one triple of compressed spectrograms.
    pub fn predict(
        &self,
        processed_c: &MagSpectrogram<S>,
        speech_c: &MagSpectrogram<S>,
        noise_c: &MagSpectrogram<S>,
    ) -> Result<Vec<S>> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let to = |m: &MagSpectrogram<S>| Tensor::matrix(m.n_frames(), m.n_bins(), m.mags().to_vec());
        let (a, b, c) = (g.constant(to(processed_c)?), g.constant(to(speech_c)?), g.constant(to(noise_c)?));
        let x = Self::input_map(&mut g, a, b, c)?;
        let y = self.forward(&mut g, &p, x)?;
        g.check_finite()?;
        Ok(g.value(y).data().to_vec())
    }
}
