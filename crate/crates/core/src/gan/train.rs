use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ArchConfig, Variant};
use super::discriminator::Discriminator;
use super::generator::Generator;
use super::pipeline::{compressed_magnitude, SpecFeatures};
use crate::data::Checkpoint;
use crate::dsp::{MagSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::metrics::{q_scores, MetricConfig, MetricSelection, DEFAULT_R_MAX};
use crate::neural::{AdamConfig, Graph, ParamStore, SpectralNormState, Tensor};
use crate::scalar::Real;

/// Hyperparameters of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub arch: ArchConfig,
    pub r_max: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub epochs: usize,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Score the generator is pushed towards, for every metric.
    pub target: f64,
    /// Power-iteration steps per discriminator update.
    pub sn_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::MultiGan,
            arch: ArchConfig::full(),
            r_max: DEFAULT_R_MAX,
            lr_g: 2e-4,
            lr_d: 2e-4,
            epochs: 50,
            patience: 5,
            seed: 0,
            target: 1.0,
            sn_iterations: 1,
        }
    }
}

impl TrainConfig {
    /// Small networks and learning rates tuned for the toy corpus on a CPU.
    pub fn desk(variant: Variant) -> Self {
        Self {
            variant,
            arch: ArchConfig::desk(),
            lr_g: 1e-6,
            lr_d: 1e-3,
            epochs: 20,
            sn_iterations: 10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.r_max) || !pos(self.lr_g) || !pos(self.lr_d) {
            return Err(Error::InvalidArgument("r_max and learning rates must be positive".into()));
        }
        if self.sn_iterations == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs and sn_iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.target) {
            return Err(Error::InvalidArgument("target must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn metrics(&self) -> MetricSelection {
        self.variant.metrics()
    }

    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig { r_max: self.r_max, ..MetricConfig::default() }
    }
}

/// One utterance with its aligned masker.
#[derive(Clone, Debug)]
pub struct TrainSample<S> {
    pub id: String,
    pub speech: Waveform<S>,
    pub noise: Waveform<S>,
    pub enhanced_example: Option<Waveform<S>>,
    pub snr_db: f64,
}

impl<S: Real> TrainSample<S> {
    pub fn new(
        id: impl Into<String>,
        speech: Waveform<S>,
        noise: Waveform<S>,
        enhanced_example: Option<Waveform<S>>,
        snr_db: f64,
    ) -> Result<Self> {
        let id = id.into();
        let aligned = |w: &Waveform<S>| w.len() == speech.len() && w.sample_rate() == speech.sample_rate();
        if !aligned(&noise) || !enhanced_example.as_ref().is_none_or(aligned) {
            return Err(Error::ShapeMismatch(format!("sample `{id}`: signals are not aligned")));
        }
        Ok(Self { id, speech, noise, enhanced_example, snr_db })
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Step {
        epoch: usize,
        sample_id: String,
        d_loss: f64,
        g_loss: f64,
        q: Vec<f64>,
        d: Vec<f64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        q_example: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        d_example: Option<Vec<f64>>,
    },
    Skip {
        epoch: usize,
        sample_id: String,
        reason: String,
    },
    Epoch(EpochSummary),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub skipped: usize,
    pub mean_d_loss: f64,
    pub mean_g_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub heldout: Option<HeldoutReport>,
    pub bad_epochs: usize,
    pub stop: bool,
}

/// Discriminator accuracy on generator outputs for unseen samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldoutReport {
    pub samples: usize,
    /// Mean over samples of the metric-averaged squared prediction error.
    pub d_mse: f64,
    /// Pearson correlation between predictions and true scores, per metric.
    pub pearson: Vec<Option<f64>>,
    pub mean_q: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

/// Pearson correlation, or `None` when either side has no variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Outcome of one D + G update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub d_loss: f64,
    pub g_loss: f64,
    pub q: Vec<f64>,
    pub d: Vec<f64>,
    pub q_example: Option<Vec<f64>>,
    pub d_example: Option<Vec<f64>>,
}

/// Scores of one held-out sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub d: Vec<f64>,
    pub q: Vec<f64>,
}

fn is_metric_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NoActiveSpeech
            | Error::SignalTooShort(_)
            | Error::InsufficientSpeech(_)
            | Error::DegenerateReference(_)
            | Error::DegenerateEnhancement(_)
    )
}

fn to_f64<S: Real>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Generator, discriminator and optimizer state of a training run.
#[derive(Clone, Debug)]
pub struct Trainer<S> {
    cfg: TrainConfig,
    gen: Generator<S>,
    disc: Discriminator<S>,
    epoch: usize,
    early: EarlyStop,
    examples: HashMap<String, (MagSpectrogram<S>, Vec<f64>)>,
}

const D_SEED_SALT: u64 = 0xd15c_0000_0000_0001;
const SHUFFLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

impl<S: Real> Trainer<S> {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let gen = Generator::new(&cfg.arch, cfg.seed)?;
        let mut disc = Discriminator::new(&cfg.arch, cfg.metrics().len(), cfg.seed ^ D_SEED_SALT)?;
        let states = disc.sn_states().iter().cloned().map(|mut s| {
            s.iterations = cfg.sn_iterations;
            s
        });
        disc.set_sn_states(states.collect())?;
        Ok(Self { cfg, gen, disc, epoch: 0, early: EarlyStop::default(), examples: HashMap::new() })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn early_stop(&self) -> EarlyStop {
        self.early
    }

    pub fn generator(&self) -> &Generator<S> {
        &self.gen
    }

    pub fn generator_mut(&mut self) -> &mut Generator<S> {
        &mut self.gen
    }

    pub fn discriminator(&self) -> &Discriminator<S> {
        &self.disc
    }

    pub fn discriminator_mut(&mut self) -> &mut Discriminator<S> {
        &mut self.disc
    }

    fn targets(&self, w: &Waveform<S>, sample: &TrainSample<S>) -> Result<Vec<f64>> {
        let sel = self.cfg.metrics();
        Ok(q_scores(w, &sample.speech, &sample.noise, &sel, &self.cfg.metric_config())?.targets(&sel))
    }

    fn example(&mut self, sample: &TrainSample<S>) -> Result<Option<(MagSpectrogram<S>, Vec<f64>)>> {
        if !self.cfg.variant.uses_examples() {
            return Ok(None);
        }
        if let Some(hit) = self.examples.get(&sample.id) {
            return Ok(Some(hit.clone()));
        }
        let ex = sample.enhanced_example.as_ref().ok_or_else(|| Error::MissingExamples(sample.id.clone()))?;
        let entry = (compressed_magnitude(ex)?, self.targets(ex, sample)?);
        self.examples.insert(sample.id.clone(), entry.clone());
        Ok(Some(entry))
    }

    /// One discriminator update followed by one generator update.
    pub fn step(&mut self, sample: &TrainSample<S>) -> Result<StepResult> {
        if self.cfg.variant.uses_examples() && sample.enhanced_example.is_none() {
            return Err(Error::MissingExamples(sample.id.clone()));
        }
        let feats = SpecFeatures::new(&sample.speech, &sample.noise)?;
        let (_, enhanced_c) = self.gen.forward(&feats)?;
        let enhanced = feats.synthesize(&enhanced_c)?;
        let q = self.targets(&enhanced, sample)?;
        let example = self.example(sample)?;
        let (d_loss, d, d_example) = self.d_step(&feats, &enhanced_c, &q, example.as_ref())?;
        let g_loss = self.g_step(&feats)?;
        Ok(StepResult { d_loss, g_loss, q, d, q_example: example.map(|e| e.1), d_example })
    }

    /// Discriminator update on the generator output (and the example, if
    /// any). Generator parameters are untouched.
    pub fn d_step(
        &mut self,
        feats: &SpecFeatures<S>,
        enhanced_c: &MagSpectrogram<S>,
        q: &[f64],
        example: Option<&(MagSpectrogram<S>, Vec<f64>)>,
    ) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)> {
        self.disc.update_spectral_norm()?;
        let mut g = Graph::new();
        let p = self.disc.store().bind(&mut g, true);
        let speech = g.constant(SpecFeatures::as_matrix(&feats.speech_c));
        let noise = g.constant(SpecFeatures::as_matrix(&feats.noise_c));
        let enh = g.constant(SpecFeatures::as_matrix(enhanced_c));
        let x = Discriminator::input_map(&mut g, enh, speech, noise)?;
        let out = self.disc.forward(&mut g, &p, x)?;
        let q_s: Vec<S> = q.iter().map(|&v| S::lit(v)).collect();
        let mut loss = g.mse_target(out, &q_s)?;
        let mut ex_out = None;
        if let Some((ex_c, q_ex)) = example {
            let exv = g.constant(SpecFeatures::as_matrix(ex_c));
            let x2 = Discriminator::input_map(&mut g, exv, speech, noise)?;
            let out2 = self.disc.forward(&mut g, &p, x2)?;
            let q_ex_s: Vec<S> = q_ex.iter().map(|&v| S::lit(v)).collect();
            let l2 = g.mse_target(out2, &q_ex_s)?;
            loss = g.add(loss, l2)?;
            ex_out = Some(out2);
        }
        g.check_finite()?;
        let mut grads = g.backward(loss)?;
        let grads = self.disc.store().collect_grads(&mut grads, &p);
        let d = to_f64(g.value(out).data());
        let d_ex = ex_out.map(|v| to_f64(g.value(v).data()));
        let loss = g.value(loss).data()[0].as_f64();
        self.disc.store_mut().adam_step(&grads, &AdamConfig::with_lr(self.cfg.lr_d))?;
        Ok((loss, d, d_ex))
    }

    /// Generator update through the frozen discriminator.
    pub fn g_step(&mut self, feats: &SpecFeatures<S>) -> Result<f64> {
        let mut g = Graph::new();
        let pg = self.gen.store().bind(&mut g, true);
        let pd = self.disc.store().bind(&mut g, false);
        let vars = self.gen.graph(&mut g, &pg, feats)?;
        let speech = g.constant(SpecFeatures::as_matrix(&feats.speech_c));
        let noise = g.constant(SpecFeatures::as_matrix(&feats.noise_c));
        let x = Discriminator::input_map(&mut g, vars.enhanced_c, speech, noise)?;
        let out = self.disc.forward(&mut g, &pd, x)?;
        let t = vec![S::lit(self.cfg.target); self.disc.outputs()];
        let loss = g.mse_target(out, &t)?;
        g.check_finite()?;
        let mut grads = g.backward(loss)?;
        let grads = self.gen.store().collect_grads(&mut grads, &pg);
        let loss = g.value(loss).data()[0].as_f64();
        self.gen.store_mut().adam_step(&grads, &AdamConfig::with_lr(self.cfg.lr_g))?;
        Ok(loss)
    }

    /// Sample order of `epoch` (1-based) for a dataset of `n` samples.
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ SHUFFLE_SALT.wrapping_mul(epoch as u64));
        order.shuffle(&mut rng);
        order
    }

    /// Trains one epoch, then scores `heldout` and updates early stopping.
    pub fn run_epoch(
        &mut self,
        train: &[TrainSample<S>],
        heldout: &[TrainSample<S>],
        log: &mut dyn FnMut(&LogRecord) -> Result<()>,
    ) -> Result<EpochSummary> {
        if train.is_empty() {
            return Err(Error::EmptyInput);
        }
        let epoch = self.epoch + 1;
        let started = Instant::now();
        let (mut steps, mut skipped, mut d_sum, mut g_sum) = (0, 0, 0.0, 0.0);
        for idx in self.epoch_order(epoch, train.len()) {
            let sample = &train[idx];
            match self.step(sample) {
                Ok(r) => {
                    steps += 1;
                    d_sum += r.d_loss;
                    g_sum += r.g_loss;
                    log(&LogRecord::Step {
                        epoch,
                        sample_id: sample.id.clone(),
                        d_loss: r.d_loss,
                        g_loss: r.g_loss,
                        q: r.q,
                        d: r.d,
                        q_example: r.q_example,
                        d_example: r.d_example,
                    })?;
                }
                Err(e) if is_metric_failure(&e) => {
                    log::warn!("skipping sample `{}`: {e}", sample.id);
                    skipped += 1;
                    log(&LogRecord::Skip { epoch, sample_id: sample.id.clone(), reason: e.to_string() })?;
                }
                Err(e) => return Err(e),
            }
        }
        let heldout = match heldout.is_empty() {
            true => None,
            false => Some(self.evaluate(heldout)?.0).filter(|h| h.samples > 0),
        };
        if let Some(h) = &heldout {
            if self.early.best.is_none_or(|b| h.d_mse < b) {
                self.early = EarlyStop { best: Some(h.d_mse), bad_epochs: 0 };
            } else {
                self.early.bad_epochs += 1;
            }
        }
        self.epoch = epoch;
        let stop = self.epoch >= self.cfg.epochs || (heldout.is_some() && self.early.bad_epochs >= self.cfg.patience);
        let summary = EpochSummary {
            epoch,
            steps,
            skipped,
            mean_d_loss: if steps > 0 { d_sum / steps as f64 } else { 0.0 },
            mean_g_loss: if steps > 0 { g_sum / steps as f64 } else { 0.0 },
            heldout,
            bad_epochs: self.early.bad_epochs,
            stop,
        };
        log::info!(
            "epoch {epoch}: d_loss {:.5} g_loss {:.5} ({:.1} s)",
            summary.mean_d_loss,
            summary.mean_g_loss,
            started.elapsed().as_secs_f64()
        );
        log(&LogRecord::Epoch(summary.clone()))?;
        Ok(summary)
    }

    /// Trains until the epoch budget or early stopping. `on_epoch` runs after
    /// every epoch (e.g. to write a checkpoint).
    pub fn fit(
        &mut self,
        train: &[TrainSample<S>],
        heldout: &[TrainSample<S>],
        log: &mut dyn FnMut(&LogRecord) -> Result<()>,
        on_epoch: &mut dyn FnMut(&Self, &EpochSummary) -> Result<()>,
    ) -> Result<Vec<EpochSummary>> {
        let mut out = Vec::new();
        while self.epoch < self.cfg.epochs {
            let s = self.run_epoch(train, heldout, log)?;
            on_epoch(self, &s)?;
            let stop = s.stop;
            out.push(s);
            if stop {
                break;
            }
        }
        Ok(out)
    }

    /// Discriminator predictions and true scores of generator outputs.
    pub fn predictions(&self, samples: &[TrainSample<S>]) -> Result<Vec<Prediction>> {
        let results: Vec<Result<Option<Prediction>>> = samples
            .par_iter()
            .map(|s| {
                let feats = SpecFeatures::new(&s.speech, &s.noise)?;
                let (_, enh_c) = self.gen.forward(&feats)?;
                let q = match feats.synthesize(&enh_c).and_then(|w| self.targets(&w, s)) {
                    Ok(q) => q,
                    Err(e) if is_metric_failure(&e) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let d = to_f64(&self.disc.predict(&enh_c, &feats.speech_c, &feats.noise_c)?);
                Ok(Some(Prediction { id: s.id.clone(), d, q }))
            })
            .collect();
        let mut out = Vec::new();
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }

    /// Held-out report plus the underlying predictions.
    pub fn evaluate(&self, samples: &[TrainSample<S>]) -> Result<(HeldoutReport, Vec<Prediction>)> {
        let preds = self.predictions(samples)?;
        let k = self.disc.outputs();
        let n = preds.len();
        let d_mse = if n == 0 {
            f64::NAN
        } else {
            preds.iter().map(|p| super::loss::Scored::new(p.d.clone(), p.q.clone()).sq_error()).sum::<Result<f64>>()? / n as f64
        };
        let column = |k: usize, f: fn(&Prediction) -> &Vec<f64>| preds.iter().map(|p| f(p)[k]).collect::<Vec<f64>>();
        let pearson_k = (0..k).map(|i| pearson(&column(i, |p| &p.d), &column(i, |p| &p.q))).collect();
        let mean_q = (0..k).map(|i| column(i, |p| &p.q).iter().sum::<f64>() / n.max(1) as f64).collect();
        Ok((HeldoutReport { samples: n, d_mse, pearson: pearson_k, mean_q }, preds))
    }

    /// Enhances `speech` for playback in `noise` with the current generator.
    pub fn enhance(&self, speech: &Waveform<S>, noise: &Waveform<S>) -> Result<Waveform<S>> {
        enhance(&self.gen, speech, noise)
    }
}

/// Full enhancement pipeline: features, mask, energy normalization and
/// resynthesis with the speech phase. Output has the input's length and RMS.
pub fn enhance<S: Real>(gen: &Generator<S>, speech: &Waveform<S>, noise: &Waveform<S>) -> Result<Waveform<S>> {
    let feats = SpecFeatures::new(speech, noise)?;
    let (_, enh_c) = gen.forward(&feats)?;
    feats.synthesize(&enh_c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    format: String,
    metrics: MetricSelection,
    train: TrainConfig,
    epoch: usize,
    early_stop: EarlyStop,
    g_step: u64,
    d_step: u64,
    /// Shuffle order derives from (seed, epoch); this is the next epoch.
    rng: RngState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngState {
    seed: u64,
    next_epoch: usize,
}

const FORMAT_NAME: &str = "imetricgan";

fn push_store<S: Real>(out: &mut Vec<(String, Tensor<f32>)>, prefix: &str, store: &ParamStore<S>) {
    for (i, name) in store.names().iter().enumerate() {
        let t = &store.values()[i];
        out.push((format!("{prefix}/{name}"), t.cast()));
    }
    for (tag, pick) in [("m", 0), ("v", 1)] {
        for (i, name) in store.names().iter().enumerate() {
            let (m, v) = store.moments(crate::neural::ParamId(i));
            let data = if pick == 0 { m } else { v };
            let t = Tensor::new(store.values()[i].shape().to_vec(), data.to_vec()).expect("moment shape");
            out.push((format!("{prefix}.{tag}/{name}"), t.cast()));
        }
    }
}

fn fetch<'a>(ck: &'a Checkpoint, name: &str, shape: &[usize]) -> Result<&'a Tensor<f32>> {
    let t = ck.tensor(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
    if t.shape() != shape {
        return Err(Error::Checkpoint(format!(
            "tensor `{name}` has shape {:?}, architecture expects {shape:?}",
            t.shape()
        )));
    }
    Ok(t)
}

fn load_store<S: Real>(ck: &Checkpoint, prefix: &str, store: &mut ParamStore<S>, step: u64) -> Result<()> {
    let names = store.names().to_vec();
    let mut ms = Vec::new();
    let mut vs = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let shape = store.values()[i].shape().to_vec();
        *store.get_mut(crate::neural::ParamId(i)) = fetch(ck, &format!("{prefix}/{name}"), &shape)?.cast();
        ms.push(fetch(ck, &format!("{prefix}.m/{name}"), &shape)?.cast::<S>().into_data());
        vs.push(fetch(ck, &format!("{prefix}.v/{name}"), &shape)?.cast::<S>().into_data());
    }
    store.set_optimizer_state(step, ms, vs)
}

fn read_meta(ck: &Checkpoint) -> Result<CheckpointMeta> {
    let meta: CheckpointMeta =
        serde_json::from_value(ck.metadata.clone()).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    if meta.format != FORMAT_NAME {
        return Err(Error::Checkpoint(format!("not an {FORMAT_NAME} checkpoint")));
    }
    if meta.metrics != meta.train.variant.metrics() {
        return Err(Error::Checkpoint("metric selection does not match the variant".into()));
    }
    Ok(meta)
}

fn check_arch(meta: &CheckpointMeta, expected: Option<&ArchConfig>) -> Result<()> {
    match expected {
        Some(a) if *a != meta.train.arch => Err(Error::Checkpoint(
            "architecture hyperparameters differ from the checkpoint".into(),
        )),
        _ => Ok(()),
    }
}

impl<S: Real> Trainer<S> {
    /// Serializes the complete training state.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = CheckpointMeta {
            format: FORMAT_NAME.into(),
            metrics: self.cfg.metrics(),
            train: self.cfg.clone(),
            epoch: self.epoch,
            early_stop: self.early,
            g_step: self.gen.store().step(),
            d_step: self.disc.store().step(),
            rng: RngState { seed: self.cfg.seed, next_epoch: self.epoch + 1 },
        };
        let mut tensors = Vec::new();
        push_store(&mut tensors, "g", self.gen.store());
        push_store(&mut tensors, "d", self.disc.store());
        for (name, st) in self.disc.sn_weight_names().iter().zip(self.disc.sn_states()) {
            tensors.push((format!("d.sn_u/{name}"), Tensor::new(vec![st.u.len()], st.u.clone())?.cast()));
            tensors.push((format!("d.sn_v/{name}"), Tensor::new(vec![st.v.len()], st.v.clone())?.cast()));
        }
        Ok(Checkpoint { metadata: serde_json::to_value(meta)?, tensors })
    }

    /// Restores a trainer. With `expected`, the stored architecture must match.
    pub fn from_checkpoint(ck: &Checkpoint, expected: Option<&ArchConfig>) -> Result<Self> {
        let meta = read_meta(ck)?;
        check_arch(&meta, expected)?;
        if meta.rng.seed != meta.train.seed || meta.rng.next_epoch != meta.epoch + 1 {
            return Err(Error::Checkpoint("inconsistent RNG state".into()));
        }
        let mut t = Self::new(meta.train.clone())?;
        load_store(ck, "g", t.gen.store_mut(), meta.g_step)?;
        load_store(ck, "d", t.disc.store_mut(), meta.d_step)?;
        let mut states = Vec::new();
        for (name, st) in t.disc.sn_weight_names().iter().zip(t.disc.sn_states()) {
            states.push(SpectralNormState {
                u: fetch(ck, &format!("d.sn_u/{name}"), &[st.u.len()])?.cast::<S>().into_data(),
                v: fetch(ck, &format!("d.sn_v/{name}"), &[st.v.len()])?.cast::<S>().into_data(),
                iterations: st.iterations,
            });
        }
        t.disc.set_sn_states(states)?;
        t.epoch = meta.epoch;
        t.early = meta.early_stop;
        Ok(t)
    }
}

/// Training configuration stored in a checkpoint.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<TrainConfig> {
    Ok(read_meta(ck)?.train)
}

impl<S: Real> Generator<S> {
    /// Generator weights from a checkpoint written by [`Trainer::to_checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint, expected: Option<&ArchConfig>) -> Result<Self> {
        let meta = read_meta(ck)?;
        check_arch(&meta, expected)?;
        let mut gen = Generator::new(&meta.train.arch, meta.train.seed)?;
        load_store(ck, "g", gen.store_mut(), meta.g_step)?;
        Ok(gen)
    }
}
