use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{Manifest, ManifestRow, Split};
use super::wav::{read_wav, write_wav, BitDepth};
use crate::dsp::{mix_at_snr, resample, Waveform};
use crate::error::{Error, Result};
use crate::gan::TrainSample;
use crate::refmod::{make_example, ShapingProfile};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct PrepareConfig {
    pub snr_grid: Vec<f64>,
    pub seed: u64,
    pub with_examples: bool,
    /// Fractions of speech files assigned to the held-out and test splits.
    pub heldout_fraction: f64,
    pub test_fraction: f64,
    pub profile: ShapingProfile,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            snr_grid: vec![-5.0, 0.0, 5.0],
            seed: 0,
            with_examples: false,
            heldout_fraction: 0.2,
            test_fraction: 0.0,
            profile: ShapingProfile::default(),
        }
    }
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::InvalidArgument(format!("{}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::Wav(format!("no .wav files in {}", dir.display())));
    }
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn snr_tag(snr: f64) -> String {
    let s = format!("{snr}").replace('-', "m").replace('.', "p");
    format!("snr{s}")
}

/// Pairs every speech file with a seeded noise crop at every SNR of the grid,
/// writes mixtures (and enhanced examples) under `out_dir`, and returns the
/// manifest. Identical inputs and seed give identical outputs.
pub fn prepare(speech_dir: &Path, noise_dir: &Path, out_dir: &Path, cfg: &PrepareConfig) -> Result<Manifest> {
    if cfg.snr_grid.is_empty() || cfg.snr_grid.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("SNR grid must be non-empty and finite".into()));
    }
    let frac_ok = |f: f64| (0.0..1.0).contains(&f);
    if !frac_ok(cfg.heldout_fraction) || !frac_ok(cfg.test_fraction) || cfg.heldout_fraction + cfg.test_fraction >= 1.0 {
        return Err(Error::InvalidArgument("split fractions must be in [0, 1) and sum below 1".into()));
    }
    let speech_files = wav_files(speech_dir)?;
    let noise_files = wav_files(noise_dir)?;

    let mut bad = Vec::new();
    let mut speech = Vec::new();
    for p in &speech_files {
        match read_wav::<f64>(p) {
            Ok(w) => speech.push(w),
            Err(e) => {
                log::error!("{}: {e}", p.display());
                bad.push(p.clone());
            }
        }
    }
    let mut noise = Vec::new();
    for p in &noise_files {
        match read_wav::<f64>(p) {
            Ok(w) => noise.push(w),
            Err(e) => {
                log::error!("{}: {e}", p.display());
                bad.push(p.clone());
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::Unreadable(bad));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..speech_files.len()).collect();
    order.shuffle(&mut rng);
    let n = order.len() as f64;
    let n_test = (cfg.test_fraction * n).round() as usize;
    let n_held = (cfg.heldout_fraction * n).round() as usize;
    let mut split = vec![Split::Train; speech_files.len()];
    for (rank, &i) in order.iter().enumerate() {
        split[i] = if rank < n_test {
            Split::Test
        } else if rank < n_test + n_held {
            Split::Heldout
        } else {
            Split::Train
        };
    }

    fs::create_dir_all(out_dir.join("mixtures"))?;
    if cfg.with_examples {
        fs::create_dir_all(out_dir.join("examples"))?;
    }
    let mut rows = Vec::new();
    for (i, (sp, s)) in speech_files.iter().zip(&speech).enumerate() {
        let enhanced_path = if cfg.with_examples {
            let rel = PathBuf::from("examples").join(format!("{}.wav", stem(sp)));
            write_wav(out_dir.join(&rel), &make_example(s, &cfg.profile)?, BitDepth::Float32)?;
            Some(rel)
        } else {
            None
        };
        for &snr in &cfg.snr_grid {
            let k = rng.random_range(0..noise_files.len());
            let crop_seed: u64 = rng.random();
            let id = format!("{}_{}", stem(sp), snr_tag(snr));
            let nz = match_rate(&noise[k], s.sample_rate())?;
            let mix = mix_at_snr(s, &nz, snr, crop_seed).map_err(|e| Error::Manifest(format!("row `{id}`: {e}")))?;
            write_wav(out_dir.join("mixtures").join(format!("{id}.wav")), &mix.mixture, BitDepth::Float32)?;
            rows.push(ManifestRow {
                id,
                speech_path: absolute(sp)?,
                noise_path: absolute(&noise_files[k])?,
                snr_db: snr,
                crop_seed,
                enhanced_path: enhanced_path.clone(),
                split: split[i],
            });
        }
    }
    let manifest = Manifest::new(rows, out_dir)?;
    manifest.save(out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(fs::canonicalize(p)?)
}

fn match_rate<S: Real>(w: &Waveform<S>, rate: u32) -> Result<Waveform<S>> {
    if w.sample_rate() == rate {
        Ok(w.clone())
    } else {
        log::warn!("resampling masker from {} Hz to {rate} Hz", w.sample_rate());
        resample(w, rate)
    }
}

/// Reads one manifest row into aligned speech, scaled masker and example.
pub fn load_sample<S: Real>(manifest: &Manifest, row: &ManifestRow) -> Result<TrainSample<S>> {
    let speech: Waveform<S> = read_wav(manifest.resolve(&row.speech_path))?;
    let noise = match_rate(&read_wav::<S>(manifest.resolve(&row.noise_path))?, speech.sample_rate())?;
    let mix = mix_at_snr(&speech, &noise, row.snr_db, row.crop_seed)?;
    let example = match &row.enhanced_path {
        Some(p) => {
            let ex: Waveform<S> = read_wav(manifest.resolve(p))?;
            if ex.len() != speech.len() {
                return Err(Error::Manifest(format!(
                    "row `{}`: example has {} samples, speech {}",
                    row.id,
                    ex.len(),
                    speech.len()
                )));
            }
            Some(ex)
        }
        None => None,
    };
    TrainSample::new(row.id.clone(), speech, mix.noise, example, row.snr_db)
}

/// Writes a toy speech and noise corpus as WAV files.
pub fn write_toy_corpus(dir: &Path, n_speech: usize, n_noise: usize, seed: u64, cfg: &super::ToyConfig) -> Result<()> {
    let sdir = dir.join("speech");
    let ndir = dir.join("noise");
    fs::create_dir_all(&sdir)?;
    fs::create_dir_all(&ndir)?;
    for i in 0..n_speech {
        let w: Waveform<f64> = super::toy_speech(cfg, seed.wrapping_add(i as u64))?;
        write_wav(sdir.join(format!("utt{i:04}.wav")), &w, BitDepth::Float32)?;
    }
    for i in 0..n_noise {
        let w: Waveform<f64> = super::toy_noise(cfg, seed.wrapping_add(1_000_000 + i as u64))?;
        write_wav(ndir.join(format!("noise{i:02}.wav")), &w, BitDepth::Float32)?;
    }
    Ok(())
}
