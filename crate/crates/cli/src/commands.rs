use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use imetricgan::data::{
    load_sample, prepare as prepare_corpus, read_wav, write_toy_corpus, write_wav, BitDepth, Checkpoint, Manifest,
    ManifestRow, PrepareConfig, Split, ToyConfig,
};
use imetricgan::dsp::{crop_noise, rms, Waveform};
use imetricgan::gan::{checkpoint_config, enhance as enhance_one, Discriminator, Generator, LogRecord, TrainSample, Trainer};
use imetricgan::metrics::{q_scores, MetricConfig, MetricSelection};
use imetricgan::refmod::{make_example, ShapingProfile};
use imetricgan::Error as CoreError;
use rayon::prelude::*;

use crate::config::{EffectiveConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::results::{read_results, render_table, summarize, write_results, write_summary, ResultRow};
use crate::{EnhanceArgs, EvaluateArgs, PrepareArgs, ReportArgs, SynthToyArgs, TrainArgs};

const RMS_TOLERANCE_DB: f64 = 0.1;

pub fn prepare(a: &PrepareArgs) -> CliResult<()> {
    let cfg = PrepareConfig {
        snr_grid: a.snr.clone(),
        seed: a.seed,
        with_examples: a.with_examples,
        heldout_fraction: a.heldout_fraction,
        test_fraction: a.test_fraction,
        profile: ShapingProfile::default(),
    };
    let m = prepare_corpus(&a.speech_dir, &a.noise_dir, &a.out, &cfg)?;
    let count = |s| m.split(s).count();
    println!(
        "{} rows (train {}, heldout {}, test {}) -> {}",
        m.rows.len(),
        count(Split::Train),
        count(Split::Heldout),
        count(Split::Test),
        a.out.join("manifest.jsonl").display()
    );
    Ok(())
}

pub fn synth_toy(a: &SynthToyArgs) -> CliResult<()> {
    if a.n_speech == 0 || a.n_noise == 0 {
        return Err(CliError::Usage("--n-speech and --n-noise must be positive".into()));
    }
    write_toy_corpus(&a.out, a.n_speech, a.n_noise, a.seed, &ToyConfig::default())?;
    println!("{} speech and {} noise files -> {}", a.n_speech, a.n_noise, a.out.display());
    Ok(())
}

fn parse_split(s: &str) -> CliResult<Split> {
    s.parse().map_err(|e: CoreError| CliError::Usage(e.to_string()))
}

fn load_manifest(path: &Path) -> CliResult<Manifest> {
    let m = Manifest::load(path).map_err(|e| CliError::data(path.display(), e))?;
    let missing = m.missing_files();
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::Data(format!("manifest references missing files: {}", list.join(", "))));
    }
    Ok(m)
}

fn load_rows(m: &Manifest, rows: &[&ManifestRow]) -> CliResult<Vec<TrainSample<f32>>> {
    rows.par_iter()
        .map(|r| load_sample::<f32>(m, r).map_err(|e| CliError::data(format!("row `{}`", r.id), e)))
        .collect()
}

fn checkpoint_path(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir.join("ckpt").join(format!("epoch_{epoch}.imgn"))
}

/// Newest `ckpt/epoch_N.imgn` in a run directory.
fn latest_checkpoint(run_dir: &Path) -> Option<(usize, PathBuf)> {
    let entries = fs::read_dir(run_dir.join("ckpt")).ok()?;
    entries
        .filter_map(|e| {
            let p = e.ok()?.path();
            let n = p.file_name()?.to_str()?.strip_prefix("epoch_")?.strip_suffix(".imgn")?.parse().ok()?;
            Some((n, p))
        })
        .max_by_key(|(n, _)| *n)
}

fn record_epoch(line: &str) -> Option<usize> {
    serde_json::from_str::<serde_json::Value>(line).ok()?.get("epoch")?.as_u64().map(|e| e as usize)
}

/// Keeps only log lines of epochs up to `epoch` (drops a partial epoch).
fn truncate_log(path: &Path, epoch: usize) -> CliResult<()> {
    let kept: Vec<String> = match File::open(path) {
        Ok(f) => BufReader::new(f)
            .lines()
            .map_while(Result::ok)
            .filter(|l| record_epoch(l).is_some_and(|e| e <= epoch))
            .collect(),
        Err(_) => Vec::new(),
    };
    let mut out = File::create(path)?;
    for l in kept {
        writeln!(out, "{l}")?;
    }
    Ok(())
}

fn dry_run(eff: &EffectiveConfig) -> CliResult<()> {
    let t = &eff.train;
    let g = Generator::<f32>::new(&t.arch, t.seed)?;
    let d = Discriminator::<f32>::new(&t.arch, t.metrics().len(), t.seed)?;
    println!("variant: {}", t.variant);
    println!("G parameters: {}", g.store().num_scalars());
    println!("D parameters: {}", d.store().num_scalars());
    Ok(())
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let rc = RunConfig::load(&a.config)?;
    let mut eff = rc.resolve()?;
    if a.dry_run {
        return dry_run(&eff);
    }
    let manifest_path = a
        .manifest
        .clone()
        .or_else(|| rc.paths.manifest.clone())
        .ok_or_else(|| CliError::Usage("no manifest given (--manifest or paths.manifest)".into()))?;
    let run_dir = a
        .run_dir
        .clone()
        .or_else(|| rc.paths.run_dir.clone())
        .ok_or_else(|| CliError::Usage("no run directory given (--run-dir or paths.run_dir)".into()))?;
    let manifest = load_manifest(&manifest_path)?;
    let canonical = fs::canonicalize(&manifest_path)?;
    eff.manifest = Some(canonical);

    let train_rows: Vec<&ManifestRow> = manifest.split(Split::Train).collect();
    let held_rows: Vec<&ManifestRow> = manifest.split(Split::Heldout).collect();
    if train_rows.is_empty() {
        return Err(CliError::Data("manifest has no training rows".into()));
    }
    if eff.train.variant.uses_examples() {
        if let Some(r) = train_rows.iter().find(|r| r.enhanced_path.is_none()) {
            return Err(CliError::Data(format!(
                "variant {} requires enhanced examples; row `{}` has none (prepare with --with-examples)",
                eff.train.variant, r.id
            )));
        }
    }

    let latest = latest_checkpoint(&run_dir);
    let mut trainer = match (&latest, a.resume) {
        (Some((epoch, path)), true) => {
            let ck = Checkpoint::load(path)?;
            if checkpoint_config(&ck)? != eff.train {
                return Err(CliError::Usage("configuration differs from the checkpointed run".into()));
            }
            truncate_log(&run_dir.join("logs.jsonl"), *epoch)?;
            log::info!("resuming after epoch {epoch} from {}", path.display());
            Trainer::from_checkpoint(&ck, Some(&eff.train.arch))?
        }
        (Some(_), false) => {
            return Err(CliError::Usage(format!(
                "{} already holds checkpoints; pass --resume or use a fresh directory",
                run_dir.display()
            )))
        }
        (None, _) => {
            fs::create_dir_all(run_dir.join("ckpt"))?;
            File::create(run_dir.join("logs.jsonl"))?;
            Trainer::new(eff.train.clone())?
        }
    };
    fs::write(run_dir.join("config.json"), serde_json::to_string_pretty(&eff).expect("serializable") + "\n")?;
    let absolute = |p: &Path| fs::canonicalize(manifest.resolve(p));
    let mut copy = manifest.clone();
    for r in &mut copy.rows {
        r.speech_path = absolute(&r.speech_path)?;
        r.noise_path = absolute(&r.noise_path)?;
        r.enhanced_path = r.enhanced_path.as_deref().map(absolute).transpose()?;
    }
    copy.save(run_dir.join("manifest.jsonl"))?;

    let train = load_rows(&manifest, &train_rows)?;
    let held = load_rows(&manifest, &held_rows)?;
    let mut log_file = OpenOptions::new().append(true).create(true).open(run_dir.join("logs.jsonl"))?;
    let mut last_good = latest.filter(|_| a.resume).map(|(_, p)| p);
    let mut write_log = |r: &LogRecord| -> imetricgan::Result<()> {
        writeln!(log_file, "{}", serde_json::to_string(r)?)?;
        Ok(())
    };
    let mut save = |t: &Trainer<f32>, s: &imetricgan::gan::EpochSummary| -> imetricgan::Result<()> {
        let path = checkpoint_path(&run_dir, t.epoch());
        t.to_checkpoint()?.save(&path)?;
        let h = s.heldout.as_ref();
        println!(
            "epoch {:>3}  d_loss {:.5}  g_loss {:.5}  heldout_mse {}  pearson {}",
            s.epoch,
            s.mean_d_loss,
            s.mean_g_loss,
            h.map(|h| format!("{:.5}", h.d_mse)).unwrap_or_else(|| "-".into()),
            h.map(|h| {
                h.pearson.iter().map(|p| p.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())).collect::<Vec<_>>().join("/")
            })
            .unwrap_or_else(|| "-".into())
        );
        last_good = Some(path);
        Ok(())
    };
    let outcome = trainer.fit(&train, &held, &mut write_log, &mut save);
    match outcome {
        Ok(s) => {
            let stopped = s.last().map(|e| e.epoch).unwrap_or(trainer.epoch());
            println!("finished after epoch {stopped}; checkpoints in {}", run_dir.join("ckpt").display());
            Ok(())
        }
        Err(CoreError::Diverged(what)) => Err(CliError::Diverged {
            message: format!("training diverged: non-finite value in `{what}`"),
            last_checkpoint: last_good,
        }),
        Err(e) => Err(e.into()),
    }
}

fn rms_delta_db(a: &Waveform<f32>, b: &Waveform<f32>) -> CliResult<f64> {
    let (ra, rb) = (f64::from(rms(a)?), f64::from(rms(b)?));
    if rb == 0.0 {
        return Ok(if ra == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(20.0 * (ra / rb).log10())
}

fn enhance_checked(gen: &Generator<f32>, id: &str, speech: &Waveform<f32>, noise: &Waveform<f32>) -> CliResult<Waveform<f32>> {
    let out = enhance_one(gen, speech, noise).map_err(|e| CliError::data(id, e))?;
    let delta = rms_delta_db(&out, speech)?;
    if out.len() != speech.len() || delta.abs() > RMS_TOLERANCE_DB {
        return Err(CliError::Data(format!(
            "{id}: output violates constraints ({} vs {} samples, RMS Δ {delta:+.4} dB)",
            out.len(),
            speech.len()
        )));
    }
    println!("{id}: RMS Δ {delta:+.4} dB ≤ {RMS_TOLERANCE_DB} dB, {} samples", out.len());
    Ok(out)
}

pub fn enhance(a: &EnhanceArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&a.checkpoint).map_err(|e| CliError::data(a.checkpoint.display(), e))?;
    let gen = Generator::<f32>::from_checkpoint(&ck, None)?;
    match (&a.speech, &a.manifest) {
        (Some(sp), None) => {
            let (np, out) = (a.noise.as_ref().expect("clap requires"), a.out.as_ref().expect("clap requires"));
            let speech: Waveform<f32> = read_wav(sp).map_err(|e| CliError::data(sp.display(), e))?;
            let noise: Waveform<f32> = read_wav(np).map_err(|e| CliError::data(np.display(), e))?;
            if noise.sample_rate() != speech.sample_rate() {
                return Err(CliError::Data("speech and noise sample rates differ".into()));
            }
            let (noise, _) = crop_noise(&noise, speech.len(), a.seed).map_err(|e| CliError::data(np.display(), e))?;
            let y = enhance_checked(&gen, &sp.display().to_string(), &speech, &noise)?;
            write_wav(out, &y, BitDepth::Float32)?;
            Ok(())
        }
        (None, Some(mp)) => {
            let m = load_manifest(mp)?;
            let split = parse_split(&a.split)?;
            let rows: Vec<&ManifestRow> = m.split(split).collect();
            if rows.is_empty() {
                return Err(CliError::Data(format!("manifest has no `{split}` rows")));
            }
            let dir = a.out_dir.as_ref().expect("clap requires");
            fs::create_dir_all(dir)?;
            for r in rows {
                let s = load_sample::<f32>(&m, r).map_err(|e| CliError::data(format!("row `{}`", r.id), e))?;
                let y = enhance_checked(&gen, &r.id, &s.speech, &s.noise)?;
                write_wav(dir.join(format!("{}.wav", r.id)), &y, BitDepth::Float32)?;
            }
            Ok(())
        }
        _ => Err(CliError::Usage("give either --speech/--noise/--out or --manifest/--out-dir".into())),
    }
}

fn score(
    id: &str,
    snr: f64,
    condition: &str,
    processed: &Waveform<f32>,
    s: &TrainSample<f32>,
    cfg: &MetricConfig,
) -> CliResult<ResultRow> {
    let sel = MetricSelection::siib_estoi();
    let mut row = ResultRow {
        utterance_id: id.to_string(),
        snr_db: snr,
        condition: condition.into(),
        estoi: None,
        siib_raw: None,
        siib_norm: None,
    };
    match q_scores(processed, &s.speech, &s.noise, &sel, cfg) {
        Ok(q) => {
            row.estoi = q.estoi;
            row.siib_raw = q.siib_raw;
            row.siib_norm = q.siib_norm;
        }
        Err(e @ (CoreError::ShapeMismatch(_) | CoreError::InvalidArgument(_))) => return Err(e.into()),
        Err(e) => log::warn!("{id} ({condition}): {e}; scores left empty"),
    }
    Ok(row)
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let manifest_path = a
        .manifest
        .clone()
        .or_else(|| a.run_dir.as_ref().map(|d| d.join("manifest.jsonl")))
        .ok_or_else(|| CliError::Usage("give --manifest or --run-dir".into()))?;
    let ck_path = a.checkpoint.clone().or_else(|| a.run_dir.as_ref().and_then(|d| latest_checkpoint(d)).map(|x| x.1));
    let out = a
        .out
        .clone()
        .or_else(|| a.run_dir.as_ref().map(|d| d.join("results.csv")))
        .ok_or_else(|| CliError::Usage("give --out or --run-dir".into()))?;
    if !(a.r_max > 0.0) {
        return Err(CliError::Usage("--r-max must be positive".into()));
    }
    let m = load_manifest(&manifest_path)?;
    let split = parse_split(&a.split)?;
    let rows: Vec<&ManifestRow> = m.split(split).collect();
    if rows.is_empty() {
        return Err(CliError::Data(format!("manifest has no `{split}` rows")));
    }
    let gen = match &ck_path {
        Some(p) => {
            let ck = Checkpoint::load(p).map_err(|e| CliError::data(p.display(), e))?;
            Some(Generator::<f32>::from_checkpoint(&ck, None)?)
        }
        None => {
            log::warn!("no checkpoint; scoring plain and refmod only");
            None
        }
    };
    let cfg = MetricConfig { r_max: a.r_max, ..MetricConfig::default() };
    let profile = ShapingProfile::default();
    let per_row: Vec<CliResult<Vec<ResultRow>>> = rows
        .par_iter()
        .map(|r| {
            let s = load_sample::<f32>(&m, r).map_err(|e| CliError::data(format!("row `{}`", r.id), e))?;
            let example = match &s.enhanced_example {
                Some(e) => e.clone(),
                None => make_example(&s.speech, &profile)?,
            };
            let mut out = vec![
                score(&r.id, r.snr_db, "plain", &s.speech, &s, &cfg)?,
                score(&r.id, r.snr_db, "refmod", &example, &s, &cfg)?,
            ];
            if let Some(g) = &gen {
                let y = enhance_one(g, &s.speech, &s.noise).map_err(|e| CliError::data(&r.id, e))?;
                out.push(score(&r.id, r.snr_db, "model", &y, &s, &cfg)?);
            }
            Ok(out)
        })
        .collect();
    let mut results = Vec::new();
    for r in per_row {
        results.extend(r?);
    }
    write_results(&out, &results)?;
    print!("{}", render_table(&summarize(&results)));
    println!("{} rows -> {}", results.len(), out.display());
    Ok(())
}

pub fn report(a: &ReportArgs) -> CliResult<()> {
    let rows = read_results(&a.results)?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{} has no rows", a.results.display())));
    }
    let summary = summarize(&rows);
    print!("{}", render_table(&summary));
    if let Some(out) = &a.out {
        write_summary(out, &summary)?;
    }
    Ok(())
}
