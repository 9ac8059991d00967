//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use imetricgan::data::{toy_noise, toy_speech, Checkpoint, ToyConfig};
use imetricgan::dsp::{istft, mix_at_snr, rms, stft, Waveform};
use imetricgan::gan::*;
use imetricgan::metrics::{estoi, q_scores, siib};
use imetricgan::neural::{grad_check, scale_activation, scale_activation_var, Graph, Lstm, ParamStore, Tensor};
use imetricgan::refmod::{make_example, ShapingProfile};
use imetricgan::Real;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const FS: u32 = 16_000;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn gain_db<S: Real>(input: &Waveform<S>, output: &Waveform<S>) -> f64 {
    let (a, b) = (rms(input).unwrap().as_f64(), rms(output).unwrap().as_f64());
    20.0 * (b / a).log10()
}

fn sigma_max(rows: usize, cols: usize, v: &[f32]) -> f64 {
    let v: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    DMatrix::from_row_slice(rows, cols, &v).singular_values().max()
}

fn stft_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_err, mut worst_rate) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let len = if i % 100 == 0 { 10 * FS as usize } else { rng.random_range(2048..4 * FS as usize) };
        let amp = 10f64.powf(rng.random_range(-4.0..0.0));
        let x = Waveform::new((0..len).map(|_| amp * rng.random_range(-1.0..1.0)).collect(), FS).unwrap();
        let t0 = Instant::now();
        let y = istft(&stft(&x).unwrap()).unwrap();
        let per_10s = t0.elapsed().as_secs_f64() / x.duration_secs() * 10.0;
        if y.len() != x.len() {
            return Err(format!("length {} != {}", y.len(), x.len()));
        }
        let num: f64 = x.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = x.samples().iter().map(|a| a * a).sum();
        worst_err = worst_err.max((num / den).sqrt());
        worst_rate = worst_rate.max(per_10s);
    }
    check(
        worst_err < 1e-6 && worst_rate < 1.0,
        format!("max relative L2 error {worst_err:.2e}, slowest {worst_rate:.4} s per 10 s of audio"),
    )
}

fn enhance_constraints(trained: &Generator<f32>) -> Outcome {
    let untrained = Generator::<f32>::new(&ArchConfig::full(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let gen = if i % 2 == 0 { &untrained } else { trained };
        let len = rng.random_range(1500..3 * FS as usize);
        let amp = 10f64.powf(rng.random_range(-3.0..0.0));
        let noise_amp = 10f64.powf(rng.random_range(-3.0..0.0));
        let wave = |rng: &mut ChaCha8Rng, a: f64| {
            Waveform::<f32>::new((0..len).map(|_| (a * rng.random_range(-1.0..1.0)) as f32).collect(), FS).unwrap()
        };
        let (s, n) = (wave(&mut rng, amp), wave(&mut rng, noise_amp));
        let y = enhance(gen, &s, &n).unwrap();
        if y.len() != s.len() {
            return Err(format!("call {i}: duration {} != {}", y.len(), s.len()));
        }
        worst = worst.max(gain_db(&s, &y).abs());
    }
    check(worst <= 0.1, format!("100 calls, durations exact, max |RMS change| {worst:.2e} dB"))
}

fn activation_bounds() -> Outcome {
    let (lo, hi) = ((-2.5f64).exp(), 5.5f64.exp());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m: Vec<f64> = (0..1_000_000)
        .map(|i| {
            let scale = 10f64.powi(i % 8 - 2);
            scale * rng.random_range(-1.0..1.0)
        })
        .collect();
    let scalar_ok = m.iter().all(|&v| (lo..=hi).contains(&scale_activation(v)));
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::new(vec![m.len()], m).unwrap());
    let y = scale_activation_var(&mut g, x);
    let graph_ok = g.value(y).data().iter().all(|v| (lo..=hi).contains(v));
    let mid = (scale_activation(0.0f64) - 1.5f64.exp()).abs();
    check(
        scalar_ok && graph_ok && mid <= 1e-12,
        format!("10^6 values in [e^-2.5, e^5.5] (scalar {scalar_ok}, graph {graph_ok}), |f(0) - e^1.5| = {mid:.1e}"),
    )
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut dense, mut conv, mut lstm, mut disc) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let (rows, n_in, n_out) = (rng.random_range(1..5), rng.random_range(1..7), rng.random_range(1..6));
        let x = rand_tensor(&mut rng, &[rows, n_in]);
        let target: Vec<f64> = (0..rows * n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p = vec![rand_tensor(&mut rng, &[n_in, n_out]), rand_tensor(&mut rng, &[n_out])];
        let r = grad_check(
            |g, p| {
                let xv = g.constant(x.clone());
                let xw = g.matmul(xv, p[0])?;
                let y = g.add_row_bias(xw, p[1])?;
                g.mse_target(y, &target)
            },
            &mut p,
            1e-4,
        )
        .unwrap();
        dense = dense.max(r.max_rel_err);

        let (ci, co) = (rng.random_range(1..3), rng.random_range(1..3));
        let k = (rng.random_range(1..5), rng.random_range(1..5));
        let stride = (rng.random_range(1..3), 1);
        let (f, t) = (rng.random_range(2..7), rng.random_range(2..7));
        let mut p = vec![rand_tensor(&mut rng, &[ci, f, t]), rand_tensor(&mut rng, &[co, ci, k.0, k.1]), rand_tensor(&mut rng, &[co])];
        let target: Vec<f64> = (0..co * f.div_ceil(stride.0) * t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = grad_check(
            |g, p| {
                let y = g.conv2d(p[0], p[1], p[2], stride)?;
                g.mse_target(y, &target)
            },
            &mut p,
            1e-4,
        )
        .unwrap();
        conv = conv.max(r.max_rel_err);
    }
    for case in 0..20 {
        let (n_in, hidden, steps) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(2..7));
        let mut store = ParamStore::<f64>::new();
        let l = Lstm::new(&mut store, "l", n_in, hidden, case % 2 == 1, &mut rng).unwrap();
        let mut p: Vec<Tensor<f64>> = store.values().to_vec();
        p.push(rand_tensor(&mut rng, &[steps, n_in]));
        let target: Vec<f64> = (0..steps * hidden).map(|_| rng.random_range(-0.5..0.5)).collect();
        let r = grad_check(
            |g, p| {
                let h = l.forward(g, &p[..3], p[3])?;
                g.mse_target(h, &target)
            },
            &mut p,
            1e-4,
        )
        .unwrap();
        lstm = lstm.max(r.max_rel_err);
    }
    let arch =
        ArchConfig { d_channels: vec![2, 3], d_kernels: vec![3, 2], d_freq_stride: 2, d_dense: vec![4, 3], ..ArchConfig::desk() };
    for case in 0..20u64 {
        let k = 1 + (case % 2) as usize;
        let d = Discriminator::<f64>::new(&arch, k, 100 + case).unwrap();
        let (f, t) = (rng.random_range(4..9), rng.random_range(2..6));
        let x = Tensor::new(vec![3, f, t], (0..3 * f * t).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap();
        let q: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut p: Vec<Tensor<f64>> = d.store().values().to_vec();
        let r = grad_check(
            |g, p| {
                let input = g.constant(x.clone());
                let out = d.forward(g, p, input)?;
                g.mse_target(out, &q)
            },
            &mut p,
            1e-6,
        )
        .unwrap();
        disc = disc.max(r.max_rel_err);
    }
    check(
        dense < 1e-6 && conv < 1e-6 && lstm < 1e-4 && disc < 1e-3,
        format!("max relative error over 20 configs each: dense {dense:.1e}, conv {conv:.1e}, LSTM {lstm:.1e}, D {disc:.1e}"),
    )
}

fn metric_sanity() -> Outcome {
    let cfg = ToyConfig::default();
    let utts: Vec<Waveform<f64>> = (0..20).map(|i| toy_speech(&cfg, 200 + i).unwrap()).collect();
    let noise: Waveform<f64> = toy_noise(&cfg, 77).unwrap();
    let self_err = utts.iter().map(|s| (estoi(s, s).unwrap() - 1.0).abs()).fold(0.0, f64::max);
    let mut means = Vec::new();
    for snr in [5.0, -5.0, -15.0] {
        let (mut e, mut s) = (0.0, 0.0);
        for (i, x) in utts.iter().enumerate() {
            let m = mix_at_snr(x, &noise, snr, i as u64).unwrap().mixture;
            e += estoi(x, &m).unwrap() / 20.0;
            s += siib(x, &m).unwrap() / 20.0;
        }
        means.push((e, s));
    }
    let ordered = means.windows(2).all(|w| w[0].0 > w[1].0 && w[0].1 > w[1].1);
    let worst_noise = utts
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let crop = mix_at_snr(x, &noise, 0.0, i as u64).unwrap().noise;
            siib(x, &crop).unwrap() / siib(x, x).unwrap()
        })
        .fold(0.0, f64::max);
    let fmt: Vec<String> = means.iter().map(|(e, s)| format!("{e:.3}/{s:.0}")).collect();
    check(
        self_err <= 1e-6 && ordered && worst_noise < 0.05,
        format!(
            "|ESTOI(x,x) - 1| <= {self_err:.1e}; ESTOI/SIIB means at +5/-5/-15 dB: {}; SIIB(x,noise)/SIIB(x,x) <= {worst_noise:.3}",
            fmt.join(", ")
        ),
    )
}

/// The desk toy corpus: 150 utterances over SNRs {-5, 0, 5} dB, first 30 held out.
fn desk_corpus(with_examples: bool) -> (Vec<TrainSample<f32>>, Vec<TrainSample<f32>>) {
    let cfg = ToyConfig::default();
    let noise: Waveform<f32> = toy_noise(&cfg, 7).unwrap();
    let profile = ShapingProfile::default();
    let snrs = [-5.0, 0.0, 5.0];
    let mut all: Vec<TrainSample<f32>> = (0..150u64)
        .map(|i| {
            let s: Waveform<f32> = toy_speech(&cfg, 100 + i).unwrap();
            let snr = snrs[(i % 3) as usize];
            let m = mix_at_snr(&s, &noise, snr, i).unwrap();
            let ex = with_examples.then(|| make_example(&s, &profile).unwrap());
            TrainSample::new(format!("u{i}"), s, m.noise, ex, snr).unwrap()
        })
        .collect();
    let train = all.split_off(30);
    (train, all)
}

struct Run {
    trainer: Trainer<f32>,
    summaries: Vec<EpochSummary>,
    sigma: Vec<(usize, f64)>,
    elapsed: Duration,
    /// Per held-out utterance: (plain targets, enhanced targets).
    scores: Vec<(Vec<f64>, Vec<f64>)>,
}

fn train_desk(variant: Variant) -> Result<Run, String> {
    let (train, held) = desk_corpus(variant.uses_examples());
    let cfg = TrainConfig::desk(variant);
    let mut trainer = Trainer::<f32>::new(cfg.clone()).map_err(|e| e.to_string())?;
    let mut sigma = Vec::new();
    let t0 = Instant::now();
    let summaries = trainer
        .fit(&train, &held, &mut |_| Ok(()), &mut |t, e| {
            let worst = t.discriminator().effective_weights()?.iter().map(|(_, r, c, w)| sigma_max(*r, *c, w)).fold(0.0, f64::max);
            sigma.push((e.epoch, worst));
            Ok(())
        })
        .map_err(|e| format!("{variant} training failed: {e}"))?;
    let elapsed = t0.elapsed();
    let sel = cfg.metrics();
    let mcfg = cfg.metric_config();
    let preds: HashMap<String, Prediction> =
        trainer.predictions(&held).map_err(|e| e.to_string())?.into_iter().map(|p| (p.id.clone(), p)).collect();
    let scores = held
        .iter()
        .filter_map(|s| {
            let p = preds.get(&s.id)?;
            let plain = q_scores(&s.speech, &s.speech, &s.noise, &sel, &mcfg).ok()?.targets(&sel);
            Some((plain, p.q.clone()))
        })
        .collect();
    Ok(Run { trainer, summaries, sigma, elapsed, scores })
}

fn spectral_norm_bound(run: &Run) -> Outcome {
    let max_over = |n: usize| run.sigma.iter().take(n).map(|s| s.1).fold(0.0, f64::max);
    let covered = run.sigma.len();
    let (first, all) = (max_over(10), max_over(covered));
    check(
        covered >= 10 && all <= 1.01,
        format!("max sigma over all SN weights {first:.4} in epochs 1-10, {all:.4} over all {covered} epochs"),
    )
}

fn surrogate_learning(run: &Run) -> Outcome {
    let last = run.summaries.last().ok_or("no epochs")?;
    let h = last.heldout.as_ref().ok_or("no held-out report")?;
    let ok = h.pearson.iter().all(|p| p.is_some_and(|v| v >= 0.8)) && run.elapsed.as_secs() <= 3600 && last.epoch <= 50;
    let r: Vec<String> = h.pearson.iter().map(|p| p.map_or("-".into(), |v| format!("{v:.3}"))).collect();
    check(
        ok,
        format!(
            "held-out Pearson (SIIB, ESTOI) {} after {} epochs on {} held-out samples, {:.0} s",
            r.join(", "),
            last.epoch,
            h.samples,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn enhancement_trend(multi: &Run, zs: &Result<Run, String>) -> Outcome {
    let avg = |q: &[f64]| q.iter().sum::<f64>() / q.len() as f64;
    let n = multi.scores.len();
    let plain = mean(multi.scores.iter().map(|(p, _)| avg(p)));
    let model = mean(multi.scores.iter().map(|(_, e)| avg(e)));
    let wins = multi.scores.iter().filter(|(p, e)| avg(e) > avg(p)).count();
    let multi_ok = n >= 20 && model > plain && wins as f64 >= 0.7 * n as f64;
    let zs_detail = match zs {
        Ok(z) => {
            let (p, e) = (mean(z.scores.iter().map(|s| s.0[0])), mean(z.scores.iter().map(|s| s.1[0])));
            (e > p && !z.scores.is_empty(), format!("SiibGAN-zs SIIB {p:.4} -> {e:.4} after {} epochs", z.trainer.epoch()))
        }
        Err(e) => (false, format!("SiibGAN-zs: {e}")),
    };
    check(
        multi_ok && zs_detail.0,
        format!("MultiGAN mean normalized metric {plain:.4} -> {model:.4}, wins {wins}/{n}; {}", zs_detail.1),
    )
}

fn determinism() -> Outcome {
    let (train, held) = desk_corpus(true);
    let (train, held) = (&train[..10], &held[..2]);
    let cfg = TrainConfig { seed: 5, ..TrainConfig::desk(Variant::MultiGan) };
    let log = |t: &mut Trainer<f32>, epochs: usize| {
        let mut lines = Vec::new();
        for _ in 0..epochs {
            t.run_epoch(train, held, &mut |r| {
                lines.push(serde_json::to_string(r)?);
                Ok(())
            })
            .unwrap();
        }
        lines
    };
    let a = log(&mut Trainer::new(cfg.clone()).unwrap(), 2);
    let b = log(&mut Trainer::new(cfg.clone()).unwrap(), 2);
    let mut first = Trainer::new(cfg).unwrap();
    let mut resumed_log = log(&mut first, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("epoch_1.imgn");
    first.to_checkpoint().unwrap().save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let again = dir.path().join("again.imgn");
    loaded.save(&again).unwrap();
    let file_round_trip = std::fs::read(&again).unwrap() == bytes;
    let mut resumed = Trainer::<f32>::from_checkpoint(&loaded, Some(&ArchConfig::desk())).unwrap();
    let state_round_trip = resumed.to_checkpoint().unwrap().encode().unwrap() == bytes;
    resumed_log.extend(log(&mut resumed, 1));
    let (same, resumes) = (a == b, resumed_log == a);
    check(
        same && resumes && file_round_trip && state_round_trip,
        format!(
            "{} log lines; identical runs {same}, resume matches {resumes}, checkpoint bytes round trip {}",
            a.len(),
            file_round_trip && state_round_trip
        ),
    )
}

fn refmod_sanity() -> Outcome {
    let cfg = ToyConfig::default();
    let p = ShapingProfile::default();
    let noise: Waveform<f64> = toy_noise(&cfg, 500).unwrap();
    let (mut wins, mut worst) = (0, 0.0f64);
    for seed in 0..20 {
        let s: Waveform<f64> = toy_speech(&cfg, 1000 + seed).unwrap();
        let e = make_example(&s, &p).unwrap();
        if e.len() != s.len() {
            return Err(format!("utterance {seed}: duration {} != {}", e.len(), s.len()));
        }
        worst = worst.max(gain_db(&s, &e).abs());
        let mix = mix_at_snr(&s, &noise, -5.0, seed).unwrap();
        let plain = estoi(&s, &mix.mixture).unwrap();
        let modified = estoi(&s, &e.add(&mix.noise).unwrap()).unwrap();
        wins += usize::from(modified > plain);
    }
    check(worst <= 0.1 && wins > 10, format!("max |RMS change| {worst:.2e} dB; ESTOI improved at -5 dB on {wins}/20"))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    })
}

fn main() {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut run = |n: u8, name: &'static str, o: Outcome| {
        eprintln!("criterion {n} done");
        results.push((n, name, o));
    };
    run(1, "STFT round trip", guarded(stft_round_trip));
    run(3, "mask activation bounds", guarded(activation_bounds));
    run(4, "gradient fidelity", guarded(gradient_checks));
    run(6, "metric sanity", guarded(metric_sanity));
    run(9, "determinism and persistence", guarded(determinism));
    run(10, "reference modifier", guarded(refmod_sanity));

    let train = |v: Variant| {
        catch_unwind(AssertUnwindSafe(|| train_desk(v))).unwrap_or_else(|_| Err(format!("{v} training panicked")))
    };
    let multi = train(Variant::MultiGan);
    let zs = train(Variant::SiibGanZs);
    match &multi {
        Ok(m) => {
            run(2, "enhancement constraints", guarded(|| enhance_constraints(m.trainer.generator())));
            run(5, "spectral normalization bound", guarded(|| spectral_norm_bound(m)));
            run(7, "surrogate learning", guarded(|| surrogate_learning(m)));
            run(8, "enhancement trend", guarded(|| enhancement_trend(m, &zs)));
        }
        Err(e) => {
            for (n, name) in
                [(2, "enhancement constraints"), (5, "spectral normalization bound"), (7, "surrogate learning"), (8, "enhancement trend")]
            {
                run(n, name, Err(e.clone()));
            }
        }
    }
    results.sort_by_key(|r| r.0);
    for (n, name, o) in &results {
        match o {
            Ok(d) => println!("PASS {n:>2} {name}: {d}"),
            Err(d) => println!("FAIL {n:>2} {name}: {d}"),
        }
    }
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
