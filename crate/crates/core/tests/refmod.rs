use imetricgan::data::{toy_noise, toy_speech, ToyConfig};
use imetricgan::dsp::{mix_at_snr, rms, Waveform};
use imetricgan::metrics::estoi;
use imetricgan::refmod::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};

const FS: u32 = 16_000;

fn tone(freq: f64, secs: f64, amp: f64) -> Waveform<f64> {
    let n = (secs * FS as f64) as usize;
    let s = (0..n).map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / FS as f64).sin()).collect();
    Waveform::new(s, FS).unwrap()
}

fn gain_db(a: &Waveform<f64>, b: &Waveform<f64>) -> f64 {
    20.0 * (rms(b).unwrap() / rms(a).unwrap()).log10()
}

#[test]
fn tone_gains_follow_band_oracle() {
    let p = ShapingProfile::default();
    let t2k = tone(2000.0, 1.0, 0.01);
    let g2k = gain_db(&t2k, &spectral_shape(&t2k, &p).unwrap());
    assert!((g2k - 12.0).abs() < 0.25, "2 kHz gain {g2k}");
    let t250 = tone(250.0, 1.0, 0.01);
    let g250 = gain_db(&t250, &spectral_shape(&t250, &p).unwrap());
    assert!(g2k - g250 >= 12.0, "2 kHz {g2k} vs 250 Hz {g250}");
}

/// Welch power spectrum: Hann segments of 1024, hop 512.
fn welch(x: &[f64]) -> Vec<f64> {
    let n = 1024;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let win: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
    let mut psd = vec![0.0; n / 2 + 1];
    let mut start = 0;
    while start + n <= x.len() {
        let mut buf: Vec<Complex<f64>> = (0..n).map(|i| Complex::new(x[start + i] * win[i], 0.0)).collect();
        fft.process(&mut buf);
        for (p, c) in psd.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        start += n / 2;
    }
    psd
}

#[test]
fn white_noise_spectrum_matches_gain_curve() {
    let p = ShapingProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x: Vec<f64> = (0..FS as usize * 10).map(|_| 0.01 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let w = Waveform::new(x, FS).unwrap();
    let y = spectral_shape(&w, &p).unwrap();
    let (pin, pout) = (welch(w.samples()), welch(y.samples()));
    let hz = FS as f64 / 1024.0;
    let bands = [
        (100.0, 200.0),
        (200.0, 400.0),
        (400.0, 600.0),
        (600.0, 900.0),
        (900.0, 1200.0),
        (1200.0, 2500.0),
        (2500.0, 4000.0),
        (4000.0, 5500.0),
        (5500.0, 7000.0),
        (7000.0, 7900.0),
    ];
    for (lo, hi) in bands {
        let ks: Vec<usize> = (0..pin.len()).filter(|&k| (k as f64 * hz) >= lo && (k as f64 * hz) < hi).collect();
        let measured = 10.0 * (ks.iter().map(|&k| pout[k]).sum::<f64>() / ks.iter().map(|&k| pin[k]).sum::<f64>()).log10();
        let expected =
            10.0 * (ks.iter().map(|&k| 10f64.powf(p.gain_db(k as f64 * hz) / 10.0)).sum::<f64>() / ks.len() as f64).log10();
        assert!((measured - expected).abs() < 1.0, "band {lo}-{hi}: {measured} vs {expected}");
    }
}

#[test]
fn drc_leaves_quiet_signal_unchanged() {
    let p = ShapingProfile::default();
    let w = tone(440.0, 0.5, 0.01);
    let y = drc(&w, &p).unwrap();
    for (a, b) in w.samples().iter().zip(y.samples()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn drc_step_settles_within_five_attack_times() {
    let p = ShapingProfile::default();
    let lo = 10f64.powf(-40.0 / 20.0);
    let hi = 10f64.powf(-10.0 / 20.0);
    let step = FS as usize / 2;
    let x: Vec<f64> = (0..FS as usize).map(|i| if i < step { lo } else { hi }).collect();
    let gains = drc_gains(&Waveform::new(x, FS).unwrap(), &p);
    // Static 2:1 curve above -20 dBFS: -10 dBFS in, -15 dBFS out.
    let target = 10f64.powf(-5.0 / 20.0);
    let settle = step + (5.0 * p.attack_ms * 1e-3 * FS as f64) as usize;
    for &g in &gains[settle..] {
        assert!((20.0 * (g / target).log10()).abs() < 0.1, "gain {g} vs {target}");
    }
    assert!((gains[step - 1] - 1.0).abs() < 1e-9);
}

fn frame_energies_db(x: &[f64]) -> Vec<f64> {
    x.chunks_exact(320).map(|f| 10.0 * (f.iter().map(|v| v * v).sum::<f64>() + 1e-20).log10()).collect()
}

/// 95th minus 5th percentile frame energy over the frames where `reference`
/// is within 40 dB of its loudest frame.
fn dynamic_range(x: &[f64], reference: &[f64]) -> f64 {
    let r = frame_energies_db(reference);
    let max = r.iter().cloned().fold(f64::MIN, f64::max);
    let mut active: Vec<f64> =
        frame_energies_db(x).into_iter().zip(&r).filter(|(_, e)| **e > max - 40.0).map(|(v, _)| v).collect();
    active.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |q: f64| active[((active.len() - 1) as f64 * q).round() as usize];
    pct(0.95) - pct(0.05)
}

#[test]
fn drc_reduces_dynamic_range_of_speech() {
    let p = ShapingProfile::default();
    for seed in 0..10 {
        let s = toy_speech::<f64>(&ToyConfig::default(), seed).unwrap().scaled(4.0);
        let y = drc(&s, &p).unwrap();
        assert!(dynamic_range(y.samples(), s.samples()) < dynamic_range(s.samples(), s.samples()), "seed {seed}");
        assert!(y.samples().iter().all(|v| v.abs() <= 1.0));
    }
}

#[test]
fn make_example_preserves_rms_and_duration() {
    let p = ShapingProfile::default();
    for seed in 0..5 {
        let s = toy_speech::<f64>(&ToyConfig::default(), seed).unwrap();
        let e = make_example(&s, &p).unwrap();
        assert_eq!(e.len(), s.len());
        assert!(gain_db(&s, &e).abs() <= 0.1);
        assert_eq!(e, make_example(&s, &p).unwrap());
    }
}

#[test]
fn make_example_helps_estoi_at_minus_five_db() {
    let p = ShapingProfile::default();
    let cfg = ToyConfig::default();
    let noise = toy_noise::<f64>(&cfg, 500).unwrap();
    let mut wins = 0;
    for seed in 0..20 {
        let s = toy_speech::<f64>(&cfg, 1000 + seed).unwrap();
        let e = make_example(&s, &p).unwrap();
        let mix = mix_at_snr(&s, &noise, -5.0, seed).unwrap();
        let plain = estoi(&s, &mix.mixture).unwrap();
        let enhanced = estoi(&s, &e.add(&mix.noise).unwrap()).unwrap();
        wins += usize::from(enhanced > plain);
    }
    assert!(wins > 10, "{wins}/20");
}

proptest! {
    #[test]
    fn drc_gain_is_level_monotone(a in 1e-6f64..4.0, b in 1e-6f64..4.0) {
        let p = ShapingProfile::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(drc_gain(hi, &p) <= drc_gain(lo, &p) * (1.0 + 1e-12));
    }

    #[test]
    fn drc_output_bounded(amp in 0.01f64..3.0, freq in 50.0f64..4000.0) {
        let y = drc(&tone(freq, 0.2, amp), &ShapingProfile::default()).unwrap();
        prop_assert!(y.samples().iter().all(|v| v.abs() <= 1.0));
    }
}
