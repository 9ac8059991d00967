use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY_ARCH: &str = r#"{"n_bins":513,"g_hidden":4,"g_dense":4,"d_channels":[2],"d_kernels":[3],"d_freq_stride":4,"d_dense":[4],"g_out_init_scale":0.1}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imetricgan")).current_dir(dir).args(args).output().expect("spawn imetricgan")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn counts(o: &Output) -> (usize, usize) {
    let out = stdout(o);
    let find = |key: &str| -> usize {
        out.lines().find_map(|l| l.strip_prefix(key)).unwrap_or_else(|| panic!("no `{key}` in {out}")).trim().parse().unwrap()
    };
    (find("G parameters:"), find("D parameters:"))
}

#[test]
fn help_documents_every_flag() {
    let tmp = TempDir::new().unwrap();
    for sub in ["prepare", "synth-toy", "train", "enhance", "evaluate", "report"] {
        let o = run(tmp.path(), &[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        let text = stdout(&o);
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate().filter(|(_, l)| l.trim_start().starts_with("--")) {
            // flag, optional value placeholder, then text on the same or the next line
            let needed = if line.contains('<') { 3 } else { 2 };
            let next = lines.get(i + 1).map(|l| l.trim_start()).unwrap_or("");
            let wrapped = !next.is_empty() && !next.starts_with('-');
            assert!(line.split_whitespace().count() >= needed || wrapped, "{sub}: undocumented flag `{line}`");
        }
    }
}

#[test]
fn unknown_flags_and_missing_arguments_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    for args in [&["train", "--config", "x.json", "--frobnicate"][..], &["prepare"], &["nonsense"], &[]] {
        let o = run(tmp.path(), args);
        assert_eq!(code(&o), 1, "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains("error[usage]"));
    }
}

#[test]
fn dry_run_reports_parameter_counts() {
    let tmp = TempDir::new().unwrap();
    let p = write(tmp.path(), "full.json", r#"{"variant":"multigan"}"#);
    let o = run(tmp.path(), &["train", "--config", &p, "--dry-run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(counts(&o), (9_198_513, 1_637_472));

    // One metric means one fewer output unit in the last dense layer.
    let p = write(tmp.path(), "siib.json", r#"{"variant":"siibgan"}"#);
    let (g, d) = counts(&run(tmp.path(), &["train", "--config", &p, "--dry-run"]));
    assert_eq!((g, d), (9_198_513, 1_637_472 - 11));

    let p = write(tmp.path(), "desk.json", r#"{"preset":"desk","variant":"multigan"}"#);
    let (g, d) = counts(&run(tmp.path(), &["train", "--config", &p, "--dry-run"]));
    assert!(g < 9_198_513 / 10 && d < 1_637_472 / 10, "{g} {d}");
}

#[test]
fn bad_configs_exit_with_usage() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        r#"{"variant":"multigan","bogus":1}"#,
        r#"{"variant":"plain"}"#,
        r#"{"preset":"desk"}"#,
        r#"{"variant":"multigan","paths":{"manifest":"m","extra":1}}"#,
        r#"{"variant":"multigan","stft":{"window_len":512,"hop":256,"n_fft":512}}"#,
        r#"{"variant":"siibgan","metrics":["siib","estoi"]}"#,
        r#"{"variant":"multigan","epochs":0}"#,
        r#"{"variant":"multigan","lr_g":-1}"#,
        "not json",
    ];
    for (i, text) in cases.iter().enumerate() {
        let p = write(tmp.path(), &format!("c{i}.json"), text);
        let o = run(tmp.path(), &["train", "--config", &p, "--dry-run"]);
        assert_eq!(code(&o), 1, "{text}: {}", stderr(&o));
    }
    let o = run(tmp.path(), &["train", "--config", "absent.json", "--dry-run"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_data_exits_with_data_error() {
    let tmp = TempDir::new().unwrap();
    let t = tmp.path();
    fs::create_dir_all(t.join("speech")).unwrap();
    fs::create_dir_all(t.join("noise")).unwrap();
    fs::write(t.join("speech/broken.wav"), b"RIFF\0\0").unwrap();
    let o = run(t, &["prepare", "--speech-dir", "speech", "--noise-dir", "noise", "--out", "out"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("error[data]"));

    let o = run(t, &["evaluate", "--manifest", "missing.jsonl", "--out", "r.csv"]);
    assert_eq!(code(&o), 2);

    let m = write(
        t,
        "m.jsonl",
        r#"{"id":"a","speech_path":"gone.wav","noise_path":"gone.wav","snr_db":0.0,"crop_seed":1,"split":"train"}"#,
    );
    let c = write(t, "c.json", r#"{"preset":"desk","variant":"siibgan-zs","epochs":1}"#);
    let o = run(t, &["train", "--config", &c, "--manifest", &m, "--run-dir", "run"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("gone.wav"));

    let o = run(t, &["report", "--results", "none.csv"]);
    assert_eq!(code(&o), 2);
    let o = run(t, &["enhance", "--checkpoint", "m.jsonl", "--speech", "a.wav", "--noise", "b.wav", "--out", "c.wav"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn report_averages_per_condition() {
    let tmp = TempDir::new().unwrap();
    let t = tmp.path();
    let r = write(
        t,
        "results.csv",
        "utterance_id,snr_db,condition,estoi,siib_raw,siib_norm\n\
         a,-5.0,plain,0.2,100.0,0.1\n\
         b,0.0,plain,0.4,,\n\
         a,-5.0,model,0.5,300.0,0.4\n\
         b,0.0,model,0.7,500.0,0.6\n",
    );
    let o = run(t, &["report", "--results", &r, "--out", "summary.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("plain") && table.contains("model"), "{table}");

    let summary = fs::read_to_string(t.join("summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = summary.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["condition", "utterances", "estoi", "siib_raw", "siib_norm"]);
    let expect = [("plain", [0.3, 100.0, 0.1]), ("model", [0.6, 400.0, 0.5])];
    assert_eq!(rows.len(), 3);
    for ((name, means), row) in expect.iter().zip(&rows[1..]) {
        assert_eq!(row[0], *name);
        assert_eq!(row[1], "2");
        for (m, cell) in means.iter().zip(&row[2..]) {
            let v: f64 = cell.parse().unwrap();
            assert!((v - m).abs() < 1e-12, "{name}: {v} vs {m}");
        }
    }
}

#[test]
fn toy_pipeline_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let t = tmp.path();
    let ok = |o: Output| {
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        o
    };
    ok(run(t, &["synth-toy", "--out", "toy", "--n-speech", "6", "--n-noise", "2", "--seed", "3"]));
    let o = ok(run(
        t,
        &[
            "prepare", "--speech-dir", "toy/speech", "--noise-dir", "toy/noise", "--out", "data", "--snr", "-5,0,5",
            "--with-examples", "--heldout-fraction", "0.34", "--test-fraction", "0.17",
        ],
    ));
    assert!(stdout(&o).contains("18 rows"), "{}", stdout(&o));

    let cfg = write(t, "cfg.json", &format!(r#"{{"preset":"desk","variant":"multigan","epochs":2,"arch":{TINY_ARCH}}}"#));
    let train = ["train", "--config", &cfg, "--manifest", "data/manifest.jsonl", "--run-dir", "run"];
    ok(run(t, &train));
    let run_dir = t.join("run");
    for f in ["config.json", "manifest.jsonl", "logs.jsonl", "ckpt/epoch_1.imgn", "ckpt/epoch_2.imgn"] {
        assert!(run_dir.join(f).is_file(), "missing {f}");
    }
    let log = fs::read_to_string(run_dir.join("logs.jsonl")).unwrap();
    let epochs = log.lines().filter(|l| l.contains(r#""kind":"epoch""#)).count();
    assert_eq!(epochs, 2);
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["train"]["epochs"], 2);

    // An occupied run directory needs --resume.
    assert_eq!(code(&run(t, &train)), 1);

    // Resuming after epoch 1 rewrites the same log and checkpoint.
    let ck2 = fs::read(run_dir.join("ckpt/epoch_2.imgn")).unwrap();
    fs::remove_file(run_dir.join("ckpt/epoch_2.imgn")).unwrap();
    let mut resume = train.to_vec();
    resume.push("--resume");
    ok(run(t, &resume));
    assert_eq!(fs::read_to_string(run_dir.join("logs.jsonl")).unwrap(), log);
    assert_eq!(fs::read(run_dir.join("ckpt/epoch_2.imgn")).unwrap(), ck2);

    // The run directory is self-contained.
    let o = ok(run(t, &["evaluate", "--run-dir", "run", "--split", "test"]));
    assert!(stdout(&o).contains("9 rows"), "{}", stdout(&o));
    let results = fs::read_to_string(run_dir.join("results.csv")).unwrap();
    assert!(results.starts_with("utterance_id,snr_db,condition,estoi,siib_raw,siib_norm\n"));
    for cond in ["plain", "refmod", "model"] {
        assert_eq!(results.lines().filter(|l| l.split(',').nth(2) == Some(cond)).count(), 3, "{cond}");
    }
    let o = ok(run(t, &["report", "--results", "run/results.csv"]));
    assert!(stdout(&o).contains("refmod"));

    let o = ok(run(
        t,
        &[
            "enhance", "--checkpoint", "run/ckpt/epoch_2.imgn", "--speech", "toy/speech/utt0000.wav", "--noise",
            "toy/noise/noise00.wav", "--out", "enhanced.wav",
        ],
    ));
    assert!(stdout(&o).contains("RMS"));
    assert_eq!(fs::metadata(t.join("enhanced.wav")).unwrap().len(), fs::metadata(t.join("toy/speech/utt0000.wav")).unwrap().len());
    ok(run(t, &["enhance", "--checkpoint", "run/ckpt/epoch_1.imgn", "--manifest", "data/manifest.jsonl", "--out-dir", "enh"]));
    assert_eq!(fs::read_dir(t.join("enh")).unwrap().count(), 3);

    // A checkpoint from a different config cannot be resumed.
    let other = write(t, "other.json", &format!(r#"{{"preset":"desk","variant":"multigan","epochs":3,"arch":{TINY_ARCH}}}"#));
    let o = run(t, &["train", "--config", &other, "--manifest", "data/manifest.jsonl", "--run-dir", "run", "--resume"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let div = write(
        t,
        "div.json",
        &format!(r#"{{"preset":"desk","variant":"multigan","epochs":2,"lr_g":1e30,"lr_d":1e30,"arch":{TINY_ARCH}}}"#),
    );
    let o = run(t, &["train", "--config", &div, "--manifest", "data/manifest.jsonl", "--run-dir", "div"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("error[diverged]"));
}
