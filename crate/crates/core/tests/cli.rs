use std::path::Path;
use std::process::{Command, Output};

use dereverb::signal::{read_wav, write_wav, Waveform};
use dereverb::unet::UNetModel;

fn dereverb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dereverb"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dereverb(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--set", "n_utts=2", "--set", "duration_s=1", "--set", "snr_db=inf"];

#[test]
fn synth_data_defaults_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = ok(&["synth-data", "--out", s(&a)]);
    let second = ok(&["synth-data", "--out", s(&b)]);
    let manifest = std::fs::read_to_string(a.join("manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 8);
    let hash = |out: &str| {
        out.lines()
            .find(|l| l.starts_with("manifest sha256"))
            .unwrap()
            .to_string()
    };
    assert_eq!(hash(&first), hash(&second));
    assert_eq!(
        std::fs::read(a.join("manifest.tsv")).unwrap(),
        std::fs::read(b.join("manifest.tsv")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dereverb(&[
        "synth-data",
        "--out",
        s(dir.path()),
        "--set",
        "t60_lo=0.9",
        "--set",
        "t60_hi=0.3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# bad\nepochs = 2\nlearning_rate = 0.1\n").unwrap();
    let out = dereverb(&["synth-data", "--out", s(dir.path()), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn help_shows_defaults() {
    let help = ok(&["train", "--help"]);
    assert!(help.contains("lr") && help.contains("[default: 0.001]"));
    assert!(help.contains("--set"));
    for sub in ["synth-data", "train-gan", "enhance", "evaluate", "spectrogram"] {
        ok(&[sub, "--help"]);
    }
}

#[test]
fn train_enhance_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let data = p("data");
    let mut args = vec!["synth-data", "--out", s(&data)];
    args.extend(SMALL);
    ok(&args);

    let train_out = ok(&[
        "train",
        "--data",
        s(&p("data")),
        "--out",
        s(&p("g.ckpt")),
        "--set",
        "max_steps=5",
        "--set",
        "epochs=1",
    ]);
    assert!(train_out.contains("5 steps"));
    let log = std::fs::read_to_string(p("g.ckpt.log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 5);
    let model = UNetModel::load(&p("g.ckpt")).unwrap();
    assert!(model.norm().is_some());

    let missing = dereverb(&["train-gan", "--data", s(&p("data")), "--out", s(&p("gan.ckpt"))]);
    assert_eq!(missing.status.code(), Some(2));
    let missing = dereverb(&[
        "train-gan",
        "--data",
        s(&p("data")),
        "--init",
        s(&p("nope.ckpt")),
        "--out",
        s(&p("gan.ckpt")),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.ckpt"));

    ok(&[
        "train-gan",
        "--data",
        s(&p("data")),
        "--init",
        s(&p("g.ckpt")),
        "--out",
        s(&p("gan.ckpt")),
        "--set",
        "max_steps=3",
    ]);
    let gan_log = std::fs::read_to_string(p("gan.ckpt.log.tsv")).unwrap();
    assert!(gan_log.starts_with("step\td_loss\tg_bce\tg_mse\n"));
    assert_eq!(gan_log.lines().count(), 1 + 3);
    assert!(p("gan.ckpt.disc").is_file());

    let input = p("data/reverb/utt0000.wav");
    ok(&[
        "enhance",
        "--model",
        s(&p("gan.ckpt")),
        "--input",
        s(&input),
        "--output",
        s(&p("enh.wav")),
    ]);
    assert_eq!(read_wav(&p("enh.wav")).unwrap().len(), read_wav(&input).unwrap().len());

    let table = ok(&[
        "evaluate",
        "--reference",
        s(&p("data/clean")),
        "--degraded",
        s(&p("data/clean")),
        "--report",
        s(&p("report.tsv")),
    ]);
    assert_eq!(std::fs::read_to_string(p("report.tsv")).unwrap(), table);
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let f: Vec<&str> = row.split('\t').collect();
        assert_eq!(&f[1..4], &["0.000000", "0.000000", "35.000000"], "{row}");
    }
}

#[test]
fn spectrogram_of_silence_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("zero.wav");
    write_wav(&wav, &Waveform::new(vec![0.0; 8000], 16000).unwrap()).unwrap();
    let pgm = dir.path().join("zero.pgm");
    ok(&["spectrogram", "--input", s(&wav), "--output", s(&pgm)]);
    let bytes = std::fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n"));
    let header_end = bytes.windows(4).position(|w| w == b"255\n").unwrap() + 4;
    let pixels = &bytes[header_end..];
    assert!(!pixels.is_empty());
    assert!(pixels.iter().all(|&v| v == pixels[0]));
}

#[test]
fn corrupt_wav_exits_4_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("bad.wav");
    let mut bytes = dereverb::signal::wav_bytes(&Waveform::new(vec![0.1; 100], 16000).unwrap());
    bytes[20] = 3;
    std::fs::write(&wav, bytes).unwrap();
    let out = dereverb(&[
        "spectrogram",
        "--input",
        s(&wav),
        "--output",
        s(&dir.path().join("x.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("20"));
}
