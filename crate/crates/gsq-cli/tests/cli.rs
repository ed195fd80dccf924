//! End-to-end tests that drive the installed binary and cross-check its
//! artifacts against the library.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gsq::persistence;
use gsq::*;

fn gsq_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gsq"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary should launch");
    assert!(
        out.status.success(),
        "command failed: {}\nstderr: {}",
        format!("{cmd:?}"),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary should launch");
    assert!(!out.status.success(), "command unexpectedly succeeded: {cmd:?}");
    out
}

/// Deterministic synthetic corpus: three noisy clusters in 8-d.
fn write_corpus(path: &Path, rows: usize) -> VectorBatch {
    let mut state = 0x1234_5678_u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5
    };
    let centers = [[2.0f64; 8], [-1.5; 8], [0.5; 8]];
    let mut values = Vec::with_capacity(rows * 8);
    for i in 0..rows {
        let c = &centers[i % 3];
        for ch in c {
            values.push((ch + 0.1 * next()) as f32);
        }
    }
    persistence::save_tensor(path, &[rows, 8], &values).unwrap();
    VectorBatch::new(8, values).unwrap()
}

#[test]
fn eval_csv_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.gsqt");
    let cb_path = dir.path().join("cb.gsqc");
    let csv_path = dir.path().join("eval.csv");
    let batch = write_corpus(&corpus_path, 300);

    run_ok(gsq_bin().args([
        "train", "--preset", "gsq", "--latent-dim", "8", "--groups", "2", "--vocab", "8",
        "--seed", "7", "--steps", "300", "--batch-size", "32",
        "--corpus", corpus_path.to_str().unwrap(),
        "--out", cb_path.to_str().unwrap(),
    ]));
    run_ok(gsq_bin().args([
        "eval",
        "--codebook", cb_path.to_str().unwrap(),
        "--corpus", corpus_path.to_str().unwrap(),
        "--csv", csv_path.to_str().unwrap(),
    ]));

    let csv = fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| -> f64 {
        let i = header.iter().position(|h| *h == name).unwrap();
        row[i].parse().unwrap()
    };

    // recompute the same quantities directly through the library
    let (codebook, config) = persistence::load_codebook(&cb_path).unwrap();
    let assignment = quantize(&batch, &codebook, &config).unwrap();
    let mut usage = UsageHistogram::for_config(&config);
    usage.record(&assignment, config.shared_codebook);

    assert!((col("usage_pct") - usage_percent(&usage)).abs() < 1e-9);
    assert!((col("ppl") - perplexity(&usage)).abs() < 1e-9);
    let commitment = commitment_loss(&batch, &assignment).unwrap();
    assert!((col("commitment") - commitment).abs() < 1e-9);
    assert!(col("mse") >= 0.0 && col("psnr_db") > 0.0);
}

#[test]
fn zero_steps_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.gsqt");
    write_corpus(&corpus_path, 30);
    let out = run_err(gsq_bin().args([
        "train", "--latent-dim", "8", "--vocab", "4", "--steps", "0",
        "--corpus", corpus_path.to_str().unwrap(),
        "--out", dir.path().join("cb.gsqc").to_str().unwrap(),
    ]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--steps"));
}

#[test]
fn fixed_presets_refuse_training() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.gsqt");
    write_corpus(&corpus_path, 30);
    for preset in ["lfq", "bsq", "fsq"] {
        let mut cmd = gsq_bin();
        cmd.args([
            "train", "--preset", preset, "--latent-dim", "8", "--steps", "10",
            "--corpus", corpus_path.to_str().unwrap(),
            "--out", dir.path().join("cb.gsqc").to_str().unwrap(),
        ]);
        if preset == "fsq" {
            cmd.args(["--levels", "5,5,5,5,5,5,5,5"]);
        }
        run_err(&mut cmd);
    }
}

#[test]
fn encode_decode_encode_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.gsqt");
    let cb_path = dir.path().join("cb.gsqc");
    write_corpus(&corpus_path, 120);

    run_ok(gsq_bin().args([
        "train", "--latent-dim", "8", "--groups", "4", "--vocab", "6", "--seed", "3",
        "--steps", "200", "--corpus", corpus_path.to_str().unwrap(),
        "--out", cb_path.to_str().unwrap(),
    ]));

    let codes1 = dir.path().join("codes1.bin");
    let rec = dir.path().join("rec.gsqt");
    let codes2 = dir.path().join("codes2.bin");
    run_ok(gsq_bin().args([
        "encode", "--codebook", cb_path.to_str().unwrap(),
        "--corpus", corpus_path.to_str().unwrap(), "--out", codes1.to_str().unwrap(),
    ]));
    run_ok(gsq_bin().args([
        "decode", "--codebook", cb_path.to_str().unwrap(),
        "--in", codes1.to_str().unwrap(), "--out", rec.to_str().unwrap(),
    ]));
    run_ok(gsq_bin().args([
        "encode", "--codebook", cb_path.to_str().unwrap(),
        "--corpus", rec.to_str().unwrap(), "--out", codes2.to_str().unwrap(),
    ]));
    assert_eq!(fs::read(&codes1).unwrap(), fs::read(&codes2).unwrap());
}

#[test]
fn tampered_index_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.gsqt");
    let cb_path = dir.path().join("cb.gsqc");
    let codes = dir.path().join("codes.bin");
    write_corpus(&corpus_path, 60);
    run_ok(gsq_bin().args([
        "train", "--latent-dim", "8", "--groups", "2", "--vocab", "4", "--steps", "50",
        "--corpus", corpus_path.to_str().unwrap(), "--out", cb_path.to_str().unwrap(),
    ]));
    run_ok(gsq_bin().args([
        "encode", "--codebook", cb_path.to_str().unwrap(),
        "--corpus", corpus_path.to_str().unwrap(), "--out", codes.to_str().unwrap(),
    ]));
    // corrupt one index byte so a stored code exceeds the vocabulary
    let mut bytes = fs::read(&codes).unwrap();
    let last = bytes.len() - 1;
    bytes[last] = 0xff;
    fs::write(&codes, &bytes).unwrap();
    run_err(gsq_bin().args([
        "decode", "--codebook", cb_path.to_str().unwrap(),
        "--in", codes.to_str().unwrap(),
        "--out", dir.path().join("rec.gsqt").to_str().unwrap(),
    ]));
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.gsqt");
    write_corpus(&corpus_path, 150);

    let csvs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let csv = dir.path().join(format!("sweep{i}.csv"));
            run_ok(gsq_bin().args([
                "sweep", "--groups-list", "1,2,3", "--vocab-list", "4,8",
                "--steps", "60", "--seed", "42",
                "--corpus", corpus_path.to_str().unwrap(),
                "--csv", csv.to_str().unwrap(),
            ]));
            fs::read(&csv).unwrap()
        })
        .collect();
    assert_eq!(csvs[0], csvs[1]);

    let text = String::from_utf8(csvs[0].clone()).unwrap();
    // G=3 does not divide D=8: the cell must be reported, not silently dropped
    assert!(text.contains("groups-do-not-divide-dim"));
    assert_eq!(text.lines().count(), 1 + 3 * 2);

    let stats: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let csv = dir.path().join(format!("ds{i}.csv"));
            run_ok(gsq_bin().args([
                "dist-stats", "--n", "16", "--samples", "5000", "--seed", "9",
                "--csv", csv.to_str().unwrap(),
            ]));
            fs::read(&csv).unwrap()
        })
        .collect();
    assert_eq!(stats[0], stats[1]);
}

#[test]
fn config_file_flags_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    fs::write(&cfg_path, "preset=gsq\nlatent_dim=8\ngroups=2\nvocab=16\nseed=11\n").unwrap();
    let cb_path = dir.path().join("cb.gsqc");
    // the --vocab flag must override the file's vocab=16
    run_ok(gsq_bin().args([
        "init", "--config", cfg_path.to_str().unwrap(), "--vocab", "32",
        "--out", cb_path.to_str().unwrap(),
    ]));
    let (_, config) = persistence::load_codebook(&cb_path).unwrap();
    assert_eq!(config.vocab, 32);
    assert_eq!(config.latent_dim, 8);
    assert_eq!(config.groups, 2);
}
