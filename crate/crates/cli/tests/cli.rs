use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use sinf::io::{read_matrix, write_matrix, DataFormat};
use sinf::rng::{seeded, standard_normal_matrix};

fn sinf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sinf"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sinf(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = sinf(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(
        err.trim_end().lines().count(),
        1,
        "diagnostic should be one line: {err}"
    );
    err
}

fn gaussian(n: usize, d: usize, shift: f64, seed: u64) -> DMatrix<f64> {
    let mut x = standard_normal_matrix(n, d, &mut seeded(seed));
    x.column_mut(0).add_scalar_mut(shift);
    x
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn trained_model(dir: &Path) -> PathBuf {
    let data = p(dir, "train.csv");
    write_matrix(&data, &gaussian(800, 2, 0.0, 1), DataFormat::Csv).unwrap();
    let model = p(dir, "model.sinf");
    let report = p(dir, "report.csv");
    let line = ok(&[
        "train",
        "--data",
        s(&data),
        "--mode",
        "sig",
        "--k",
        "2",
        "--max-layers",
        "5",
        "--seed",
        "4",
        "--out",
        s(&model),
        "--report",
        s(&report),
    ]);
    assert!(line.starts_with("layers_built=5"), "{line}");
    let csv = std::fs::read_to_string(&report).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("iteration,objective,validation_logp")
    );
    assert_eq!(csv.lines().count(), 6);
    model
}

#[test]
fn train_then_logp_gives_finite_values() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained_model(dir.path());
    let probes = p(dir.path(), "probes.bin");
    write_matrix(&probes, &gaussian(50, 2, 0.0, 2), DataFormat::Binary).unwrap();
    let out = ok(&["logp", "--model", s(&model), "--data", s(&probes)]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("logp"));
    let values: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 50);
    assert!(values.iter().all(|v| v.is_finite()));
}

#[test]
fn sampling_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained_model(dir.path());
    let a = ok(&["sample", "--model", s(&model), "--n", "20", "--seed", "9"]);
    let b = ok(&["sample", "--model", s(&model), "--n", "20", "--seed", "9"]);
    let c = ok(&["sample", "--model", s(&model), "--n", "20", "--seed", "10"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let bin = p(dir.path(), "samples.bin");
    ok(&[
        "sample",
        "--model",
        s(&model),
        "--n",
        "20",
        "--seed",
        "9",
        "--out",
        s(&bin),
    ]);
    let m = read_matrix(&bin, None).unwrap();
    assert_eq!(m.shape(), (20, 2));
}

#[test]
fn swd_reports_the_shift() {
    let dir = tempfile::tempdir().unwrap();
    let a = p(dir.path(), "a.bin");
    let b = p(dir.path(), "b.bin");
    write_matrix(&a, &gaussian(4000, 2, 0.0, 5), DataFormat::Binary).unwrap();
    write_matrix(&b, &gaussian(4000, 2, 2.0, 6), DataFormat::Binary).unwrap();
    let out = ok(&["swd", s(&a), s(&b), "--k", "1", "--restarts", "10"]);
    let max: f64 = out
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("max_k_swd="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((max - 2.0).abs() < 0.15, "{out}");
}

#[test]
fn config_file_drives_training() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "train.csv");
    write_matrix(&data, &gaussian(600, 2, 0.0, 7), DataFormat::Csv).unwrap();
    let cfg = p(dir.path(), "run.cfg");
    std::fs::write(
        &cfg,
        "# small run\nmode = gis\nk = 2\nmax_layers = 3\nstiefel_max_iter = 5\npatience = none\n",
    )
    .unwrap();
    let model = p(dir.path(), "m.sinf");
    let line = ok(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--out",
        s(&model),
    ]);
    assert!(line.contains("layers_built=3"), "{line}");
    assert!(line.contains("best_validation_logp="), "{line}");
}

#[test]
fn bad_inputs_fail_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = p(dir.path(), "bad.csv");
    std::fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let model = p(dir.path(), "m.sinf");
    let err = fails(&["train", "--data", s(&bad), "--out", s(&model)]);
    assert!(err.starts_with("error:"), "{err}");

    let good = trained_model(dir.path());
    let wide = p(dir.path(), "wide.csv");
    write_matrix(&wide, &gaussian(10, 3, 0.0, 8), DataFormat::Csv).unwrap();
    fails(&["logp", "--model", s(&good), "--data", s(&wide)]);

    let garbage = p(dir.path(), "garbage.sinf");
    std::fs::write(&garbage, b"not a model").unwrap();
    fails(&["sample", "--model", s(&garbage), "--n", "3"]);

    let cfg = p(dir.path(), "bad.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    fails(&[
        "train",
        "--data",
        s(&wide),
        "--config",
        s(&cfg),
        "--out",
        s(&model),
    ]);

    let out = sinf(&["train", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        String::from_utf8_lossy(&out.stderr)
            .trim_end()
            .lines()
            .count(),
        1
    );
}
