// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn rangekit(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rangekit"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("spawn rangekit")
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = rangekit(cwd, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn kv<'a>(report: &'a str, key: &str) -> &'a str {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("missing {key} in\n{report}"))
}

fn synth(dir: &Path) {
    ok(dir, &["pipeline", "--synthetic", "2", "--out", "run", "--artifacts"]);
}

#[test]
fn oracle_pipeline_reports_perfect_ap() {
    let t = tempfile::tempdir().unwrap();
    let r = ok(t.path(), &["pipeline", "--synthetic", "3", "--format", "kv"]);
    assert_eq!(kv(&r, "Car.ap"), "1.000000");
    assert_eq!(kv(&r, "Car.fp"), "0");
}

#[test]
fn zero_injector_reports_zero_ap() {
    let t = tempfile::tempdir().unwrap();
    let r = ok(t.path(), &["pipeline", "--synthetic", "2", "--injector", "zero", "--format", "kv"]);
    assert_eq!(kv(&r, "Car.ap"), "0.000000");
    assert_eq!(kv(&r, "Car.tp"), "0");
}

#[test]
fn pipeline_outputs_are_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["pipeline", "--synthetic", "3", "--seed", "17", "--out", "a", "--artifacts"]);
    ok(t.path(), &["pipeline", "--synthetic", "3", "--seed", "17", "--out", "b", "--artifacts"]);
    let mut names: Vec<_> = std::fs::read_dir(t.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 3 * 7);
    for n in names {
        let a = std::fs::read(t.path().join("a").join(&n)).unwrap();
        let b = std::fs::read(t.path().join("b").join(&n)).unwrap();
        assert_eq!(a, b, "{n:?} differs");
    }
}

#[test]
fn convert_round_trip_keeps_points() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path());
    let fwd = ok(t.path(), &["--format", "kv", "convert", "--input", "run/000000.bin", "--output", "x.rgrd"]);
    let back = ok(t.path(), &["--format", "kv", "convert", "--input", "x.rgrd", "--output", "x.bin"]);
    assert_eq!(kv(&fwd, "valid_pixels"), kv(&back, "points"));
    let again = ok(t.path(), &["--format", "kv", "convert", "--input", "x.bin", "--output", "y.rgrd"]);
    assert_eq!(kv(&again, "dropped_points"), "0");
    assert_eq!(std::fs::read(t.path().join("x.rgrd")).unwrap(), std::fs::read(t.path().join("y.rgrd")).unwrap());
}

#[test]
fn project_accounts_for_every_point() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path());
    let r = ok(t.path(), &["--format", "kv", "project", "--input", "run/000000.bin", "--out", "p"]);
    let n: usize = kv(&r, "points").parse().unwrap();
    let sum: usize = ["kept", "occluded", "out_of_view"].iter().map(|k| kv(&r, k).parse::<usize>().unwrap()).sum();
    assert_eq!(n, sum);
    assert_eq!(kv(&r, "kept"), kv(&r, "valid_pixels"));
    let pixels = std::fs::read_to_string(t.path().join("p/pixels.txt")).unwrap();
    assert_eq!(pixels.lines().count(), n);
}

#[test]
fn augment_is_seeded() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path());
    let d = t.path();
    ok(d, &["augment", "--input", "run/000000.bin", "--labels", "run/000000.gt.txt", "--save-bank", "bank", "--out", "a0"]);
    for out in ["a1", "a2"] {
        ok(d, &["--seed", "5", "augment", "--input", "run/000001.bin", "--labels", "run/000001.gt.txt", "--bank", "bank", "--out", out]);
    }
    for f in ["augmented.rgrd", "augmented.bin", "augmented_labels.txt"] {
        assert_eq!(std::fs::read(d.join("a1").join(f)).unwrap(), std::fs::read(d.join("a2").join(f)).unwrap());
    }
    assert!(d.join("bank/index.txt").exists());
}

#[test]
fn pool_writes_container() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path());
    let r = ok(t.path(), &["--format", "kv", "pool", "--input", "run/000000.bin", "--proposals", "run/000000.proposals.txt", "--out", "pool"]);
    assert_eq!(kv(&r, "values_per_roi"), (12 * 12 * 12 * 64).to_string());
    let bytes = std::fs::read(t.path().join("pool/pooled.roip")).unwrap();
    assert!(bytes.starts_with(b"ROIP"));
}

#[test]
fn eval_plain_and_waymo() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path());
    std::fs::write(
        t.path().join("m.txt"),
        "000000 run/000000.dets.txt run/000000.gt.txt\n000001 run/000001.dets.txt run/000001.gt.txt\n",
    )
    .unwrap();
    let plain = ok(t.path(), &["--format", "kv", "eval", "--manifest", "m.txt"]);
    assert_eq!(kv(&plain, "Car.ap"), "1.000000");
    let waymo = ok(t.path(), &["--format", "kv", "eval", "--manifest", "m.txt", "--metric", "waymo"]);
    assert_eq!(kv(&waymo, "Car/L2/all.ap"), "1.000000");
    let text = ok(t.path(), &["eval", "--manifest", "m.txt"]);
    assert!(text.lines().any(|l| l.starts_with("Car.ap ") && l.ends_with("1.000000")));
}

#[test]
fn viz_writes_ply_and_ppm() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path());
    ok(t.path(), &["viz", "--input", "run/000000.bin", "--labels", "run/000000.gt.txt", "--out", "v"]);
    let ppm = std::fs::read(t.path().join("v/000000.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n496 432\n255\n"));
    let ply = std::fs::read_to_string(t.path().join("v/000000.ply")).unwrap();
    assert!(ply.starts_with("ply\n"));
}

#[test]
fn input_errors_exit_with_two() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert_eq!(rangekit(d, &["project", "--input", "missing.bin"]).status.code(), Some(2));
    std::fs::write(d.join("bad.cfg"), "bogus.key = 1\n").unwrap();
    let out = rangekit(d, &["--config", "bad.cfg", "pipeline", "--synthetic", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    std::fs::write(d.join("short.bin"), [0u8; 10]).unwrap();
    assert_eq!(rangekit(d, &["project", "--input", "short.bin"]).status.code(), Some(2));
    assert_eq!(rangekit(d, &["convert", "--input", "a.txt", "--output", "b.txt"]).status.code(), Some(2));
}

#[test]
fn config_file_is_honoured() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path());
    std::fs::write(t.path().join("c.cfg"), "projection.width = 256\nprojection.height = 32\n").unwrap();
    let r = ok(t.path(), &["--config", "c.cfg", "--format", "kv", "project", "--input", "run/000000.bin"]);
    assert_eq!(kv(&r, "width"), "256");
    assert_eq!(kv(&r, "height"), "32");
}
