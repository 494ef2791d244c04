use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mphom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mphom"))
        .args(args)
        .env("MPHOM_OUTPUT_DIR", dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = mphom(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

#[test]
fn balanced_pairs_vanish_on_the_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["probability-surface", "--l", "2", "--x-class", "A", "--s", "5", "--grid", "41"]);
    let csv = dir.path().join("surface.csv");
    let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "kbar,dk,density");
    let r = rows(&csv);
    assert_eq!(r.len(), 41 * 41);
    let diag: Vec<&Vec<f64>> = r.iter().filter(|row| row[1] == 0.0).collect();
    assert_eq!(diag.len(), 41);
    assert!(diag.iter().all(|row| row[2] == 0.0));
    assert!(r.iter().any(|row| row[2] > 0.0));
}

#[test]
fn bunched_pairs_oscillate_in_the_difference() {
    // far apart sources: B density at kbar = 0 vanishes where dk s / 4 = pi/2,
    // i.e. at dk = 4 pi / s in units of 1/sigma_x, 8 pi / s in units of sigma_k
    let dir = tempfile::tempdir().unwrap();
    let s = 20.0;
    ok(dir.path(), &["probability-surface", "--x-class", "B", "--s", "20", "--grid", "2001", "--range", "4"]);
    let r = rows(&dir.path().join("surface.csv"));
    let line: Vec<(f64, f64)> = r.iter().filter(|row| row[0].abs() < 1e-12).map(|row| (row[1], row[2])).collect();
    assert_eq!(line.len(), 2001);
    let mut minima = Vec::new();
    for w in line.windows(3) {
        if w[1].0 > 0.0 && w[1].1 < w[0].1 && w[1].1 < w[2].1 {
            minima.push(w[1].0);
        }
    }
    let period = 8.0 * PI / s;
    assert!(minima.len() >= 2, "{minima:?}");
    assert!((minima[0] - 0.5 * period).abs() < 0.01, "{minima:?}");
    for m in minima.windows(2) {
        assert!((m[1] - m[0] - period).abs() < 0.01, "{minima:?}");
    }
}

#[test]
fn higher_photon_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["probability-surface", "--l", "3", "--x-class", "UA", "--grid", "7", "--fixed", "-0.5", "--out", "l3.csv"]);
    let text = fs::read_to_string(dir.path().join("l3.csv")).unwrap();
    assert!(text.starts_with("k1,k2,k3,density\n"));
    let r = rows(&dir.path().join("l3.csv"));
    assert_eq!(r.len(), 49);
    assert!(r.iter().all(|row| row[2] == -0.5 && row[3] >= 0.0));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["probability-surface", "--l", "2", "--x-class", "UA"],
        vec!["probability-surface", "--l", "3", "--x-class", "A"],
        vec!["probability-surface", "--x-class", "Q"],
        vec!["bucket-compare", "--l", "5"],
        vec!["fi-curve", "--s-grid", "log:0:1:3"],
        vec!["fi-curve", "--quad", "simpson"],
        vec!["estimate", "--trials", "1"],
        vec!["fi-curve", "--no-such-flag"],
    ] {
        let out = mphom(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn manifest_reruns_the_same_command() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["fi-curve", "--ns", "0.5", "--s-grid", "0.5,3", "--lmax", "3", "--quad", "mc", "--samples", "10000", "--seed", "7"]);
    let first = fs::read(d.join("fi_curve.csv")).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("fi_curve.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fi-curve");
    assert_eq!(manifest["outputs"][0], "fi_curve.csv");
    assert_eq!(manifest["config"]["fi-curve"]["quadrature"]["seed"], 7);

    let again = d.join("again");
    let cfg = d.join("fi_curve.manifest.json");
    ok(d, &["--config", cfg.to_str().unwrap(), "--out-dir", again.to_str().unwrap(), "fi-curve"]);
    assert_eq!(fs::read(again.join("fi_curve.csv")).unwrap(), first);
    assert_eq!(fs::read(again.join("fi_curve.manifest.json")).unwrap(), fs::read(&cfg).unwrap());

    let r = rows(&d.join("fi_curve.csv"));
    assert_eq!(r.len(), 6);
    assert!(r.iter().all(|row| row[2] >= 0.0 && row[4] > 0.0));
}

#[test]
fn toml_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.toml");
    fs::write(&cfg, "[bucket-compare]\nl = 2\ns-grid = \"0.01,6\"\nns = 9.0\n\n[bucket-compare.quadrature]\nscheme = \"gh\"\n")
        .unwrap();
    ok(d, &["--config", cfg.to_str().unwrap(), "bucket-compare", "--ns", "1"]);
    let r = rows(&d.join("bucket.csv"));
    assert_eq!(r.len(), 2);
    // near zero separation counting camera splits is enough, beyond it is not
    assert!(r[0][2] / r[0][1] > 0.95);
    assert!(r[1][2] / r[1][1] < 0.1);
    let manifest = fs::read_to_string(d.join("bucket.manifest.json")).unwrap();
    assert!(manifest.contains("\"ns\": 1.0"));
}

#[test]
fn estimates_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["estimate", "--true-s", "1", "--frames", "400", "--trials", "4", "--seed", "11", "--crb-samples", "10000"];
    ok(d, &args);
    let a = fs::read(d.join("estimate.csv")).unwrap();
    let summary_a = fs::read(d.join("estimate.summary.json")).unwrap();
    ok(d, &args);
    assert_eq!(fs::read(d.join("estimate.csv")).unwrap(), a);
    assert_eq!(fs::read(d.join("estimate.summary.json")).unwrap(), summary_a);

    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("trial,s_hat,at_boundary\n"));
    assert_eq!(text.lines().count(), 5);
    let summary: serde_json::Value = serde_json::from_slice(&summary_a).unwrap();
    for key in ["mean", "variance", "crb", "bias", "variance_ratio", "passed", "boundary_hits"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
}

#[test]
fn simulate_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--s", "1.5", "--ns", "1", "--frames", "20000", "--seed", "3", "--out", "rec.txt"]);
    let rec = d.join("rec.txt");
    ok(d, &["fit", "--record", rec.to_str().unwrap(), "--ns", "1"]);
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("fit.json")).unwrap()).unwrap();
    let s_hat = fit["s_hat"].as_f64().unwrap();
    assert!((s_hat - 1.5).abs() < 0.1, "{s_hat}");
    assert_eq!(fit["frames"], 20000);
    assert_eq!(fit["at_boundary"], false);
}

#[test]
fn strict_mode_fails_on_unconverged_values() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--strict", "fi-curve", "--s-grid", "2", "--lmax", "4", "--quad", "mc", "--samples", "10000", "--rel-error", "1e-6"];
    let out = mphom(dir.path(), &args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not reach"));
    // without --strict the same run succeeds and flags the rows
    ok(dir.path(), &args[1..]);
    let text = fs::read_to_string(dir.path().join("fi_curve.csv")).unwrap();
    assert!(text.contains(",false"));
}
