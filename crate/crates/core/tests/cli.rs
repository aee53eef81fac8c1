//! End-to-end runs of the command-line binary.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

fn rdloop(args: &[&str]) -> std::process::Output {
    Command::new(common::bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn cfg(name: &str) -> String {
    common::config_dir().join(name).display().to_string()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("snapshots")] {
        let Ok(entries) = fs::read_dir(&sub) else {
            continue;
        };
        for e in entries {
            let p = e.unwrap().path();
            if p.extension().is_some_and(|x| x == "csv") {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rdloop(&[
        "simulate",
        "--config",
        &cfg("zero.toml"),
        "--out",
        out,
        "--stride",
        "100",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let kappa = fs::read_to_string(dir.path().join("kappa.csv")).unwrap();
    assert!(kappa.starts_with("t,kappa_1,kappa_2\n"));
    assert_eq!(kappa.lines().count(), 502);
    let readings = fs::read_to_string(dir.path().join("readings.csv")).unwrap();
    assert!(readings.starts_with("t,r_1,r_2\n"));
    let snap = fs::read_to_string(dir.path().join("snapshots/step_0000500.csv")).unwrap();
    assert!(snap.starts_with("node,x,value\n"));
    assert_eq!(snap.lines().count(), 34);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|p| p == "v.csv"));
}

#[test]
fn runs_are_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = rdloop(&[
            "simulate",
            "--config",
            &cfg("demo_2d.toml"),
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    let (ta, tb) = (csv_files(a.path()), csv_files(b.path()));
    assert!(ta.len() > 4);
    assert_eq!(ta, tb);
}

#[test]
fn sweep_matches_single_runs_for_any_thread_count() {
    let (one, many) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, threads) in [(&one, "1"), (&many, "4")] {
        let o = rdloop(&[
            "sweep",
            "--threads",
            threads,
            "--config",
            &cfg("zero.toml"),
            "--config",
            &cfg("regulation.toml"),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["zero", "regulation"] {
        let (a, b) = (
            csv_files(&one.path().join(name)),
            csv_files(&many.path().join(name)),
        );
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn broken_weights_exit_two() {
    let o = rdloop(&["validate", "--config", &cfg("invalid/broken_weights.toml")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sums to 1.2"));
    let dir = tempfile::tempdir().unwrap();
    let o = rdloop(&[
        "simulate",
        "--config",
        &cfg("invalid/broken_weights.toml"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_key_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(cfg("zero.toml"))
        .unwrap()
        .replace("dt_seconds", "dt");
    let path = dir.path().join("typo.toml");
    fs::write(&path, text).unwrap();
    let o = rdloop(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt"));
}

#[test]
fn strict_picard_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let lenient = rdloop(&[
        "picard",
        "--config",
        &cfg("picard_strict.toml"),
        "--out",
        out,
    ]);
    assert_eq!(lenient.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["picard"]["converged"], false);
    let strict = rdloop(&[
        "picard",
        "--strict",
        "--config",
        &cfg("picard_strict.toml"),
        "--out",
        out,
    ]);
    assert_eq!(strict.status.code(), Some(4));
}

#[test]
fn residual_reads_existing_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(rdloop(&[
        "simulate",
        "--config",
        &cfg("regulation.toml"),
        "--out",
        out
    ])
    .status
    .success());
    let sim: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let o = rdloop(&[
        "residual",
        "--config",
        &cfg("regulation.toml"),
        "--out",
        out,
    ]);
    assert!(o.status.success());
    let res: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("residual.json")).unwrap())
            .unwrap();
    assert_eq!(res["source"], "existing");
    // tables round-trip exactly, so the recomputed defect is identical
    assert_eq!(res["residual"], sim["residual"]);

    // a tampered control table shows up as a defect
    let kappa = fs::read_to_string(dir.path().join("kappa.csv")).unwrap();
    let mut lines: Vec<String> = kappa.lines().map(String::from).collect();
    let t = lines[1000].split(',').next().unwrap().to_string();
    lines[1000] = format!("{t},5.0e-1");
    fs::write(dir.path().join("kappa.csv"), lines.join("\n") + "\n").unwrap();
    rdloop(&[
        "residual",
        "--config",
        &cfg("regulation.toml"),
        "--out",
        out,
    ]);
    let res: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("residual.json")).unwrap())
            .unwrap();
    assert!(res["residual"].as_f64().unwrap() > 1.0);
}

#[test]
fn verify_heat_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = rdloop(&["verify", "heat", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["measured"]["max_error"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn probe_without_config_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = rdloop(&["verify", "stability", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
