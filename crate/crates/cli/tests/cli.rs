use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rhm::dataset::{pairs_from_csv, Dataset};
use serde_json::Value;

fn rhm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const P16: [&str; 10] = ["--v", "16", "--m", "4", "--s", "2", "-L", "4", "--seed", "3"];

#[test]
fn oracle_loss_ladder_starts_at_log_v() {
    let mut args = vec!["oracle-loss"];
    args.extend(P16);
    args.extend(["--instances", "64", "--test-size", "32"]);
    let out = stdout(&rhm(&args));
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 5);
    let losses: Vec<f64> = rows.iter().map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(losses[0], 16f64.ln());
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    assert!(out.contains("# config="));
}

#[test]
fn outputs_are_reproducible_and_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (path(dir.path(), "a.bin"), path(dir.path(), "b.bin"));
    for p in [&a, &b] {
        let mut args = vec!["gen-data"];
        args.extend(P16);
        args.extend(["--n", "500", "--out", s(p)]);
        stdout(&rhm(&args));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let ds = Dataset::read_binary(bytes.as_slice()).unwrap();
    assert_eq!(ds.len(), 500);

    let run = |w: &str| {
        let mut args = vec!["oracle-loss"];
        args.extend(P16);
        args.extend(["--instances", "6", "--test-size", "16", "--workers", w]);
        stdout(&rhm(&args))
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "c.toml");
    std::fs::write(
        &cfg,
        "kind = \"theory\"\n[params]\nv = 16\nm = 4\ns = 2\nL = 3\nseed = 1\n[options]\nformat = \"csv\"\n",
    )
    .unwrap();
    let out = stdout(&rhm(&["theory", "--config", s(&cfg), "--m", "2"]));
    assert!(out.contains("\"m\":2"), "{out}");
    assert!(out.lines().any(|l| l.contains(",1,")));

    std::fs::write(&cfg, "[params]\nv = 16\n[options]\nwindow_size = 3\n").unwrap();
    let bad = rhm(&["theory", "--config", s(&cfg)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("window_size"));

    std::fs::write(&cfg, "kind = \"learner\"\n").unwrap();
    assert_eq!(rhm(&["theory", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    // f = 1: theory does not apply
    let o = rhm(&["theory", "--v", "4", "--m", "4", "--s", "2", "-L", "3", "--seed", "0"]);
    assert_eq!(o.status.code(), Some(3));
    // m > v^(s-1) violates the model constraints
    let o = rhm(&["gen-grammar", "--v", "4", "--m", "5", "--s", "2", "-L", "3", "--seed", "0"]);
    assert_eq!(o.status.code(), Some(3));
    // missing seed
    assert_eq!(rhm(&["gen-grammar", "--v", "4", "--m", "2", "--s", "2", "-L", "3"]).status.code(), Some(2));
    // unknown flag
    assert_eq!(rhm(&["theory", "--frobnicate"]).status.code(), Some(2));

    // too few points for a fit
    let dir = tempfile::tempdir().unwrap();
    let curve = path(dir.path(), "c.csv");
    std::fs::write(&curve, "step,loss\n1,2.0\n2,1.5\n4,1.0\n").unwrap();
    let o = rhm(&["fit", "--curve", s(&curve), "--floor", "0.1", "--window", "all"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn learner_summary_carries_theory() {
    let dir = tempfile::tempdir().unwrap();
    let summary = path(dir.path(), "summary.json");
    let out = stdout(&rhm(&[
        "learner", "--v", "24", "--m", "6", "--s", "2", "-L", "3", "--seed", "5", "--grid-min", "200", "--grid-max", "300",
        "--trials", "2", "--max-depth", "1", "--summary", s(&summary),
    ]));
    assert!(out.contains("params_hash,mode,level,samples,trial,ari,success"));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(doc["version"], "1");
    assert_eq!(doc["results"]["theory"]["levels"][0]["general"].as_f64(), Some(6912.0));
    assert_eq!(doc["results"]["estimates"].as_array().unwrap().len(), 2);
    assert!(doc["config"]["params"].is_object());
}

#[test]
fn fit_recovers_a_planted_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let curve = path(dir.path(), "curve.csv");
    let mut text = String::from("# architecture=transformer\nstep,loss\n");
    for k in 0..30 {
        let x = 10f64 * 1.3f64.powi(k);
        text.push_str(&format!("{x},{}\n", 0.2 + 5.0 * x.powf(-0.5)));
    }
    std::fs::write(&curve, text).unwrap();
    let out = stdout(&rhm(&["fit", "--curve", s(&curve), "--floor", "0.2", "--window", "all", "--target", "-0.5"]));
    let doc: Value = serde_json::from_str(&out).unwrap();
    let e = doc["results"]["fit"]["exponent"].as_f64().unwrap();
    assert!((e + 0.5).abs() < 1e-9, "{e}");
    assert_eq!(doc["results"]["architecture"], "transformer");
}

#[test]
fn export_joins_loss_curve_and_theory() {
    let dir = tempfile::tempdir().unwrap();
    let theory = path(dir.path(), "theory.json");
    stdout(&rhm(&["theory", "--v", "16", "--m", "4", "--s", "2", "-L", "4", "--seed", "3", "--out", s(&theory)]));
    let hash = serde_json::from_str::<Value>(&std::fs::read_to_string(&theory).unwrap()).unwrap()["params_hash"]
        .as_str()
        .unwrap()
        .to_string();
    let curve = path(dir.path(), "curve.csv");
    std::fs::write(
        &curve,
        format!("# architecture=transformer\n# params_hash={hash}\n# version=1\nstep,loss\n1,2.7\n10,2.0\n100,1.1\n"),
    )
    .unwrap();
    let out = stdout(&rhm(&["export", s(&theory), s(&curve)]));
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "params_hash,series,x,y");
    assert!(rows.iter().all(|r| r.starts_with(&hash) || r.starts_with("params_hash")));
    assert!(rows.contains(&format!("{hash},theory:beta_positional,,-0.5").as_str()), "{out}");
    assert_eq!(rows.iter().filter(|r| r.contains("loss:transformer")).count(), 3);

    let json_out = stdout(&rhm(&["export", "--format", "json", s(&theory), s(&curve)]));
    let doc: Value = serde_json::from_str(&json_out).unwrap();
    assert_eq!(doc["results"][0]["params_hash"], hash.as_str());
    for key in ["version", "config", "results"] {
        assert!(doc.get(key).is_some());
    }

    // re-exporting the same file twice is fine; a conflicting duplicate is not
    stdout(&rhm(&["export", s(&curve), s(&curve)]));
    let other = path(dir.path(), "other.csv");
    std::fs::write(
        &other,
        format!("# architecture=transformer\n# params_hash={hash}\nstep,loss\n1,2.7\n10,2.1\n100,1.1\n"),
    )
    .unwrap();
    assert_eq!(rhm(&["export", s(&curve), s(&other)]).status.code(), Some(3));

    let old = path(dir.path(), "old.csv");
    std::fs::write(&old, format!("# version=0\n# params_hash={hash}\nstep,loss\n1,1\n")).unwrap();
    let o = rhm(&["export", s(&theory), s(&old)]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("version 1") && err.contains("version 0"), "{err}");

    assert_eq!(rhm(&["export"]).status.code(), Some(2));
    // never overwrite an input
    assert_eq!(rhm(&["export", s(&curve), "--out", s(&curve)]).status.code(), Some(2));
}

#[test]
fn probe_data_pairs_differ_only_under_the_node() {
    let out = stdout(&rhm(&[
        "probe-data", "--v", "8", "--m", "2", "--s", "2", "-L", "3", "--seed", "2", "--n", "50", "--level", "2",
        "--position", "1", "--transform", "variable",
    ]));
    let pairs = pairs_from_csv(&out).unwrap();
    assert_eq!(pairs.len(), 50);
    for p in &pairs {
        assert_eq!(p.original[4..], p.transformed[4..]);
        assert_eq!(p.original[..2], p.transformed[..2]);
        assert_ne!(p.original[2..4], p.transformed[2..4]);
    }
}
