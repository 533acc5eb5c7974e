use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pho(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pho"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn events(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn column(csv_path: &Path, name: &str) -> Vec<String> {
    let mut rd = csv::Reader::from_path(csv_path).unwrap();
    let i = rd
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == name)
        .unwrap();
    rd.records().map(|r| r.unwrap()[i].to_string()).collect()
}

#[test]
fn dataset_is_deterministic_and_non_negative() {
    let d = tempfile::tempdir().unwrap();
    ok(&pho(
        d.path(),
        &[
            "generate-dataset",
            "--n",
            "500",
            "--seed",
            "3",
            "--out",
            "a.csv",
        ],
    ));
    ok(&pho(
        d.path(),
        &[
            "generate-dataset",
            "--n",
            "500",
            "--seed",
            "3",
            "--out",
            "b.csv",
        ],
    ));
    let a = fs::read(d.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b.csv")).unwrap());
    let labels = column(&d.path().join("a.csv"), "t_to_blk_s");
    assert_eq!(labels.len(), 500);
    assert!(labels.iter().all(|l| l.parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn zero_rows_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(
        pho(d.path(), &["generate-dataset", "--n", "0"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn train_writes_model_and_fifty_epochs() {
    let d = tempfile::tempdir().unwrap();
    ok(&pho(
        d.path(),
        &["generate-dataset", "--n", "2000", "--out", "data.csv"],
    ));
    let stdout = ok(&pho(
        d.path(),
        &["train", "--dataset", "data.csv", "--out", "m/model.bin"],
    ));
    assert!(stdout.contains("test R2"), "{stdout}");
    assert!(d.path().join("m/model.bin").exists());
    assert_eq!(column(&d.path().join("m/history.csv"), "epoch").len(), 50);

    // The trained network can drive a run.
    let cfg = "[strategy]\npredictor = \"model\"\n[paths]\nmodel = \"m/model.bin\"\n";
    fs::write(d.path().join("model.toml"), cfg).unwrap();
    ok(&pho(
        d.path(),
        &["simulate", "--config", "model.toml", "--out", "sim"],
    ));
    let ev = events(&d.path().join("sim/events.jsonl"));
    assert!(ev.iter().any(|e| e["transition"] == "ho_complete"));
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let d = tempfile::tempdir().unwrap();
    let out = pho(d.path(), &["train", "--dataset", "absent.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

#[test]
fn missing_model_is_a_runtime_error() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.toml"),
        "[strategy]\npredictor = \"model\"\n",
    )
    .unwrap();
    assert_eq!(
        pho(d.path(), &["simulate", "--config", "c.toml"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn proactive_run_hands_over_once() {
    let d = tempfile::tempdir().unwrap();
    ok(&pho(d.path(), &["simulate", "--out", "o"]));
    let ev = events(&d.path().join("o/events.jsonl"));
    assert_eq!(
        ev.iter()
            .filter(|e| e["transition"] == "ho_complete")
            .count(),
        1
    );
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("o/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(summary["summary"]["completed_before_shadow"], true);
}

#[test]
fn no_strategy_shows_the_dip_without_events() {
    let d = tempfile::tempdir().unwrap();
    ok(&pho(
        d.path(),
        &["simulate", "--strategy", "none", "--out", "o"],
    ));
    assert!(events(&d.path().join("o/events.jsonl")).is_empty());
    let rssi: Vec<f64> = column(&d.path().join("o/trace.csv"), "rssi_dbm")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    let rss1: Vec<f64> = column(&d.path().join("o/rss.csv"), "sbs_1")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    // The serving trace is the SBS 1 trace with the shadow cut in.
    assert_eq!(rssi, rss1);
    let max_gap = fs::read_to_string(d.path().join("o/summary.json")).unwrap();
    let v: Value = serde_json::from_str(&max_gap).unwrap();
    assert!(v["summary"]["max_blockage_loss_db"].as_f64().unwrap() >= 20.0);
}

#[test]
fn bad_field_is_named() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.toml"),
        "[channel.blockage]\nextra_loss_db = 5.0\n",
    )
    .unwrap();
    let out = pho(d.path(), &["simulate", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra_loss_db"));

    fs::write(d.path().join("u.toml"), "[run]\nsead = 1\n").unwrap();
    let out = pho(d.path(), &["simulate", "--config", "u.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sead"));
}

#[test]
fn summary_reproduces_from_its_embedded_config() {
    let d = tempfile::tempdir().unwrap();
    ok(&pho(
        d.path(),
        &[
            "simulate",
            "--strategy",
            "reactive",
            "--seed",
            "9",
            "--out",
            "a",
        ],
    ));
    let a: Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("a/summary.json")).unwrap())
            .unwrap();
    let cfg: pho_core::ScenarioConfig = serde_json::from_value(a["config"].clone()).unwrap();
    assert_eq!(cfg.hash(), a["config_hash"].as_str().unwrap());
    fs::write(d.path().join("again.toml"), cfg.to_toml()).unwrap();
    ok(&pho(
        d.path(),
        &["simulate", "--config", "again.toml", "--out", "b"],
    ));
    let b: Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("b/summary.json")).unwrap())
            .unwrap();
    assert_eq!(a, b);
}

#[test]
fn frames_are_optional() {
    let d = tempfile::tempdir().unwrap();
    ok(&pho(d.path(), &["simulate", "--out", "a"]));
    assert!(!d.path().join("a/frames.jsonl").exists());
    ok(&pho(d.path(), &["simulate", "--frames", "--out", "b"]));
    let frames = fs::read_to_string(d.path().join("b/frames.jsonl")).unwrap();
    assert!(frames.lines().count() > 26);
}

#[test]
fn sweep_tables() {
    let d = tempfile::tempdir().unwrap();
    ok(&pho(
        d.path(),
        &[
            "sweep", "--axis", "speed", "--values", "10,30", "--out", "s",
        ],
    ));
    let table = d.path().join("s/sweep.csv");
    for col in ["speed_mph", "t_to_blk_s", "t_w_s", "d_m"] {
        assert_eq!(column(&table, col).len(), 2, "{col}");
    }
    assert!(d.path().join("s/speed_30/trace.csv").exists());

    ok(&pho(
        d.path(),
        &[
            "sweep",
            "--axis",
            "trigger_offset",
            "--values=-4,-2,0",
            "--out",
            "o",
        ],
    ));
    let drop = column(&d.path().join("o/sweep.csv"), "norm_rssi_drop_pct");
    assert_eq!(drop.last().unwrap(), "0.00");
    assert!(drop[0].parse::<f64>().unwrap() > drop[1].parse::<f64>().unwrap());
}

#[test]
fn sweep_usage_errors() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        &["sweep", "--axis", "speed", "--values", ""][..],
        &["sweep", "--axis", "colour", "--values", "1"],
        &["sweep", "--axis", "speed"],
    ] {
        assert_eq!(pho(d.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn plots_mark_the_handover() {
    let d = tempfile::tempdir().unwrap();
    ok(&pho(d.path(), &["simulate", "--out", "o"]));
    ok(&pho(d.path(), &["plot", "o", "--out", "p"]));
    let rssi = fs::read_to_string(d.path().join("p/rssi.svg")).unwrap();
    assert!(rssi.contains("handover trigger") && rssi.contains("handover complete"));
    let mos = fs::read_to_string(d.path().join("p/mos.svg")).unwrap();
    assert!(mos.starts_with("<svg"));
}

#[test]
fn empty_trace_cannot_be_plotted() {
    let d = tempfile::tempdir().unwrap();
    fs::create_dir(d.path().join("e")).unwrap();
    fs::write(
        d.path().join("e/trace.csv"),
        "t_s,x_m,serving_id,rssi_dbm,rssi_norm,mos,state\n",
    )
    .unwrap();
    assert_eq!(pho(d.path(), &["plot", "e"]).status.code(), Some(3));
}
