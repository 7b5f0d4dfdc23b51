use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn soundocc(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soundocc"))
        .current_dir(cwd)
        .env_remove("SOUNDOCC_CONFIG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(cwd: &Path, args: &[&str]) -> Output {
    let out = soundocc(cwd, args);
    assert!(
        out.status.success(),
        "soundocc {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&read(path)).expect("valid json")
}

fn data_rows(text: &str) -> usize {
    text.lines().filter(|l| !l.starts_with('#')).count() - 1
}

const QUICK: &str = r#"{
    "generator": { "rooms": [ { "room_id": "P01", "noise_scale": 1.0 }, { "room_id": "P02", "noise_scale": 1.6 } ] },
    "training": { "dataset_size": 5000, "pipeline": { "train": { "epochs": 1500, "learning_rate": 1.0 } } }
}"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("quick.json"), QUICK).unwrap();
    dir
}

#[test]
fn synth_layout_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    ok(cwd, &["--seed", "4", "--tag", "a", "synth"]);
    ok(cwd, &["--seed", "4", "--tag", "b", "synth"]);
    let a = cwd.join("runs/synth/a");
    let b = cwd.join("runs/synth/b");
    let slots = read(a.join("slots.csv"));
    assert_eq!(data_rows(&slots), 2772);
    assert!(slots.starts_with("# soundocc 0.1.0 config="));
    for f in ["slots.csv", "truth.csv", "rooms.json", "manifest.json"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    assert!(!a.join(".lock").exists());
    let manifest = json(a.join("manifest.json"));
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    assert_eq!(json(a.join("rooms.json"))["rooms"][0]["room_id"], "P01");

    ok(cwd, &["--seed", "5", "--tag", "c", "synth", "--days", "2"]);
    let other = read(cwd.join("runs/synth/c/slots.csv"));
    assert_eq!(data_rows(&other), 264);
    assert_ne!(other.lines().nth(2), slots.lines().nth(2));
}

#[test]
fn invalid_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    std::fs::write(
        cwd.join("bad.json"),
        r#"{ "generator": { "occupied_noise_sigma": -1.0 } }"#,
    )
    .unwrap();
    let out = soundocc(cwd, &["--config", "bad.json", "--tag", "x", "synth"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("generator"));

    std::fs::write(cwd.join("typo.json"), r#"{ "seeed": 1 }"#).unwrap();
    assert!(!soundocc(cwd, &["--config", "typo.json", "synth"]).status.success());

    assert!(!soundocc(cwd, &["--method", "vote", "detect"]).status.success());
    let out = soundocc(cwd, &["--tz", "+25:00", "synth"]);
    assert!(!out.status.success());

    let out = soundocc(cwd, &["--slots", "missing.csv", "--tag", "m", "detect"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("missing.csv"));
}

#[test]
fn config_from_environment_and_flag_precedence() {
    let dir = setup();
    let cwd = dir.path();
    std::fs::write(cwd.join("seeded.json"), r#"{ "seed": 1, "days": 1 }"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_soundocc"))
        .current_dir(cwd)
        .env("SOUNDOCC_CONFIG", "seeded.json")
        .args(["--seed", "2", "--tag", "env", "synth"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = json(cwd.join("runs/synth/env/manifest.json"));
    assert_eq!(manifest["config"]["seed"], 2);
    assert_eq!(manifest["config"]["generator"]["seed"], 2);
    assert_eq!(manifest["config"]["days"], 1);
}

#[test]
fn locked_output_dir_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    std::fs::create_dir_all(cwd.join("runs/synth/busy")).unwrap();
    std::fs::write(cwd.join("runs/synth/busy/.lock"), "").unwrap();
    let out = soundocc(cwd, &["--tag", "busy", "synth", "--days", "1"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("locked"));
}

fn synth_quick(cwd: &Path, days: &str) {
    ok(
        cwd,
        &[
            "--config",
            "quick.json",
            "--seed",
            "3",
            "--tag",
            "s",
            "synth",
            "--days",
            days,
        ],
    );
}

const INPUTS: [&str; 6] = [
    "--slots",
    "runs/synth/s/slots.csv",
    "--truth",
    "runs/synth/s/truth.csv",
    "--room-config",
    "runs/synth/s/rooms.json",
];

fn args<'a>(config: &'a str, tag: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--config", config, "--tag", tag];
    v.extend(INPUTS);
    v.extend(extra);
    v
}

#[test]
fn detect_methods_and_model_requirements() {
    let dir = setup();
    let cwd = dir.path();
    synth_quick(cwd, "3");

    ok(cwd, &args("quick.json", "thr", &["--method", "threshold", "detect"]));
    let thr = read(cwd.join("runs/detect/thr/verdicts_threshold.csv"));
    assert!(thr.lines().skip(2).all(|l| l.split(',').nth(2) == Some("threshold")));
    assert!(!cwd.join("runs/detect/thr/verdicts_cluster.csv").exists());
    let eval = json(cwd.join("runs/detect/thr/evaluation.json"));
    assert_eq!(eval["methods"]["threshold"]["accuracy"], 1.0);

    let out = soundocc(cwd, &args("quick.json", "nomodel", &["--method", "semi", "detect"]));
    assert!(!out.status.success());
    assert!(stderr(&out).contains("semi_supervised"));

    ok(cwd, &args("quick.json", "all", &["detect", "--train"]));
    let run = cwd.join("runs/detect/all");
    let rows: Vec<usize> = ["threshold", "cluster", "classifier", "semi_supervised"]
        .iter()
        .map(|m| data_rows(&read(run.join(format!("verdicts_{m}.csv")))))
        .collect();
    assert!(rows.iter().all(|&r| r == 2 * 3 * 132), "{rows:?}");
    assert!(run.join("classifier.json").exists());
    let clusters = json(run.join("clusters.json"));
    assert!(clusters["clusters"]["cluster"]["P01"]["best"]["k"].as_u64().unwrap() >= 2);
    let eval = json(run.join("evaluation.json"));
    assert!(eval["methods"].get("cluster").is_none());
    assert!(eval["methods"]["semi_supervised"]["accuracy"].as_f64().unwrap() > 0.9);

    ok(
        cwd,
        &args("quick.json", "pooled", &["--method", "cluster", "--pool", "detect"]),
    );
    let clusters = json(cwd.join("runs/detect/pooled/clusters.json"));
    assert!(clusters["clusters"]["cluster"].get("pooled").is_some());
}

#[test]
fn train_records_half_split_and_is_reproducible() {
    let dir = setup();
    let cwd = dir.path();
    synth_quick(cwd, "21");
    std::fs::write(
        cwd.join("fast.json"),
        QUICK.replace("\"epochs\": 1500", "\"epochs\": 20"),
    )
    .unwrap();
    ok(cwd, &args("fast.json", "a", &["train"]));
    ok(cwd, &args("fast.json", "b", &["train"]));
    let metrics = json(cwd.join("runs/train/a/training_metrics.json"));
    assert_eq!(metrics["dataset_size"], 5000);
    assert_eq!(metrics["autoencoder_pool"], 2500);
    assert_eq!(metrics["classifier_samples"], 5000);
    for f in ["autoencoder.json", "classifier.json", "training_metrics.json"] {
        assert_eq!(
            read(cwd.join("runs/train/a").join(f)),
            read(cwd.join("runs/train/b").join(f))
        );
    }

    std::fs::write(
        cwd.join("loud.json"),
        r#"[{ "room_id": "P01", "threshold": 1e12 }, { "room_id": "P02", "threshold": 1e12 }]"#,
    )
    .unwrap();
    let out = soundocc(
        cwd,
        &[
            "--config",
            "fast.json",
            "--slots",
            "runs/synth/s/slots.csv",
            "--room-config",
            "loud.json",
            "--tag",
            "one",
            "train",
        ],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("single class"));
}

/// Slots whose cooling energy is 6.57 kWh when occupied and 6.04 kWh otherwise.
fn published_mean_fixture(cwd: &Path, occupied_any: bool) {
    let constants = 1.204 * 1.012 * 10.0 / 3600.0;
    let mut slots = String::from(
        "room_id,slot_start,bin1,bin2,bin3,bin4,bin5,bin6,bin7,bin8,room_temp_c,supply_temp_c,air_volume_m3\n",
    );
    let mut verdicts = String::from("room_id,slot_start,method,occupied,probability,cluster_id\n");
    for i in 0..132 {
        let occupied = occupied_any && i % 2 == 0;
        let kwh: f64 = if occupied { 6.57 } else { 6.04 };
        let t = format!("2017-11-01T{:02}:{:02}:00Z", 8 + i * 5 / 60, (i * 5) % 60);
        slots.push_str(&format!("P02,{t},3000,0,0,0,0,0,0,0,25,15,{}\n", kwh / constants));
        verdicts.push_str(&format!("P02,{t},threshold,{occupied},,\n"));
    }
    std::fs::write(cwd.join("fixture.csv"), slots).unwrap();
    std::fs::write(cwd.join("fixture_verdicts.csv"), verdicts).unwrap();
}

#[test]
fn energy_reports_published_gap_and_absent_class() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    published_mean_fixture(cwd, true);
    let run = ["--slots", "fixture.csv", "--verdicts", "fixture_verdicts.csv"];
    let mut a = run.to_vec();
    a.extend(["--tag", "gap", "energy"]);
    ok(cwd, &a);
    let report = json(cwd.join("runs/energy/gap/energy_report.json"));
    let gap = report["pooled"]["percent_gap"].as_f64().unwrap();
    assert!((gap - 8.8).abs() <= 0.1, "{gap}");
    assert_eq!(report["pooled"]["occupied"]["count"], 66);
    assert!(report["per_room"]["P02"]["percent_gap"].is_number());
    let cdf = read(cwd.join("runs/energy/gap/energy_cdf.csv"));
    assert!(cdf.lines().nth(1) == Some("class,x,cumulative_probability"));
    assert!(read(cwd.join("runs/energy/gap/temperature_histogram.csv")).contains("occupied,25,66"));

    published_mean_fixture(cwd, false);
    let mut b = run.to_vec();
    b.extend(["--tag", "absent", "energy"]);
    ok(cwd, &b);
    let report = json(cwd.join("runs/energy/absent/energy_report.json"));
    assert!(report["pooled"]["occupied"].is_null());
    assert!(report["pooled"]["percent_gap"].is_null());

    let no_hvac =
        "room_id,slot_start,bin1,bin2,bin3,bin4,bin5,bin6,bin7,bin8\nP02,2017-11-01T08:00:00Z,1,0,0,0,0,0,0,0\n";
    std::fs::write(cwd.join("no_hvac.csv"), no_hvac).unwrap();
    let out = soundocc(
        cwd,
        &["--slots", "no_hvac.csv", "--verdicts", "fixture_verdicts.csv", "energy"],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("room_temp_c"), "{}", stderr(&out));
}

#[test]
fn evaluate_verdicts_and_transfer() {
    let dir = setup();
    let cwd = dir.path();
    synth_quick(cwd, "3");
    ok(cwd, &args("quick.json", "d", &["--method", "threshold", "detect"]));
    ok(
        cwd,
        &args(
            "quick.json",
            "e",
            &["--verdicts", "runs/detect/d/verdicts_threshold.csv", "evaluate"],
        ),
    );
    let eval = json(cwd.join("runs/evaluate/e/evaluation.json"));
    assert_eq!(eval["methods"]["threshold"]["total"], 2 * 3 * 132);

    ok(
        cwd,
        &args(
            "quick.json",
            "t",
            &["--train-rooms", "P01", "--test-rooms", "P02", "evaluate"],
        ),
    );
    let report = json(cwd.join("runs/evaluate/t/transfer.json"));
    assert_eq!(report["train_rooms"][0], "P01");
    assert!(
        report["per_room"]["P02"]["semi_supervised"]["accuracy"]
            .as_f64()
            .unwrap()
            > 0.9
    );

    let out = soundocc(
        cwd,
        &args(
            "quick.json",
            "o",
            &["--train-rooms", "P01", "--test-rooms", "P01", "evaluate"],
        ),
    );
    assert!(!out.status.success());
}
