//! End-to-end CLI checks driving the built binary through the full
//! synth -> validate -> stats -> train -> forecast -> eval -> plot-data
//! loop on a small dataset, plus exit-code contracts.

use std::path::Path;
use std::process::{Command, Output};

fn gift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gift"))
        .args(args)
        .env("GIFT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");

    // synth
    let out = gift(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--seed",
        "7",
        "--n-clips",
        "20",
        "--frames",
        "24",
        "--occ-min",
        "12",
        "--occ-max",
        "20",
    ]);
    assert!(out.status.success(), "synth: {out:?}");
    assert!(stdout(&out).contains("wrote 20 clips"));
    assert!(data.join("manifest.json").exists());

    // validate: clean dataset, no findings
    let out = gift(&["validate", "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "validate: {out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("0 finding(s)"), "stderr: {stderr}");

    // stats
    let out = gift(&["stats", "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "stats: {out:?}");
    let stats: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(stats["clip_count"], 20);
    assert_eq!(stats["frame_count"], 20 * 24);
    assert_eq!(stats["bbox_count"], 20 * 24 * 10);

    // train (tiny run)
    let out = gift(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--epochs",
        "2",
        "--tau",
        "5",
        "--embed-dim",
        "8",
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "train: {out:?}");
    let checkpoint = run.join("checkpoint.json");
    assert!(checkpoint.exists());
    assert!(run.join("history.csv").exists());
    assert!(run.join("history.json").exists());
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "header plus two epochs");

    // forecast one clip
    let clip_file = first_clip_file(&data);
    let out = gift(&[
        "forecast",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--clip",
        clip_file.to_str().unwrap(),
        "--tau",
        "5",
    ]);
    assert!(out.status.success(), "forecast: {out:?}");
    let pred: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let point = pred["point_estimate"].as_u64().unwrap();
    assert!(point > 5 && point <= 24, "point {point}");

    // eval with report files
    let eval_dir = dir.path().join("eval");
    let out = gift(&[
        "eval",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--tau",
        "5",
        "--out",
        eval_dir.to_str().unwrap(),
        "--baseline",
    ]);
    assert!(out.status.success(), "eval: {out:?}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["n_clips"], 4); // 20% of 20
    assert!(eval_dir.join("eval_report.json").exists());
    let csv = std::fs::read_to_string(eval_dir.join("eval_report.csv")).unwrap();
    assert!(csv.starts_with("recall,precision,f1,mae,coverage,n_clips,delta"));

    // plot-data from history + checkpoint
    let plots = dir.path().join("plots");
    let out = gift(&[
        "plot-data",
        "--history",
        run.join("history.json").to_str().unwrap(),
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--tau",
        "5",
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "plot-data: {out:?}");
    assert!(plots.join("loss_curve.csv").exists());
    let dev = std::fs::read_to_string(plots.join("deviations.csv")).unwrap();
    assert_eq!(dev.lines().count(), 1 + 4, "header plus one row per test clip");
}

fn first_clip_file(data: &Path) -> std::path::PathBuf {
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(data.join("manifest.json")).unwrap()).unwrap();
    data.join(manifest["clips"][0]["file"].as_str().unwrap())
}

#[test]
fn synth_is_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = gift(&[
            "synth",
            "--out",
            dir.path().to_str().unwrap(),
            "--seed",
            "11",
            "--n-clips",
            "5",
        ]);
        assert!(out.status.success());
    }
    let names = ["manifest.json", "synth-00000.json", "synth-00004.json"];
    for name in names {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs across identical runs");
    }
}

#[test]
fn exit_codes() {
    // Unknown flag: usage error.
    let out = gift(&["synth", "--banana"]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");

    // Unknown subcommand: usage error.
    let out = gift(&["dance"]);
    assert_eq!(out.status.code(), Some(2));

    // Missing checkpoint: runtime error.
    let dir = tempfile::tempdir().unwrap();
    let out = gift(&[
        "eval",
        "--checkpoint",
        dir.path().join("missing.json").to_str().unwrap(),
        "--data",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");

    // Bad config file key: usage error.
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "bananas = 7\n").unwrap();
    let out = gift(&[
        "synth",
        "--out",
        dir.path().join("x").to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");

    // Config error caught by validation: usage error.
    let out = gift(&[
        "synth",
        "--out",
        dir.path().join("y").to_str().unwrap(),
        "--occ-min",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");

    // --help works for every subcommand.
    for sub in [
        "synth",
        "validate",
        "stats",
        "train",
        "forecast",
        "eval",
        "gradcheck",
        "plot-data",
    ] {
        let out = gift(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub} --help");
    }
    let out = gift(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn config_file_feeds_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# dataset knobs\nn_clips = 4\nseed = 9\nframes = 30\n").unwrap();
    let data = dir.path().join("data");
    let out = gift(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
        "--n-clips",
        "6",
    ]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("wrote 6 clips"), "flag must override file");
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 9);
    assert_eq!(manifest["config"]["num_frames"], 30);
}

#[test]
fn validate_reports_findings_for_corrupted_clip() {
    let dir = tempfile::tempdir().unwrap();
    let out = gift(&[
        "synth",
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        "2",
        "--n-clips",
        "2",
    ]);
    assert!(out.status.success());
    // Corrupt one clip: push occurrence_frame out of range.
    let path = dir.path().join("synth-00001.json");
    let mut clip: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    clip["occurrence_frame"] = serde_json::json!(999);
    std::fs::write(&path, serde_json::to_vec_pretty(&clip).unwrap()).unwrap();

    let report_path = dir.path().join("findings.json");
    let out = gift(&[
        "validate",
        "--data",
        dir.path().to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let reports: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    let findings = reports
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["file"] == "synth-00001.json")
        .unwrap()["findings"]
        .as_array()
        .unwrap()
        .clone();
    assert!(
        findings.iter().any(|f| f["rule"] == "clip.occurrence-range"),
        "{findings:?}"
    );
}

#[test]
fn gradcheck_quick_passes() {
    let out = gift(&["gradcheck"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("gcn_layer"));
    assert!(text.contains("worst case"));
}
