use std::path::Path;
use std::process::{Command, Output};

use isomatch::io::{format_matches, load_scene, load_template, parse_matches};
use isomatch::Assignment;

fn isomatch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isomatch"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run isomatch")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = isomatch(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(isomatch(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(isomatch(&["match", "--template", "t.txt"], dir.path()).status.code(), Some(2));
    assert_eq!(isomatch(&["sc", "--scene", "a", "--out", "b", "--width", "5"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = isomatch(&["sc", "--scene", "missing.txt", "--out", "x.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("missing.txt"), "{err}");
}

#[test]
fn synth_train_match_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("synth.json"),
        r#"{ "n_shape": 10, "n_outliers": 3, "epsilon": 2.0, "n_images": 3 }"#,
    )
    .unwrap();
    std::fs::write(d.join("train.json"), r#"{ "epochs": 10, "calibration_samples": 500 }"#).unwrap();

    let s = ok(&["synth", "--config", "synth.json", "--out", "data", "--seed", "4"], d);
    assert!(s.contains("3/3/3 train/val/test pairs"), "{s}");

    ok(
        &["train", "--data", "data/manifest.json", "--config", "train.json", "--out", "model", "--p", "4", "--lambda", "0.01"],
        d,
    );
    for f in ["model.json", "risk_stage1.csv", "risk_stage2.csv", "pruning_recall.csv"] {
        assert!(d.join("model").join(f).is_file(), "{f}");
    }

    // Matching a template against its own scene recovers the template order.
    let template = load_template(d.join("data/templates/synth-0.txt"), None).unwrap();
    let scene_len = load_scene(d.join("data/scenes/synth-0.txt"), None).unwrap().len();
    let truth = Assignment::new(template.order().to_vec(), scene_len).unwrap();
    std::fs::write(d.join("truth.txt"), format_matches(&truth)).unwrap();
    let s = ok(
        &[
            "match", "--template", "data/templates/synth-0.txt", "--target", "data/scenes/synth-0.txt",
            "--model", "model/model.json", "--out", "y.txt", "--truth", "truth.txt",
        ],
        d,
    );
    assert!(s.contains("hamming loss 0.000000"), "{s}");
    let y = parse_matches(&std::fs::read_to_string(d.join("y.txt")).unwrap(), template.len(), scene_len).unwrap();
    assert_eq!(y, truth);

    let s = ok(
        &[
            "match", "--linear", "--template", "data/templates/synth-0.txt", "--target", "data/scenes/synth-0.txt",
            "--model", "model/model.json", "--out", "y2.txt", "--truth", "truth.txt", "--loss", "endpoint",
        ],
        d,
    );
    assert!(s.contains("endpoint loss 0.000000"), "{s}");

    ok(&["eval", "--model", "model/model.json", "--data", "data/manifest.json", "--out", "eval.csv"], d);
    let csv = std::fs::read_to_string(d.join("eval.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("linear_learned,test,"));
    assert!(lines[2].starts_with("higher_order_learned,test,"));
}

#[test]
fn sc_adds_descriptors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("s.txt"), "10 10\n20 15\n30 40\n5 25\n").unwrap();
    ok(&["sc", "--scene", "s.txt", "--out", "out.txt", "--width", "50", "--height", "50", "--angular-bins", "8"], d);
    let s = load_scene(d.join("out.txt"), None).unwrap();
    assert_eq!(s.descriptor_dim(), Some(40));
    for i in 0..4 {
        let sum: f64 = s.descriptor(i).unwrap().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
}

#[test]
fn sweep_writes_report_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("sweep.json"),
        r#"{
            "data": { "kind": "synthetic", "n_shape": 8, "n_images": 10, "outliers": [2], "epsilons": [2.0] },
            "methods": ["linear", "higher_order"],
            "loss": "endpoint",
            "train": { "calibration_samples": 300 },
            "bp_iterations": 2
        }"#,
    )
    .unwrap();
    ok(&["--jobs", "1", "sweep", "--config", "sweep.json", "--out", "out", "--p", "3"], d);
    let mut rdr = csv::Reader::from_path(d.join("out/report.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(&r[5], "45");
    }
    assert_eq!(&rows[1][9], "3");
    for f in ["loss_vs_epsilon.csv", "runtime_vs_method.csv", "bp_iterations.csv"] {
        assert!(d.join("out").join(f).is_file(), "{f}");
    }

    std::fs::write(
        d.join("empty.json"),
        r#"{ "data": { "kind": "synthetic" }, "methods": [], "loss": "hamming" }"#,
    )
    .unwrap();
    ok(&["sweep", "--config", "empty.json", "--out", "empty"], d);
    let text = std::fs::read_to_string(d.join("empty/report.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}
