use std::path::Path;
use std::process::{Command, Output};

use madcluster::metrics::EvalReport;
use madcluster::model::ModelState;
use madcluster::scoring::{self, parse_scores_csv};
use madcluster::timeseries::load_csv;
use madcluster::trainer::TrainLog;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_madcluster")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &Path, rel: &str) -> String {
    dir.join(rel).to_string_lossy().into_owned()
}

fn synth(dir: &Path) {
    ok(&["synth", "--out", &p(dir, "data"), "--length", "600", "--seed", "3"]);
}

#[test]
fn end_to_end_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    let manifest = std::fs::read_to_string(d.join("data/manifest.txt")).unwrap();
    assert!(manifest.contains("length=600"), "{manifest}");

    ok(&["train", "--train", &p(d, "data/train.csv"), "--out", &p(d, "m"), "--epochs", "3", "--window", "50"]);
    let log = TrainLog::from_csv(&std::fs::read_to_string(d.join("m/train_log.csv")).unwrap()).unwrap();
    assert_eq!(log.records.len(), 3);
    let traj = std::fs::read_to_string(d.join("m/centroid_trajectory.csv")).unwrap();
    assert!(traj.starts_with("epoch,"));

    ok(&["score", "--model", &p(d, "m/model.txt"), "--test", &p(d, "data/test.csv"), "--out", &p(d, "s")]);
    let written = parse_scores_csv(&std::fs::read_to_string(d.join("s/scores.csv")).unwrap()).unwrap();
    assert_eq!(written.len(), 600);

    // the saved artifact reproduces the written scores
    let model = ModelState::load(&d.join("m/model.txt")).unwrap();
    let test = load_csv(&d.join("data/test.csv"), true).unwrap();
    let again = scoring::score(&test, &model).unwrap();
    for (a, b) in written.iter().zip(&again) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
    }

    let out = ok(&["eval", "--scores", &p(d, "s/scores.csv"), "--test", &p(d, "data/test.csv"), "--out", &p(d, "e"), "--window", "50"]);
    let csv = std::fs::read_to_string(d.join("e/report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 7);
    assert_eq!(String::from_utf8_lossy(&out.stdout), csv);
    let report = EvalReport::from_text(&std::fs::read_to_string(d.join("e/report.txt")).unwrap()).unwrap();
    assert!(report.values().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn multi_mode_stores_k_centers() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    ok(&[
        "train", "--train", &p(d, "data/train.csv"), "--out", &p(d, "m"), "--epochs", "2", "--window", "50", "--mode",
        "multi", "--k", "3",
    ]);
    let model = ModelState::load(&d.join("m/model.txt")).unwrap();
    assert_eq!(model.mode_name(), "multi");
    assert_eq!(model.centers().len(), 3);
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    let cfg = d.join("cfg.toml");
    std::fs::write(&cfg, "[train]\nepochs = 4\nwindow = 40\nstride = 40\n[embedder]\nkind = \"gru\"\nhidden_dim = 4\nlayers = 1\n").unwrap();
    let c = cfg.to_string_lossy();
    ok(&["train", "--train", &p(d, "data/train.csv"), "--out", &p(d, "m"), "--config", &c, "--epochs", "2"]);
    let log = TrainLog::from_csv(&std::fs::read_to_string(d.join("m/train_log.csv")).unwrap()).unwrap();
    assert_eq!(log.records.len(), 2);
    let model = ModelState::load(&d.join("m/model.txt")).unwrap();
    assert_eq!(model.window, 40);
    assert_eq!(model.embedder.hidden_dim, 4);
}

#[test]
fn bad_input_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let bad_ratio = run(&["synth", "--out", &p(d, "x"), "--anomaly-ratio", "0.6"]);
    assert_eq!(bad_ratio.status.code(), Some(2));

    let missing = run(&["train", "--train", &p(d, "nope.csv"), "--out", &p(d, "m")]);
    assert_eq!(missing.status.code(), Some(2));

    let unknown = run(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));

    synth(d);
    let bad_alpha = run(&["eval", "--scores", &p(d, "data/train.csv"), "--test", &p(d, "data/test.csv"), "--out", &p(d, "e")]);
    assert_eq!(bad_alpha.status.code(), Some(2));

    let cfg = d.join("bad.toml");
    std::fs::write(&cfg, "[train]\nepoch = 3\n").unwrap();
    let unknown_key = run(&["train", "--train", &p(d, "data/train.csv"), "--out", &p(d, "m"), "--config", &cfg.to_string_lossy()]);
    assert_eq!(unknown_key.status.code(), Some(2));
}
