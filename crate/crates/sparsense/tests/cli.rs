use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sparsense::config::{DatasetSource, RunConfig};
use sparsense_core::bench::PipelineKind;

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn sparsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsense"))
        .args(args)
        .env_remove("SPARSENSE_OUT")
        .output()
        .unwrap()
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().expect("an error line on stderr");
    serde_json::from_str(last).expect("stderr ends in one JSON object")
}

const GEN: &str = r#"
seed = 2
[generator]
kind = "traveling_wave"
rows = 8
cols = 10
snapshots = 40
components = 2
amplitude = 1.0
dt = 0.03
"#;

/// generate → basis with rank 3; returns (dir, data, basis) paths.
fn staged(dir: &Path) -> (String, String) {
    let p = |n: &str| dir.join(n).to_string_lossy().into_owned();
    fs::write(dir.join("gen.toml"), GEN).unwrap();
    let gen = sparsense(&["-q", "generate", "--config", &p("gen.toml"), "--out", &p("d.f64"), "--train-count", "30"]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let basis = sparsense(&["-q", "basis", "--data", &p("d-train.f64"), "--rank", "3", "--out", &p("b.pod")]);
    assert!(basis.status.success(), "{}", String::from_utf8_lossy(&basis.stderr));
    (p("d-test.f64"), p("b.pod"))
}

#[test]
fn shipped_configs_parse() {
    for name in ["configs/desk.toml", "configs/sweep.toml"] {
        let cfg = RunConfig::load(&workspace_file(name)).unwrap();
        assert!(!cfg.jobs().is_empty(), "{name}");
    }
}

#[test]
fn unknown_keys_are_rejected_at_every_level() {
    let base = fs::read_to_string(workspace_file("configs/sweep.toml")).unwrap();
    assert!(RunConfig::from_toml(&base).is_ok());
    let top = format!("bogus = 1\n{base}");
    assert_eq!(RunConfig::from_toml(&top).unwrap_err().kind(), "config");
    let nested = base.replacen("[train]", "[train]\nlearning_rat = 0.1", 1);
    assert!(RunConfig::from_toml(&nested).is_err());
    let generator = base.replacen("[dataset.generator]", "[dataset.generator]\nwidthh = 2", 1);
    assert!(RunConfig::from_toml(&generator).is_err());
}

#[test]
fn jobs_are_ordered_trial_then_pipeline_then_count() {
    let cfg = RunConfig::load(&workspace_file("configs/sweep.toml")).unwrap();
    let jobs = cfg.jobs();
    assert_eq!(jobs.len(), cfg.trials * cfg.pipelines.len() * cfg.sensors.len());
    let first: Vec<(usize, PipelineKind, usize)> =
        jobs.iter().take(3).map(|j| (j.trial, j.spec.kind, j.spec.n_sensors)).collect();
    assert_eq!(first, vec![(0, cfg.pipelines[0], 1), (0, cfg.pipelines[0], 2), (0, cfg.pipelines[0], 3)]);
    // every pipeline in a trial shares the trial seed, so splits are paired
    let seeds: Vec<u64> = jobs.iter().filter(|j| j.trial == 1).map(|j| j.spec.seed).collect();
    assert!(seeds.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn relative_dataset_paths_resolve_against_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
trials = 1
pipelines = ["q_pod"]
sensors = [2]
[dataset]
source = "file"
path = "data/x.csv"
[split]
train_count = 3
"#;
    fs::write(dir.path().join("run.toml"), text).unwrap();
    let cfg = RunConfig::load(&dir.path().join("run.toml")).unwrap();
    match cfg.dataset {
        DatasetSource::File { path, .. } => assert_eq!(path, dir.path().join("data/x.csv")),
        other => panic!("unexpected source {other:?}"),
    }
}

#[test]
fn place_twice_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (_, basis) = staged(dir.path());
    let mut outputs = Vec::new();
    for name in ["s1.json", "s2.json"] {
        let out = dir.path().join(name);
        let run = sparsense(&["place", "--basis", &basis, "--n", "3", "--method", "qr", "--out", out.to_str().unwrap()]);
        assert!(run.status.success());
        assert!(String::from_utf8_lossy(&run.stdout).contains("sensor 0: index"));
        outputs.push(fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn reconstruct_names_both_widths_on_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (test, basis) = staged(dir.path());
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let train_data = p("d-train.f64");
    for (n, out) in [("3", "s3.json"), ("2", "s2.json")] {
        assert!(sparsense(&["-q", "place", "--basis", &basis, "--n", n, "--out", &p(out)]).status.success());
    }
    let train = sparsense(&[
        "-q", "train", "--data", &train_data, "--sensors", &p("s3.json"), "--hidden", "4", "--max-epochs", "3", "--out",
        &p("model.json"),
    ]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    assert!(dir.path().join("model-history.csv").exists());

    let out = sparsense(&["reconstruct", "--data", &test, "--model", &p("model.json"), "--sensors", &p("s2.json")]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_line(&out);
    let msg = err["message"].as_str().unwrap();
    assert!(msg.contains('2') && msg.contains('3'), "{msg}");
}

#[test]
fn usage_and_runtime_errors_are_single_json_lines() {
    let usage = sparsense(&["frobnicate"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(error_line(&usage)["error"], "usage");

    let missing = sparsense(&["basis", "--data", "/nonexistent/x.csv", "--rank", "2"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&missing.stderr).lines().count(), 1);
    assert_eq!(error_line(&missing)["error"], "io");

    let no_m = sparsense(&["place", "--n", "2", "--method", "random"]);
    assert_eq!(no_m.status.code(), Some(1));
    assert_eq!(error_line(&no_m)["error"], "config");

    assert_eq!(sparsense(&["--help"]).status.code(), Some(0));
}

#[test]
fn sweep_writes_one_summary_row_per_pipeline_and_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let run = sparsense(&[
        "-q",
        "bench",
        "--config",
        workspace_file("configs/sweep.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut rows: Vec<(String, usize)> = summary
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().to_string(), f.next().unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 45);
    rows.sort();
    rows.dedup();
    assert_eq!(rows.len(), 45);
    for pipeline in ["q_sdn", "r_sdn", "q_pod"] {
        let counts: Vec<usize> = rows.iter().filter(|r| r.0 == pipeline).map(|r| r.1).collect();
        assert_eq!(counts, (1..=15).collect::<Vec<_>>());
    }
    assert!(out.join("trials.json").exists());
    assert!(out.join("maps/truth.pgm").exists());
    assert!(out.join("maps/q_sdn-n3-sensors.pgm").exists());
}
