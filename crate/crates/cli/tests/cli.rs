use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn emres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emres"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth_config(dir: &Path) -> PathBuf {
    let path = dir.join("synth.json");
    let cfg = serde_json::json!({
        "n_pairs": 40,
        "dim": 6,
        "n_word_classes": 3,
        "n_speakers": 2,
        "emphasis_rank": 2,
        "signal_scale": 4.0,
        "noise_scale": 0.1,
        "delta_coupling": 1.0,
        "seed": 1,
        "model_name": "toy"
    });
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

/// Generates a synthetic dataset and returns its manifest path.
fn make_dataset(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let o = emres(&[
        "synth",
        synth_config(dir).to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    data.join("manifest.json")
}

fn sweep_config(dir: &Path, manifest: &Path, lambda: f64) -> PathBuf {
    let path = dir.join(format!("sweep_{lambda}.json"));
    let cfg = serde_json::json!({
        "datasets": [manifest],
        "layers": "all",
        "spaces": ["A", "R"],
        "output_dir": format!("out_{lambda}"),
        "probes": {
            "lambda": lambda,
            "k_grid": [1, 2, 3],
            "top_k_corr": 3,
            "logistic": {"max_epochs": 30}
        }
    });
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn synth_writes_dataset_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_dataset(dir.path());
    assert!(manifest.is_file());
    assert!(dir.path().join("data/layer_00.wrep").is_file());
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("data/ground_truth.json")).unwrap())
            .unwrap();
    assert_eq!(truth["delta"].as_array().unwrap().len(), 40);
}

#[test]
fn synth_seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_config(dir.path());
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = emres(&["synth", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        fs::read(out.join("layer_00.wrep")).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
    assert_ne!(run("c", "5"), run("d", "6"));
}

#[test]
fn validate_clean_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_dataset(dir.path());
    let o = emres(&["validate", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("120 tokens (40 emphasized, 80 neutral)"), "{text}");
    assert!(text.trim_end().ends_with("ok"));
}

#[test]
fn validate_reports_corrupt_layer_values() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_dataset(dir.path());
    let layer = dir.path().join("data/layer_00.wrep");
    let mut bytes = fs::read(&layer).unwrap();
    bytes[30..34].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&layer, bytes).unwrap();
    let o = emres(&["validate", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("1 violations"));
}

#[test]
fn validate_reports_bad_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_dataset(dir.path());
    let mut m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    m["tokens"][3]["t_end"] = serde_json::json!(0.0);
    fs::write(&manifest, m.to_string()).unwrap();
    let o = emres(&["validate", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("token 3"));
}

#[test]
fn missing_manifest_is_exit_2() {
    let o = emres(&["validate", "/nonexistent/manifest.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn pairs_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_dataset(dir.path());
    let o = emres(&["pairs", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 41);
    assert!(text.starts_with("pair_index,neutral_token_id,emphasized_token_id"));

    let o = emres(&["pairs", manifest.to_str().unwrap(), "--policy", "all-combinations"]);
    assert_eq!(stdout(&o).lines().count(), 81);
    let o = emres(&["pairs", manifest.to_str().unwrap(), "--policy", "random"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_summarize_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_dataset(dir.path());
    let cfg = sweep_config(dir.path(), &manifest, 1.0);
    let o = emres(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out_1");
    let report = out.join("report.json");
    assert!(report.is_file());
    assert!(out.join("summary.csv").is_file());
    assert!(out.join("toy/layer_00/R/curves.json").is_file());

    let o = emres(&["summarize", report.to_str().unwrap(), report.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["summary"].as_array().unwrap().len(), 4);

    let figs = dir.path().join("figs");
    let o = emres(&[
        "figure",
        report.to_str().unwrap(),
        "--which",
        "cosine_dists,cumvar,corr_hist,curves",
        "--out",
        figs.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["cosine_dists", "cumvar", "corr_hist", "curves"] {
        assert!(figs.join(format!("{f}.csv")).is_file());
    }
    let o = emres(&["figure", report.to_str().unwrap(), "--which", "cumvar", "--layer", "9"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn summarize_rejects_mixed_settings() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_dataset(dir.path());
    for lambda in [1.0, 2.0] {
        let cfg = sweep_config(dir.path(), &manifest, lambda);
        assert_eq!(code(&emres(&["sweep", cfg.to_str().unwrap()])), 0);
    }
    let a = dir.path().join("out_1/report.json");
    let b = dir.path().join("out_2/report.json");
    let o = emres(&["summarize", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("incompatible settings"));
}

#[test]
fn analyze_single_layer() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_dataset(dir.path());
    let out = dir.path().join("analysis");
    let o = emres(&[
        "analyze",
        manifest.to_str().unwrap(),
        "--layer",
        "0",
        "--spaces",
        "R,C",
        "--both-centerings",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("toy/layer_00/R-mean/spectrum.json").is_file());
    assert!(out.join("toy/layer_00/C-mean/spectrum.json").is_file());
    assert!(!out.join("toy/layer_00/A").exists());

    let o = emres(&["analyze", manifest.to_str().unwrap(), "--layer", "4"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_sweep_config_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"datasets": ["missing.json"]}"#).unwrap();
    assert_eq!(code(&emres(&["sweep", cfg.to_str().unwrap()])), 2);
    fs::write(&cfg, r#"{"datasets": [], "spaces": ["Q"]}"#).unwrap();
    assert_eq!(code(&emres(&["sweep", cfg.to_str().unwrap()])), 2);
}

#[test]
fn failed_cells_give_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_dataset(dir.path());
    let cfg = dir.path().join("tight.json");
    // Eight training rows cannot fit k = 12 on the twelve-wide C space.
    let body = serde_json::json!({
        "datasets": [manifest],
        "spaces": ["A", "C"],
        "probes": {"k_grid": [1, 12], "train_fraction": 0.2, "word_id": false, "top_k_corr": 1}
    });
    fs::write(&cfg, body.to_string()).unwrap();
    let o = emres(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stdout(&o).contains("failed"));
}

#[test]
fn in_sample_flag_reaches_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_dataset(dir.path());
    let out = dir.path().join("insample");
    let o = emres(&[
        "analyze",
        manifest.to_str().unwrap(),
        "--layer",
        "0",
        "--spaces",
        "R",
        "--in-sample",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["settings"]["probes"]["in_sample"], serde_json::json!(true));
}
