use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "synth.passages=12",
    "embed.dim=8",
    "embed.vertex_steps=20",
    "embed.edge_steps=10",
    "generator.d_model=16",
    "generator.heads=2",
    "generator.ff_dim=32",
    "generator.lstm_hidden=8",
    "generator.epochs=3",
    "generator.max_len=20",
    "max_comment_len=20",
];

fn ekg(workspace: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ekg"));
    cmd.arg("--workspace").arg(workspace);
    for s in SMALL {
        cmd.args(["--set", s]);
    }
    cmd.args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_lists_every_subcommand() {
    let out = Command::new(env!("CARGO_BIN_EXE_ekg")).arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "synth",
        "ingest",
        "stats",
        "build-ekg",
        "train-ekg",
        "train-g2s",
        "generate",
        "evaluate",
        "grad-check",
    ] {
        assert!(text.contains(sub), "missing {sub} in help:\n{text}");
    }
    for flag in ["--config", "--set", "--workspace", "--seed", "--preset"] {
        assert!(text.contains(flag), "missing {flag} in help:\n{text}");
    }
}

#[test]
fn unknown_key_lists_valid_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = ekg(dir.path(), &["--set", "generator.dmodel=4", "synth"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("generator.d_model") && err.contains("embed.dim"), "{err}");
    assert!(!dir.path().join("synth").exists(), "no stage may run on a bad config");
}

#[test]
fn bad_preset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = ekg(dir.path(), &["--preset", "huge", "synth"]);
    assert!(!out.status.success());
}

#[test]
fn missing_upstream_names_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["synth", "ingest", "build-ekg"] {
        let out = ekg(dir.path(), &[stage]);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    let out = ekg(dir.path(), &["train-g2s"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("run `train-ekg` first"), "{}", stderr(&out));
}

#[test]
fn config_file_and_seed_flag_reach_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"synth": {"entities": 5}}"#).unwrap();
    let ws = dir.path().join("run");
    let out = ekg(&ws, &["--config", config.to_str().unwrap(), "--seed", "9", "synth"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["synth"]["entities"], 5);
    assert!(manifest["stages"]["synth"].as_object().is_some_and(|m| !m.is_empty()));
}

#[test]
fn stage_by_stage_run_matches_across_workspaces() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let stages = [
        "synth",
        "ingest",
        "stats",
        "build-ekg",
        "train-ekg",
        "train-g2s",
        "generate",
        "evaluate",
    ];
    for stage in stages {
        let out = ekg(&a, &[stage]);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    let out = ekg(&b, &["all"]);
    assert!(out.status.success(), "{}", stderr(&out));

    let comments = fs::read_to_string(a.join("generate/comments.jsonl")).unwrap();
    assert_eq!(comments.lines().count(), 12);
    for line in comments.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(!v["comments"].as_array().unwrap().is_empty());
    }
    for file in [
        "generate/comments.jsonl",
        "evaluate/metrics.json",
        "train-g2s/model.bin",
        "manifest.json",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn grad_check_passes() {
    let out = Command::new(env!("CARGO_BIN_EXE_ekg"))
        .arg("grad-check")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0 failed"), "{text}");
    assert!(!text.contains("FAIL"));
}
