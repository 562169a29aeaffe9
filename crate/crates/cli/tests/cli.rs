use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rssiforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rssiforge"))
        .args(args)
        .current_dir(dir)
        .env_remove("RSSIFORGE_SEED")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rssiforge(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(dir: &Path, args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&ok(dir, args)).unwrap()
}

const LOCALISER: &str = r#"{"target_per_class": 100, "localiser": {"n_trees": [5], "max_depth": [null], "min_samples_leaf": [1], "folds": 3}}"#;

#[test]
fn stage_by_stage_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let sim = json(
        d,
        &[
            "simulate",
            "--house",
            "builtin:three_room",
            "--fingerprint-minutes",
            "6",
            "--free-living-minutes",
            "12",
            "--out",
            "raw",
            "--json",
        ],
    );
    assert_eq!(sim["house_id"], "three_room");
    let pre = json(d, &["preprocess", "--raw", "raw", "--out", "ds", "--json"]);
    assert!(pre["fingerprint_windows"].as_u64().unwrap() > 100);

    let aug = json(d, &["augment", "--house", "ds", "--method", "smote", "--target", "100", "--out", "aug", "--json"]);
    assert!(aug["synthetic"].as_u64().unwrap() > 0);
    assert!(aug["mivo"].as_f64().unwrap() > 0.0);

    ok(d, &["congan", "train", "--house", "ds", "--preset", "desk", "--epochs", "1", "--out", "g.ckpt"]);
    ok(d, &["congan", "generate", "--checkpoint", "g.ckpt", "--class", "kitchen", "--n", "4", "--out", "gen.json"]);
    let gen: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(d.join("gen.json")).unwrap()).unwrap();
    assert_eq!(gen.len(), 4);
    let m = json(d, &["evaluate", "mivo", "--real", "ds", "--generated", "gen.json", "--json"]);
    assert!(m["scalar"].as_f64().unwrap() > 0.0);

    let adapt = json(
        d,
        &["transfer", "adapt", "--checkpoint", "g.ckpt", "--classes", "5", "--aps", "9", "--out", "a.ckpt", "--json"],
    );
    assert_eq!(adapt["n_classes"], 5);
    assert!(!adapt["reinitialized"].as_array().unwrap().is_empty());

    fs::write(d.join("opts.json"), LOCALISER).unwrap();
    let run = json(
        d,
        &[
            "evaluate",
            "run",
            "--house",
            "ds",
            "--arm",
            "smote",
            "--repeats",
            "2",
            "--options",
            "opts.json",
            "--seed",
            "5",
            "--out",
            "res.csv",
            "--json",
        ],
    );
    assert_eq!(run[0]["repeats"], 2);
    let report = json(d, &["evaluate", "report", "--in", "res.csv", "--json"]);
    assert!(report["files"].as_array().unwrap().len() > 2, "{report}");
    assert!(d.join("res.report/summary.txt").is_file());
}

#[test]
fn seed_flag_and_env_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "simulate",
            "--house",
            "builtin:three_room",
            "--fingerprint-minutes",
            "1",
            "--free-living-minutes",
            "1",
            "--seed",
            "9",
            "--out",
            "a",
        ],
    );
    let out = Command::new(env!("CARGO_BIN_EXE_rssiforge"))
        .args([
            "simulate",
            "--house",
            "builtin:three_room",
            "--fingerprint-minutes",
            "1",
            "--free-living-minutes",
            "1",
            "--out",
            "b",
        ])
        .current_dir(d)
        .env("RSSIFORGE_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["fingerprint.csv", "free_living.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap());
    }
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.json"), r#"{"congan": {"kernel_size": 0}}"#).unwrap();
    let out = rssiforge(d, &["pipeline", "--config", "bad.json", "--out", "run"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("congan.kernel_size"));

    let out = rssiforge(d, &["simulate", "--house", "builtin:nowhere", "--out", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn pipeline_with_no_stages_writes_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("cfg.json"), r#"{"stages": [], "preset": "desk"}"#).unwrap();
    let v = json(d, &["pipeline", "--config", "cfg.json", "--out", "run", "--json"]);
    assert_eq!(v["stages"].as_array().unwrap().len(), 0);
    assert_eq!(v["seed"], 0);
    assert!(d.join("run/manifest.json").is_file());

    let out = Command::new(env!("CARGO_BIN_EXE_rssiforge"))
        .args(["pipeline", "--config", "cfg.json", "--out", "run2", "--json"])
        .current_dir(d)
        .env("RSSIFORGE_SEED", "7")
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 7);
}
