use std::fs;
use std::path::Path;

use rssiforge_core::evaluate::results::read_results;
use rssiforge_core::pipeline::{
    read_manifest, run_pipeline, sha256_file, PipelineConfig, Stage, StageStatus, MANIFEST_FILE, RESULTS_FILE,
};
use rssiforge_core::{Arm, Error};

fn tiny_config(seed: u64) -> PipelineConfig {
    PipelineConfig::from_json(&format!(
        r#"{{
            "seed": {seed},
            "preset": "desk",
            "simulate": {{
                "targets": ["builtin:three_room", "builtin:target_c"],
                "sources": ["builtin:source_1", "builtin:source_2"],
                "fingerprint_minutes": 6,
                "free_living_minutes": 12,
                "source_minutes": 3
            }},
            "congan": {{ "epochs": 1, "critic_iters": 2 }},
            "augment": {{ "target_per_class": 100 }},
            "evaluate": {{
                "repeats": 2,
                "localiser": {{ "n_trees": [5, 10], "max_depth": [null], "min_samples_leaf": [1] }}
            }}
        }}"#
    ))
    .unwrap()
}

fn walk(dir: &Path, out: &mut Vec<String>, root: &Path) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            walk(&p, out, root);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
        }
    }
}

#[test]
fn full_pipeline_bookkeeping_rerun_and_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = tiny_config(3);
    let first = run_pipeline(&cfg, out).unwrap();
    assert_eq!(first.len(), 8);
    assert!(first.iter().all(|o| o.status == StageStatus::Ran));

    let results = read_results(&out.join(RESULTS_FILE)).unwrap();
    assert_eq!(results.len(), 2 * 8 * 2, "houses × arms × repeats");
    for arm in Arm::ALL {
        assert_eq!(results.iter().filter(|r| r.arm == arm).count(), 4);
    }
    assert!(results.iter().all(|r| (0.0..=100.0).contains(&r.macro_f1)));
    assert!(results.iter().filter(|r| r.arm == Arm::Baseline).all(|r| r.mivo.is_none()));
    assert!(results.iter().filter(|r| r.arm.is_augmentation()).all(|r| r.mivo.is_some()));
    assert!(out.join("report/summary.txt").is_file());
    assert!(fs::read_dir(out.join("report/plots")).unwrap().count() > 0);

    // manifest completeness
    let manifest = read_manifest(out).unwrap().unwrap();
    let mut files = Vec::new();
    walk(out, &mut files, out);
    let listed = manifest.artifacts();
    for f in &files {
        assert!(f == MANIFEST_FILE || listed.contains(&f.as_str()), "{f} not in manifest");
    }
    for rec in &manifest.stages {
        for (rel, sha) in &rec.outputs {
            assert_eq!(&sha256_file(&out.join(rel)).unwrap(), sha);
        }
    }

    // unchanged config: everything skipped, results untouched
    let before = fs::read(out.join(RESULTS_FILE)).unwrap();
    let second = run_pipeline(&cfg, out).unwrap();
    assert!(second.iter().all(|o| o.status == StageStatus::Skipped), "{second:?}");
    assert_eq!(fs::read(out.join(RESULTS_FILE)).unwrap(), before);

    // a report-only change reruns just the report
    let mut no_plots = cfg.clone();
    no_plots.report.plots = false;
    let third = run_pipeline(&no_plots, out).unwrap();
    let ran: Vec<Stage> = third.iter().filter(|o| o.status == StageStatus::Ran).map(|o| o.stage).collect();
    assert_eq!(ran, vec![Stage::Report]);

    // a failing stage names itself and leaves earlier artifacts alone
    fs::remove_file(out.join("models/pretrain_same.ckpt")).unwrap();
    let mut eval_only = cfg.clone();
    eval_only.stages = vec![Stage::Evaluate];
    eval_only.evaluate.repeats = 1;
    let err = run_pipeline(&eval_only, out).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "evaluate"), "{err}");
    assert_eq!(fs::read(out.join(RESULTS_FILE)).unwrap(), before);
    assert!(!out.join(".staging").exists());
}

#[test]
fn same_seed_same_results_file() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(11);
    cfg.evaluate.arms = vec![Arm::Baseline, Arm::Smote, Arm::Congan, Arm::TCongan];
    cfg.transfer.protocols = vec![rssiforge_core::pipeline::Protocol::Same];
    cfg.evaluate.repeats = 1;
    cfg.report.plots = false;
    run_pipeline(&cfg, a.path()).unwrap();
    run_pipeline(&cfg, b.path()).unwrap();
    assert_eq!(fs::read(a.path().join(RESULTS_FILE)).unwrap(), fs::read(b.path().join(RESULTS_FILE)).unwrap());
}
