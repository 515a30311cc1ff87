//! End-to-end pipeline behavior on the bundled fixtures: staging, resume,
//! report round-trips, and failure handling.

use std::path::PathBuf;

use tabshift_core::data::{NormKind, TaskHint};
use tabshift_core::pipeline::{run_pipeline, Pipeline, RunConfig, Stage};
use tabshift_core::predictor::{ModelTag, SplitSide};
use tabshift_core::report::{render_summary, RunReport, StageStatus};
use tabshift_core::Error;

fn fixture_path(name: &str) -> PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// Quick config over the bundled 2,000-row fixture.
fn demo_config(out: PathBuf) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.path = fixture_path("demo_2k.csv");
    cfg.data.target = "income".into();
    cfg.data.task = Some(TaskHint::Classification);
    cfg.data.norm = Some(NormKind::L2);
    cfg.split.tail_size = 300;
    cfg.split.proxy_epochs = 15;
    cfg.pretrain.epochs = 6;
    cfg.pretrain.batch_size = 128;
    cfg.continual.epochs = 3;
    cfg.head.epochs = 60;
    cfg.baseline.epochs = 30;
    cfg.seed = 7;
    cfg.out_dir = out;
    cfg
}

#[test]
fn demo_fixture_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_pipeline(demo_config(dir.path().join("run")), false).unwrap();

    // All six evaluation rows: three models on two sides.
    assert_eq!(report.evals.len(), 6);
    for model in [ModelTag::BaselineMlp, ModelTag::Pretrained, ModelTag::Adapted] {
        for side in [SplitSide::InHoldout, SplitSide::Ood] {
            assert!(
                report.evals.iter().any(|e| e.model == model && e.split == side),
                "missing evaluation for {model:?} on {side:?}"
            );
        }
    }
    assert!(report.failure.is_none());
    assert!(report
        .stages
        .iter()
        .all(|s| matches!(s.status, StageStatus::Completed { .. })));
    assert!(report.split.is_some());
    assert!(report.fisher.is_some());
    assert!(!report.pretrain_trace.as_ref().unwrap().is_empty());

    // Artifacts are on disk.
    for name in [
        "split.manifest",
        "model_a.json",
        "head_a.json",
        "baseline.json",
        "anchor.json",
        "replay.manifest",
        "model_b.json",
        "head_b.json",
        "evals.json",
        "report.json",
        "summary.txt",
    ] {
        assert!(dir.path().join("run").join(name).exists(), "missing artifact {name}");
    }

    // The summary shows the two encoders side by side on the OOD rows.
    let summary = render_summary(&report);
    assert!(summary.contains("pretrained"));
    assert!(summary.contains("adapted"));
    assert!(summary.contains("ood"));
}

#[test]
fn missing_data_file_fails_validation_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo_config(dir.path().join("run"));
    cfg.data.path = PathBuf::from("does/not/exist.csv");
    match Pipeline::new(cfg) {
        Err(Error::Config(msg)) => assert!(msg.contains("does not exist")),
        Err(other) => panic!("expected config validation error, got {other}"),
        Ok(_) => panic!("expected config validation error"),
    }
}

#[test]
fn report_roundtrips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_pipeline(demo_config(dir.path().join("run")), false).unwrap();
    let loaded = RunReport::load(dir.path().join("run").join("report.json")).unwrap();
    assert!(report.numeric_fields_equal(&loaded));
    // Bit-exact numeric fields survive the round trip.
    for (a, b) in report.evals.iter().zip(&loaded.evals) {
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
    for (a, b) in report
        .pretrain_trace
        .as_ref()
        .unwrap()
        .iter()
        .zip(loaded.pretrain_trace.as_ref().unwrap())
    {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn resumed_run_reproduces_the_uninterrupted_values() {
    let dir = tempfile::tempdir().unwrap();

    // Uninterrupted reference run.
    let full = run_pipeline(demo_config(dir.path().join("ref")), false).unwrap();

    // Interrupted run: stop after the pretrain stage, then resume.
    let mut partial = Pipeline::new(demo_config(dir.path().join("resumed"))).unwrap();
    partial.run(Stage::Pretrain, false).unwrap();
    let resumed = Pipeline::new(demo_config(dir.path().join("resumed")))
        .unwrap()
        .run(Stage::Eval, true)
        .unwrap();

    assert_eq!(full.evals, resumed.evals);
    assert_eq!(full.pretrain_trace, resumed.pretrain_trace);
    assert_eq!(full.continual_trace, resumed.continual_trace);
    let (a, b) = (full.split.unwrap(), resumed.split.unwrap());
    assert_eq!((a.n_in, a.n_ood), (b.n_in, b.n_ood));
    // Stages before the interruption point are marked resumed, not re-run.
    assert!(matches!(
        resumed.stages.iter().find(|s| s.stage == "split").unwrap().status,
        StageStatus::Resumed
    ));
}

#[test]
fn full_resume_loads_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let reference = run_pipeline(demo_config(out.clone()), false).unwrap();

    // Everything exists, so a resumed run only loads artifacts.
    let resumed = run_pipeline(demo_config(out), true).unwrap();
    assert!(resumed
        .stages
        .iter()
        .all(|s| matches!(s.status, StageStatus::Resumed)));
    assert_eq!(reference.evals, resumed.evals);
    assert_eq!(reference.pretrain_trace, resumed.pretrain_trace);
    assert_eq!(reference.continual_trace, resumed.continual_trace);
    let (a, b) = (reference.replay.unwrap(), resumed.replay.unwrap());
    assert_eq!((a.n_in, a.n_ood), (b.n_in, b.n_ood));
    let (a, b) = (reference.fisher.unwrap(), resumed.fisher.unwrap());
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
}

#[test]
fn single_stage_requires_prerequisites() {
    let dir = tempfile::tempdir().unwrap();
    let err = Pipeline::new(demo_config(dir.path().join("run")))
        .unwrap()
        .run_single(Stage::Continual)
        .unwrap_err();
    assert!(err.to_string().contains("run that stage first"), "{err}");
}

#[test]
fn stage_failure_writes_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut cfg = demo_config(out.clone());
    // An unknown-mass threshold above 1 flags nothing, so the split stage
    // fails with an empty OOD side.
    cfg.split.epsilon = 2.0;

    let err = run_pipeline(cfg, false).unwrap_err();
    assert!(matches!(err, Error::Stage { .. }));

    let report = RunReport::load(out.join("report.json")).unwrap();
    let failure = report.failure.expect("failure recorded");
    assert_eq!(failure.stage, "split");
    // Later stages are explicitly not-run rather than omitted.
    assert!(matches!(
        report.stages.iter().find(|s| s.stage == "eval").unwrap().status,
        StageStatus::NotRun
    ));
    assert!(matches!(
        report.stages.iter().find(|s| s.stage == "split").unwrap().status,
        StageStatus::Failed { .. }
    ));
    assert!(report.evals.is_empty());
}

#[test]
fn bundled_toml_configs_parse() {
    let cfg = RunConfig::from_toml_file(fixture_path("demo.toml")).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.data.target, "income");
    assert_eq!(cfg.data.norm, Some(NormKind::L2));

    let cfg = RunConfig::from_toml_file(fixture_path("income_openmax_l2.toml")).unwrap();
    assert_eq!(cfg.split.detector, tabshift_core::oodsplit::DetectorKind::OpenMax);
    assert_eq!(cfg.split.tail_size, 700);
}
