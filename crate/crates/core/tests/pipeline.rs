use std::fs;
use std::path::{Path, PathBuf};

use ssas_core::corpus::{synthetic_corpus, SyntheticSpec};
use ssas_core::pipeline::{run_pipeline, DatasetConfig, PipelineConfig};
use ssas_core::Schema;

fn setup(dir: &Path, reviews: usize) -> PipelineConfig {
    let spec = SyntheticSpec { reviews, ..SyntheticSpec::default() };
    let input = dir.join("input.jsonl");
    synthetic_corpus("synthetic", &spec, 11).save(&input).unwrap();
    let mut config = PipelineConfig { seed: 5, ..PipelineConfig::default() };
    config.inference.n_runs = 5;
    config.datasets.push(DatasetConfig { name: "synthetic".into(), schema: Schema::Generic, input });
    config
}

fn stage_names(ids: &[String]) -> Vec<&str> {
    ids.iter().map(|s| s.rsplit('/').next().unwrap()).collect()
}

fn artifacts(work: &Path) -> Vec<PathBuf> {
    let d = work.join("synthetic");
    vec![
        d.join("hierarchy.json"),
        d.join("assignments.csv"),
        d.join("summaries.json"),
        d.join("runs_direct.csv"),
        d.join("runs_ssas.csv"),
        work.join("report.csv"),
        work.join("report.json"),
    ]
}

#[test]
fn rerun_skips_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path(), 120);
    let work = tmp.path().join("work");
    let first = run_pipeline(&config, &work).unwrap();
    assert_eq!(first.executed.len(), 10);
    assert!(first.skipped.is_empty());
    let second = run_pipeline(&config, &work).unwrap();
    assert!(second.executed.is_empty(), "re-executed {:?}", second.executed);
    assert_eq!(second.skipped.len(), 10);
}

#[test]
fn gate_edit_reruns_only_downstream() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = setup(tmp.path(), 120);
    let work = tmp.path().join("work");
    run_pipeline(&config, &work).unwrap();
    config.gate.threshold = 40.0;
    let out = run_pipeline(&config, &work).unwrap();
    assert_eq!(stage_names(&out.executed), vec!["gate", "evaluate", "report"]);
    assert_eq!(
        stage_names(&out.skipped),
        vec!["ingest", "characterize", "classify", "summarize", "score", "predict_direct", "predict_ssas"]
    );
}

#[test]
fn deleted_artifact_is_regenerated() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path(), 80);
    let work = tmp.path().join("work");
    run_pipeline(&config, &work).unwrap();
    let summaries = work.join("synthetic/summaries.json");
    let before = fs::read(&summaries).unwrap();
    fs::remove_file(&summaries).unwrap();
    let out = run_pipeline(&config, &work).unwrap();
    assert_eq!(stage_names(&out.executed), vec!["summarize"]);
    assert_eq!(fs::read(&summaries).unwrap(), before);
}

#[test]
fn clean_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path(), 150);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_pipeline(&config, &a).unwrap();
    run_pipeline(&config, &b).unwrap();
    for (x, y) in artifacts(&a).iter().zip(artifacts(&b)) {
        assert_eq!(fs::read(x).unwrap(), fs::read(&y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn failures_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = setup(tmp.path(), 10);
    config.datasets[0].input = tmp.path().join("missing.jsonl");
    let err = run_pipeline(&config, &tmp.path().join("w")).unwrap_err();
    assert_eq!(err.stage, "synthetic/ingest");
    assert!(err.to_string().starts_with("stage `synthetic/ingest` failed"));
}
