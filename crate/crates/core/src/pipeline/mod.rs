//! End-to-end experiment runner with a hash manifest for incremental reruns.

mod config;
mod manifest;
pub mod stages;

use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::json;

pub use config::{
    BackendKind, DatasetConfig, GateConfig, InferenceConfig, MockConfig, PipelineConfig, ReportConfig, SummarizerKind,
    SummaryConfig,
};
pub use manifest::{hash_bytes, hash_file, Manifest, StageRecord};

use crate::inference::Method;
use manifest::{relative_key, StageInputs};
use stages::{EvaluateInputs, PredictInputs, ReportOutputs};

/// Error type used inside stage bodies before it is tagged with the stage.
pub type StageFailure = Box<dyn std::error::Error + Send + Sync>;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug)]
pub struct PipelineError {
    pub stage: String,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: impl Into<String>, message: impl fmt::Display) -> Self {
        Self { stage: stage.into(), message: message.to_string() }
    }

    pub fn config(message: impl fmt::Display) -> Self {
        Self::new("config", message)
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

/// Stage ids in execution order, as recorded in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineOutcome {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
}

struct Runner<'a> {
    root: &'a Path,
    manifest_path: PathBuf,
    manifest: Manifest,
    outcome: PipelineOutcome,
}

impl Runner<'_> {
    fn stage(
        &mut self,
        id: String,
        config: serde_json::Value,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
        body: impl FnOnce() -> Result<(), StageFailure>,
    ) -> Result<(), PipelineError> {
        let fail = |e: &dyn fmt::Display| PipelineError::new(id.clone(), e);
        let spec = StageInputs { stage: id.clone(), config, files: inputs };
        let (input_hash, input_files) = spec.digest(self.root).map_err(|e| fail(&e))?;

        if let Some(record) = self.manifest.stages.get(&id) {
            if record.input_hash == input_hash && self.outputs_match(record, &outputs) {
                self.outcome.skipped.push(id);
                return Ok(());
            }
        }

        body().map_err(|e| fail(&e))?;

        let mut output_files = std::collections::BTreeMap::new();
        for path in &outputs {
            let h = hash_file(path).map_err(|e| fail(&format!("missing output {}: {e}", path.display())))?;
            output_files.insert(relative_key(self.root, path), h);
        }
        self.manifest.stages.insert(id.clone(), StageRecord { input_hash, inputs: input_files, outputs: output_files });
        self.manifest.save(&self.manifest_path).map_err(|e| fail(&e))?;
        self.outcome.executed.push(id);
        Ok(())
    }

    fn outputs_match(&self, record: &StageRecord, outputs: &[PathBuf]) -> bool {
        outputs.len() == record.outputs.len()
            && outputs.iter().all(|p| {
                record
                    .outputs
                    .get(&relative_key(self.root, p))
                    .is_some_and(|h| hash_file(p).is_ok_and(|actual| &actual == h))
            })
    }
}

/// Runs every stage for every dataset, then the report. Stages whose inputs
/// and outputs match the manifest are skipped.
pub fn run_pipeline(config: &PipelineConfig, workdir: &Path) -> Result<PipelineOutcome, PipelineError> {
    config.validate()?;
    std::fs::create_dir_all(workdir).map_err(|e| PipelineError::new("setup", e))?;
    let manifest_path = workdir.join(MANIFEST_FILE);
    let manifest = Manifest::load(&manifest_path).map_err(|e| PipelineError::new("setup", e))?;
    let mut runner = Runner { root: workdir, manifest_path, manifest, outcome: PipelineOutcome::default() };

    let mut evaluations = Vec::with_capacity(config.datasets.len());
    for dataset in &config.datasets {
        evaluations.push(run_dataset(&mut runner, config, dataset)?);
    }

    let report_csv = workdir.join("report.csv");
    let report_json = workdir.join("report.json");
    let chart_csv = workdir.join("chart.csv");
    runner.stage(
        "report".into(),
        json!({}),
        evaluations.clone(),
        vec![report_csv.clone(), report_json.clone(), chart_csv.clone()],
        || {
            let refs: Vec<&Path> = evaluations.iter().map(PathBuf::as_path).collect();
            let out = ReportOutputs { csv: Some(&report_csv), json: Some(&report_json), chart: Some(&chart_csv) };
            stages::report_files(&refs, &out).map(drop)
        },
    )?;
    Ok(runner.outcome)
}

/// Artifact paths for one dataset under `workdir/<name>/`.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub dir: PathBuf,
    pub corpus: PathBuf,
    pub malformed: PathBuf,
    pub activity: PathBuf,
    pub hierarchy: PathBuf,
    pub assignments: PathBuf,
    pub summaries: PathBuf,
    pub scores: PathBuf,
    pub gate: PathBuf,
    pub outliers: PathBuf,
    pub runs_direct: PathBuf,
    pub runs_ssas: PathBuf,
    pub evaluation: PathBuf,
}

impl DatasetPaths {
    pub fn new(workdir: &Path, dataset: &str) -> Self {
        let dir = workdir.join(dataset);
        let f = |name: &str| dir.join(name);
        Self {
            corpus: f("corpus.jsonl"),
            malformed: f("malformed.json"),
            activity: f("activity.csv"),
            hierarchy: f("hierarchy.json"),
            assignments: f("assignments.csv"),
            summaries: f("summaries.json"),
            scores: f("scores.csv"),
            gate: f("gate.csv"),
            outliers: f("outliers.csv"),
            runs_direct: f("runs_direct.csv"),
            runs_ssas: f("runs_ssas.csv"),
            evaluation: f("evaluation.json"),
            dir,
        }
    }
}

fn to_value<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("config types serialize to JSON")
}

fn run_dataset(
    runner: &mut Runner<'_>,
    config: &PipelineConfig,
    dataset: &DatasetConfig,
) -> Result<PathBuf, PipelineError> {
    let p = DatasetPaths::new(runner.root, &dataset.name);
    let name = &dataset.name;
    let id = |stage: &str| format!("{name}/{stage}");
    let seed = config.seed;
    let inference = &config.inference;
    // Seeds and run settings matter to inference; endpoint secrets never reach the manifest.
    let inference_fragment = json!({
        "seed": seed,
        "n_runs": inference.n_runs,
        "backend": to_value(&inference.backend),
        "mock": to_value(&inference.mock),
        "http": to_value(&inference.http),
    });

    runner.stage(
        id("ingest"),
        json!({ "schema": dataset.schema.name() }),
        vec![dataset.input.clone()],
        vec![p.corpus.clone(), p.malformed.clone()],
        || stages::ingest_file(&dataset.input, dataset.schema, &p.corpus, Some(&p.malformed)).map(drop),
    )?;

    runner.stage(id("characterize"), json!({}), vec![p.corpus.clone()], vec![p.activity.clone()], || {
        stages::characterize_file(&p.corpus, &p.activity).map(drop)
    })?;

    let hierarchy_config = config.hierarchy_config();
    runner.stage(
        id("classify"),
        to_value(&hierarchy_config),
        vec![p.corpus.clone()],
        vec![p.hierarchy.clone(), p.assignments.clone()],
        || stages::classify_file(&p.corpus, &hierarchy_config, &p.hierarchy, &p.assignments).map(drop),
    )?;

    let summary_fragment = match config.summaries.summarizer {
        SummarizerKind::Extractive => to_value(&config.summaries),
        SummarizerKind::Llm => json!({ "summaries": to_value(&config.summaries), "inference": inference_fragment }),
    };
    runner.stage(
        id("summarize"),
        summary_fragment,
        vec![p.corpus.clone(), p.hierarchy.clone()],
        vec![p.summaries.clone()],
        || {
            stages::summarize_file(
                &p.corpus,
                &p.hierarchy,
                config.summaries.budgets(),
                config.summaries.summarizer,
                inference,
                seed,
                &p.summaries,
            )
            .map(drop)
        },
    )?;

    runner.stage(
        id("score"),
        json!({}),
        vec![p.corpus.clone(), p.hierarchy.clone(), p.assignments.clone()],
        vec![p.scores.clone()],
        || stages::score_file(&p.corpus, &p.hierarchy, &p.assignments, &p.scores).map(drop),
    )?;

    runner.stage(
        id("gate"),
        to_value(&config.gate),
        vec![p.assignments.clone(), p.scores.clone()],
        vec![p.gate.clone(), p.outliers.clone()],
        || stages::gate_file(&p.assignments, &p.scores, config.gate.threshold, &p.gate, &p.outliers).map(drop),
    )?;

    runner.stage(
        id("predict_direct"),
        inference_fragment.clone(),
        vec![p.corpus.clone()],
        vec![p.runs_direct.clone()],
        || {
            let inputs = PredictInputs { corpus: &p.corpus, assignments: None, summaries: None, scores: None };
            stages::predict_file(&inputs, Method::Direct, inference, seed, &p.runs_direct).map(drop)
        },
    )?;

    runner.stage(
        id("predict_ssas"),
        inference_fragment,
        vec![p.corpus.clone(), p.assignments.clone(), p.summaries.clone(), p.scores.clone()],
        vec![p.runs_ssas.clone()],
        || {
            let inputs = PredictInputs {
                corpus: &p.corpus,
                assignments: Some(&p.assignments),
                summaries: Some(&p.summaries),
                scores: Some(&p.scores),
            };
            stages::predict_file(&inputs, Method::Ssas, inference, seed, &p.runs_ssas).map(drop)
        },
    )?;

    runner.stage(
        id("evaluate"),
        json!({ "scenarios": to_value(&config.report.scenarios) }),
        vec![
            p.corpus.clone(),
            p.activity.clone(),
            p.assignments.clone(),
            p.outliers.clone(),
            p.runs_direct.clone(),
            p.runs_ssas.clone(),
        ],
        vec![p.evaluation.clone()],
        || {
            let inputs = EvaluateInputs {
                corpus: &p.corpus,
                activity: &p.activity,
                assignments: &p.assignments,
                outliers: &p.outliers,
                direct: &p.runs_direct,
                ssas: &p.runs_ssas,
            };
            stages::evaluate_files(&inputs, name, &config.report.scenarios, &p.evaluation).map(drop)
        },
    )?;

    Ok(p.evaluation)
}
