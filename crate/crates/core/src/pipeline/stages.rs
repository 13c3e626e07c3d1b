//! Each stage as a file-to-file function, shared by the pipeline runner and
//! the command line.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{BackendKind, InferenceConfig, SummarizerKind};
use super::StageFailure;
use crate::characterize::{
    compute_entity_activity, read_activity_csv, segment, write_activity_csv, Scenario, ScenarioFilter,
};
use crate::context::{build_summaries, ExtractiveSummarizer, SummaryBudgets, SummarySet};
use crate::corpus::{assign_quarters, ingest, Corpus, Schema};
use crate::evaluation::{build_report, evaluate_cell, evaluate_counts, CellReport, StageCounts, StageMetrics};
use crate::hierarchy::{
    build_hierarchy, read_assignments_csv, write_assignments_csv, Hierarchy, HierarchyAssignment, HierarchyConfig,
};
use crate::inference::{
    build_prompt, run_experiment, HttpBackend, LlmBackend, LlmSummarizer, Method, MockBackend, Prompt, RunMatrix,
    RunMetadata,
};
use crate::scoring::{
    flag_outliers, gate_clusters, read_outliers_csv, read_scores_csv, score_corpus, write_gate_csv, write_outliers_csv,
    write_scores_csv, RefinementStage, SnrScore, StageSets,
};

type R<T> = Result<T, StageFailure>;

fn create(path: &Path) -> R<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> R<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| format!("cannot open {}: {e}", path.display()).into())
}

fn write_text(path: &Path, text: &str) -> R<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_corpus(path: &Path, dataset: &str) -> R<Corpus> {
    Ok(Corpus::load(path, dataset)?)
}

pub fn load_hierarchy(path: &Path) -> R<Hierarchy<f64>> {
    Ok(Hierarchy::from_json(&fs::read_to_string(path)?)?)
}

pub fn load_assignments(path: &Path) -> R<Vec<HierarchyAssignment>> {
    Ok(read_assignments_csv(open(path)?)?)
}

pub fn load_scores(path: &Path) -> R<Vec<SnrScore<f64>>> {
    Ok(read_scores_csv(open(path)?)?)
}

pub fn load_summaries(path: &Path) -> R<SummarySet> {
    Ok(SummarySet::from_json(&fs::read_to_string(path)?)?)
}

pub fn load_outliers(path: &Path) -> R<BTreeSet<String>> {
    Ok(read_outliers_csv(open(path)?)?)
}

pub fn load_run_matrix(path: &Path, method: Method) -> R<RunMatrix> {
    Ok(RunMatrix::read_csv(method, open(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub reviews: usize,
    pub entities: usize,
    pub malformed: Vec<crate::corpus::Malformed>,
}

/// Raw dump to canonical corpus JSONL plus a malformed-line report.
pub fn ingest_file(input: &Path, schema: Schema, out: &Path, report: Option<&Path>) -> R<IngestSummary> {
    let ingested = ingest(input, schema)?;
    let corpus = assign_quarters(ingested.corpus)?;
    corpus.write_jsonl(create(out)?)?;
    let summary =
        IngestSummary { reviews: corpus.len(), entities: corpus.entity_index().len(), malformed: ingested.malformed };
    if let Some(path) = report {
        write_text(path, &serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(summary)
}

pub fn characterize_file(corpus: &Path, out: &Path) -> R<usize> {
    let corpus = load_corpus(corpus, "dataset")?;
    let activity = compute_entity_activity::<f64>(&corpus)?;
    write_activity_csv(&activity, create(out)?)?;
    Ok(activity.len())
}

pub fn segment_file(corpus: &Path, activity: &Path, filter: ScenarioFilter, out: &Path) -> R<usize> {
    let corpus = load_corpus(corpus, "dataset")?;
    let activity = read_activity_csv::<f64, _>(open(activity)?)?;
    let subset = segment(&corpus, &activity, filter)?;
    subset.write_jsonl(create(out)?)?;
    Ok(subset.len())
}

pub fn classify_file(
    corpus: &Path,
    config: &HierarchyConfig,
    out_hierarchy: &Path,
    out_assignments: &Path,
) -> R<usize> {
    let corpus = load_corpus(corpus, "dataset")?;
    let (hierarchy, assignments) = build_hierarchy::<f64>(&corpus, config)?;
    write_text(out_hierarchy, &hierarchy.to_json()?)?;
    write_assignments_csv(&assignments, create(out_assignments)?)?;
    Ok(hierarchy.themes.len())
}

pub fn make_backend(config: &InferenceConfig, seed: u64, signals: HashMap<String, f64>) -> Box<dyn LlmBackend> {
    match config.backend {
        BackendKind::Mock => Box::new(
            MockBackend::new(seed, config.mock.base_noise)
                .with_signals(signals)
                .with_failure_rate(config.mock.failure_rate),
        ),
        BackendKind::Http => Box::new(HttpBackend::new(config.http.clone())),
    }
}

pub fn summarize_file(
    corpus: &Path,
    hierarchy: &Path,
    budgets: SummaryBudgets,
    summarizer: SummarizerKind,
    inference: &InferenceConfig,
    seed: u64,
    out: &Path,
) -> R<usize> {
    let corpus = load_corpus(corpus, "dataset")?;
    let hierarchy = load_hierarchy(hierarchy)?;
    let set = match summarizer {
        SummarizerKind::Extractive => build_summaries(&hierarchy, &corpus, budgets, &ExtractiveSummarizer)?,
        SummarizerKind::Llm => {
            let s = LlmSummarizer::new(make_backend(inference, seed, HashMap::new()), inference.max_retries);
            build_summaries(&hierarchy, &corpus, budgets, &s)?
        }
    };
    write_text(out, &set.to_json()?)?;
    Ok(set.len())
}

pub fn score_file(corpus: &Path, hierarchy: &Path, assignments: &Path, out: &Path) -> R<usize> {
    let corpus = load_corpus(corpus, "dataset")?;
    let hierarchy = load_hierarchy(hierarchy)?;
    let assignments = load_assignments(assignments)?;
    let scores = score_corpus(&corpus, &assignments, &hierarchy)?;
    write_scores_csv(&scores, create(out)?)?;
    Ok(scores.len())
}

/// Returns (retained clusters, total clusters, outlier count).
pub fn gate_file(
    assignments: &Path,
    scores: &Path,
    threshold: f64,
    out_gate: &Path,
    out_outliers: &Path,
) -> R<(usize, usize, usize)> {
    let assignments = load_assignments(assignments)?;
    let scores = load_scores(scores)?;
    let gate = gate_clusters(&assignments, &scores, threshold)?;
    let outliers = flag_outliers(&assignments, &gate);
    write_gate_csv(&gate, create(out_gate)?)?;
    write_outliers_csv(&outliers, create(out_outliers)?)?;
    Ok((gate.iter().filter(|g| g.retained).count(), gate.len(), outliers.len()))
}

/// Mock context signal: the review's SNR total scaled to `[0, 1]`.
pub fn context_signals(scores: &[SnrScore<f64>]) -> HashMap<String, f64> {
    scores.iter().map(|s| (s.review_id.clone(), s.total / 3.0)).collect()
}

pub struct PredictInputs<'a> {
    pub corpus: &'a Path,
    pub assignments: Option<&'a Path>,
    pub summaries: Option<&'a Path>,
    pub scores: Option<&'a Path>,
}

pub fn predict_file(
    inputs: &PredictInputs<'_>,
    method: Method,
    config: &InferenceConfig,
    seed: u64,
    out: &Path,
) -> R<usize> {
    let corpus = load_corpus(inputs.corpus, "dataset")?;
    let signals = match inputs.scores {
        Some(p) => context_signals(&load_scores(p)?),
        None => HashMap::new(),
    };
    let prompts: Vec<Prompt> = match method {
        Method::Direct => {
            corpus.reviews().iter().map(|r| build_prompt(r, Method::Direct, None)).collect::<Result<_, _>>()?
        }
        Method::Ssas => {
            let (Some(a), Some(s)) = (inputs.assignments, inputs.summaries) else {
                return Err("SSAS prediction needs assignments and summaries".into());
            };
            let assignments: HashMap<String, HierarchyAssignment> =
                load_assignments(a)?.into_iter().map(|x| (x.review_id.clone(), x)).collect();
            let summaries = load_summaries(s)?;
            corpus
                .reviews()
                .iter()
                .map(|r| {
                    let a = assignments.get(&r.id).ok_or_else(|| format!("no assignment for review `{}`", r.id))?;
                    let path = summaries.for_assignment(a)?;
                    Ok(build_prompt(r, Method::Ssas, Some(path))?)
                })
                .collect::<R<_>>()?
        }
    };
    let backend = make_backend(config, seed, signals);
    let checkpoint = out.with_extension("checkpoint.csv");
    let started_at = chrono::Utc::now().to_rfc3339();
    let matrix = run_experiment(&prompts, backend.as_ref(), seed, &config.run_settings(Some(checkpoint)))?;
    let meta = RunMetadata {
        method,
        n_runs: matrix.n_runs,
        reviews: matrix.len(),
        seed,
        backend: backend.info(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
    };
    let mut w = create(out)?;
    matrix.write_csv(&mut w)?;
    w.flush()?;
    write_text(&out.with_extension("meta.json"), &serde_json::to_string_pretty(&meta)?)?;
    Ok(matrix.len())
}

/// Per-stage counts for one scenario; `None` for an empty segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCounts {
    pub scenario: Scenario,
    pub stages: Option<Vec<StageCountsRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCountsRow {
    pub stage: RefinementStage,
    pub direct: StageCounts,
    pub ssas: StageCounts,
    pub net_consistency: f64,
    pub data_conditioning: f64,
    pub total_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEvaluation {
    pub dataset: String,
    pub scenarios: Vec<ScenarioCounts>,
}

pub struct EvaluateInputs<'a> {
    pub corpus: &'a Path,
    pub activity: &'a Path,
    pub assignments: &'a Path,
    pub outliers: &'a Path,
    pub direct: &'a Path,
    pub ssas: &'a Path,
}

pub fn evaluate_files(
    inputs: &EvaluateInputs<'_>,
    dataset: &str,
    scenarios: &[Scenario],
    out: &Path,
) -> R<DatasetEvaluation> {
    let corpus = load_corpus(inputs.corpus, dataset)?;
    let activity = read_activity_csv::<f64, _>(open(inputs.activity)?)?;
    let assignments = load_assignments(inputs.assignments)?;
    let outliers = load_outliers(inputs.outliers)?;
    let direct = load_run_matrix(inputs.direct, Method::Direct)?;
    let ssas = load_run_matrix(inputs.ssas, Method::Ssas)?;
    let stages = StageSets::build(&corpus, &assignments, &outliers);

    let mut rows = Vec::with_capacity(scenarios.len());
    for &scenario in scenarios {
        let keep: BTreeSet<String> =
            segment(&corpus, &activity, scenario.filter())?.ids().map(str::to_string).collect();
        let metrics = evaluate_cell::<f64>(&direct, &ssas, &stages.restrict(&keep))?;
        rows.push(ScenarioCounts {
            scenario,
            stages: metrics.map(|m| m.into_iter().map(StageCountsRow::from).collect()),
        });
    }
    let evaluation = DatasetEvaluation { dataset: dataset.to_string(), scenarios: rows };
    write_text(out, &serde_json::to_string_pretty(&evaluation)?)?;
    Ok(evaluation)
}

impl From<StageMetrics<f64>> for StageCountsRow {
    fn from(m: StageMetrics<f64>) -> Self {
        Self {
            stage: m.stage,
            direct: m.direct,
            ssas: m.ssas,
            net_consistency: m.net_consistency,
            data_conditioning: m.data_conditioning,
            total_improvement: m.total_improvement,
        }
    }
}

pub struct ReportOutputs<'a> {
    pub csv: Option<&'a Path>,
    pub json: Option<&'a Path>,
    pub chart: Option<&'a Path>,
}

/// Collects dataset evaluations into the scenario × dataset report. Metrics
/// are recomputed from the stored counts.
pub fn report_files(evaluations: &[&Path], out: &ReportOutputs<'_>) -> R<usize> {
    let mut cells = Vec::new();
    for path in evaluations {
        let eval: DatasetEvaluation = serde_json::from_str(&fs::read_to_string(path)?)?;
        for sc in eval.scenarios {
            let stages = match sc.stages {
                None => None,
                Some(rows) if rows.iter().all(|r| r.direct.total > 0) => {
                    let counts: [(StageCounts, StageCounts); 3] = rows
                        .iter()
                        .map(|r| (r.direct, r.ssas))
                        .collect::<Vec<_>>()
                        .try_into()
                        .map_err(|_| format!("{}: expected three stages", path.display()))?;
                    Some(evaluate_counts::<f64>(counts)?)
                }
                Some(rows) => Some(
                    rows.into_iter()
                        .map(|r| StageMetrics {
                            stage: r.stage,
                            direct: r.direct,
                            ssas: r.ssas,
                            net_consistency: r.net_consistency,
                            data_conditioning: r.data_conditioning,
                            total_improvement: r.total_improvement,
                        })
                        .collect(),
                ),
            };
            cells.push(CellReport { scenario: sc.scenario, dataset: eval.dataset.clone(), stages });
        }
    }
    let report = build_report(cells);
    if let Some(p) = out.csv {
        report.write_csv(create(p)?)?;
    }
    if let Some(p) = out.json {
        write_text(p, &serde_json::to_string_pretty(&report.to_json())?)?;
    }
    if let Some(p) = out.chart {
        report.write_chart_csv(create(p)?)?;
    }
    Ok(report.cells.len())
}
