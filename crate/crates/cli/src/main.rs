use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ssas_core::characterize::{DistributionFilter, ScenarioFilter, VolumeFilter};
use ssas_core::pipeline::stages::{self, EvaluateInputs, PredictInputs, ReportOutputs};
use ssas_core::pipeline::{run_pipeline, BackendKind, DatasetPaths, PipelineConfig, PipelineError, StageFailure};
use ssas_core::{Method, Schema};

#[derive(Parser)]
#[command(name = "ssas", version, about = "Hierarchical-context sentiment consistency experiments")]
struct Cli {
    /// Directory holding intermediate artifacts.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Direct,
    Ssas,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw dump into canonical JSONL.
    Ingest {
        #[arg(long)]
        schema: Schema,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-entity volume and distribution buckets.
    Characterize {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the sub-corpus matching a volume/distribution filter.
    Segment {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        activity: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        volume: VolumeFilter,
        #[arg(long, default_value = "all")]
        distribution: DistributionFilter,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the theme/story/cluster hierarchy.
    Classify {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Hierarchy and assignment paths, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        out: Option<Vec<PathBuf>>,
    },
    /// Summaries for every node, bottom-up.
    Summarize {
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-review SNR scores.
    Score {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long)]
        assignments: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster gate and outlier flags.
    Gate {
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        assignments: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Gate and outlier paths, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        out: Option<Vec<PathBuf>>,
    },
    /// Repeated sentiment inference for one method.
    Predict {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-scenario consistency counts for one dataset.
    Evaluate {
        #[arg(long, default_value = "dataset")]
        dataset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scenario × dataset report from evaluation files.
    Report {
        /// Evaluation JSON files; defaults to every `*/evaluation.json` in the workdir.
        #[arg(long, num_args = 1..)]
        evaluations: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write chart-ready points.
        #[arg(long)]
        chart_data: Option<PathBuf>,
    },
    /// Every stage for every configured dataset.
    Run,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

/// Tags an error with the stage it came from so the exit message names it.
fn in_stage<T>(stage: &str, result: Result<T, StageFailure>) -> Result<T> {
    result.map_err(|e| PipelineError::new(stage, e).into())
}

fn execute(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let work = cli.workdir.as_path();
    // Single-stage commands share the artifact layout of a `run` with one dataset.
    let p = DatasetPaths::new(work, "");
    let or = |arg: &Option<PathBuf>, default: &Path| arg.clone().unwrap_or_else(|| default.to_path_buf());
    std::fs::create_dir_all(work).with_context(|| format!("cannot create {}", work.display()))?;

    match &cli.command {
        Command::Ingest { schema, input, out } => {
            let out = or(out, &p.corpus);
            let s = in_stage("ingest", stages::ingest_file(input, *schema, &out, Some(&p.malformed)))?;
            println!("{} reviews, {} entities, {} malformed lines", s.reviews, s.entities, s.malformed.len());
        }
        Command::Characterize { corpus, out } => {
            let n = in_stage("characterize", stages::characterize_file(&or(corpus, &p.corpus), &or(out, &p.activity)))?;
            println!("{n} entities");
        }
        Command::Segment { corpus, activity, volume, distribution, out } => {
            let filter = ScenarioFilter::new(*volume, *distribution);
            let n = in_stage(
                "segment",
                stages::segment_file(&or(corpus, &p.corpus), &or(activity, &p.activity), filter, out),
            )?;
            println!("{n} reviews");
        }
        Command::Classify { corpus, out } => {
            let (h, a) = pair(out, &p.hierarchy, &p.assignments);
            let n = in_stage(
                "classify",
                stages::classify_file(&or(corpus, &p.corpus), &config.hierarchy_config(), &h, &a),
            )?;
            println!("{n} themes");
        }
        Command::Summarize { hierarchy, corpus, out } => {
            let n = in_stage(
                "summarize",
                stages::summarize_file(
                    &or(corpus, &p.corpus),
                    &or(hierarchy, &p.hierarchy),
                    config.summaries.budgets(),
                    config.summaries.summarizer,
                    &config.inference,
                    config.seed,
                    &or(out, &p.summaries),
                ),
            )?;
            println!("{n} summaries");
        }
        Command::Score { corpus, hierarchy, assignments, out } => {
            let n = in_stage(
                "score",
                stages::score_file(
                    &or(corpus, &p.corpus),
                    &or(hierarchy, &p.hierarchy),
                    &or(assignments, &p.assignments),
                    &or(out, &p.scores),
                ),
            )?;
            println!("{n} reviews scored");
        }
        Command::Gate { threshold, assignments, scores, out } => {
            let threshold = threshold.unwrap_or(config.gate.threshold);
            let (g, o) = pair(out, &p.gate, &p.outliers);
            let (kept, total, outliers) = in_stage(
                "gate",
                stages::gate_file(&or(assignments, &p.assignments), &or(scores, &p.scores), threshold, &g, &o),
            )?;
            println!("{kept}/{total} clusters retained, {outliers} outlier reviews");
        }
        Command::Predict { method, runs, backend, corpus, out } => {
            let mut inference = config.inference.clone();
            if let Some(n) = runs {
                inference.n_runs = *n;
            }
            if let Some(b) = backend {
                inference.backend = match b {
                    BackendArg::Mock => BackendKind::Mock,
                    BackendArg::Http => BackendKind::Http,
                };
            }
            let corpus = or(corpus, &p.corpus);
            let (method, default_out) = match method {
                MethodArg::Direct => (Method::Direct, &p.runs_direct),
                MethodArg::Ssas => (Method::Ssas, &p.runs_ssas),
            };
            let inputs = match method {
                Method::Direct => PredictInputs { corpus: &corpus, assignments: None, summaries: None, scores: None },
                Method::Ssas => PredictInputs {
                    corpus: &corpus,
                    assignments: Some(&p.assignments),
                    summaries: Some(&p.summaries),
                    scores: Some(&p.scores),
                },
            };
            let stage = format!("predict_{}", method.id());
            let n = in_stage(
                &stage,
                stages::predict_file(&inputs, method, &inference, config.seed, &or(out, default_out)),
            )?;
            println!("{n} reviews × {} runs", inference.n_runs);
        }
        Command::Evaluate { dataset, out } => {
            let inputs = EvaluateInputs {
                corpus: &p.corpus,
                activity: &p.activity,
                assignments: &p.assignments,
                outliers: &p.outliers,
                direct: &p.runs_direct,
                ssas: &p.runs_ssas,
            };
            let eval = in_stage(
                "evaluate",
                stages::evaluate_files(&inputs, dataset, &config.report.scenarios, &or(out, &p.evaluation)),
            )?;
            println!("{} scenarios evaluated", eval.scenarios.len());
        }
        Command::Report { evaluations, format, out, chart_data } => {
            let evaluations = if evaluations.is_empty() { find_evaluations(work)? } else { evaluations.clone() };
            if evaluations.is_empty() {
                bail!("no evaluation files found under {}", work.display());
            }
            let refs: Vec<&Path> = evaluations.iter().map(PathBuf::as_path).collect();
            let out = match format {
                ReportFormat::Csv => or(out, &work.join("report.csv")),
                ReportFormat::Json => or(out, &work.join("report.json")),
            };
            let outputs = ReportOutputs {
                csv: matches!(format, ReportFormat::Csv).then_some(out.as_path()),
                json: matches!(format, ReportFormat::Json).then_some(out.as_path()),
                chart: chart_data.as_deref(),
            };
            let n = in_stage("report", stages::report_files(&refs, &outputs))?;
            println!("{n} cells written to {}", out.display());
        }
        Command::Run => {
            if config.datasets.is_empty() {
                bail!(PipelineError::config("no datasets configured"));
            }
            let outcome = run_pipeline(&config, work)?;
            println!("{} stages executed, {} skipped", outcome.executed.len(), outcome.skipped.len());
        }
    }
    Ok(())
}

fn pair(arg: &Option<Vec<PathBuf>>, a: &Path, b: &Path) -> (PathBuf, PathBuf) {
    match arg.as_deref() {
        Some([x, y]) => (x.clone(), y.clone()),
        _ => (a.to_path_buf(), b.to_path_buf()),
    }
}

fn find_evaluations(work: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(work)? {
        let path = entry?.path().join("evaluation.json");
        if path.is_file() {
            found.push(path);
        }
    }
    let direct = work.join("evaluation.json");
    if direct.is_file() {
        found.push(direct);
    }
    found.sort();
    Ok(found)
}
