use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::characterize::Scenario;
use crate::context::SummaryBudgets;
use crate::corpus::Schema;
use crate::hierarchy::HierarchyConfig;
use crate::inference::{HttpConfig, RunSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Used for the artifact directory and the report.
    pub name: String,
    pub schema: Schema,
    pub input: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummarizerKind {
    #[default]
    Extractive,
    /// Summaries come from the configured inference backend.
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryConfig {
    pub cluster_budget: usize,
    pub story_budget: usize,
    pub theme_budget: usize,
    pub summarizer: SummarizerKind,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        let b = SummaryBudgets::default();
        Self {
            cluster_budget: b.cluster,
            story_budget: b.story,
            theme_budget: b.theme,
            summarizer: SummarizerKind::Extractive,
        }
    }
}

impl SummaryConfig {
    pub fn budgets(&self) -> SummaryBudgets {
        SummaryBudgets { cluster: self.cluster_budget, story: self.story_budget, theme: self.theme_budget }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub threshold: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { threshold: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    pub base_noise: f64,
    pub failure_rate: f64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self { base_noise: 0.3, failure_rate: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub n_runs: usize,
    pub max_retries: u32,
    pub in_flight: usize,
    pub requests_per_second: Option<f64>,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub backend: BackendKind,
    pub mock: MockConfig,
    pub http: HttpConfig,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        let r = RunSettings::default();
        Self {
            n_runs: r.n_runs,
            max_retries: r.max_retries,
            in_flight: r.in_flight,
            requests_per_second: r.requests_per_second,
            backoff_base_ms: r.backoff_base_ms,
            backoff_max_ms: r.backoff_max_ms,
            backend: BackendKind::Mock,
            mock: MockConfig::default(),
            http: HttpConfig::default(),
        }
    }
}

impl InferenceConfig {
    pub fn run_settings(&self, checkpoint: Option<PathBuf>) -> RunSettings {
        RunSettings {
            n_runs: self.n_runs,
            max_retries: self.max_retries,
            in_flight: self.in_flight,
            requests_per_second: self.requests_per_second,
            backoff_base_ms: self.backoff_base_ms,
            backoff_max_ms: self.backoff_max_ms,
            checkpoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub scenarios: Vec<Scenario>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { scenarios: Scenario::ALL.to_vec() }
    }
}

/// The whole experiment as one checked-in file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds hierarchy construction and inference.
    pub seed: u64,
    pub datasets: Vec<DatasetConfig>,
    pub hierarchy: HierarchyConfig,
    pub summaries: SummaryConfig,
    pub gate: GateConfig,
    pub inference: InferenceConfig,
    pub report: ReportConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML file; relative dataset paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut config.datasets {
            if d.input.is_relative() {
                d.input = base.join(&d.input);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.hierarchy.validate().map_err(|e| PipelineError::config(e.to_string()))?;
        if self.inference.n_runs == 0 {
            return Err(PipelineError::config("inference.n_runs must be at least 1"));
        }
        if !self.gate.threshold.is_finite() || self.gate.threshold < 0.0 {
            return Err(PipelineError::config("gate.threshold must be a non-negative number"));
        }
        let s = &self.summaries;
        if s.cluster_budget == 0 || s.story_budget == 0 || s.theme_budget == 0 {
            return Err(PipelineError::config("summary budgets must be positive"));
        }
        let mut names = std::collections::HashSet::new();
        for d in &self.datasets {
            if d.name.is_empty() || d.name.contains(['/', '\\']) || !names.insert(d.name.as_str()) {
                return Err(PipelineError::config(format!("invalid or duplicate dataset name `{}`", d.name)));
            }
        }
        Ok(())
    }

    /// Hierarchy settings with the global seed applied.
    pub fn hierarchy_config(&self) -> HierarchyConfig {
        HierarchyConfig { seed: self.seed, ..self.hierarchy.clone() }
    }
}
