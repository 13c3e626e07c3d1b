//! Published stage tables used as golden fixtures.
#![allow(dead_code)]

use serde::Deserialize;
use ssas_core::evaluation::ConfusionMatrix;
use ssas_core::StageCounts;

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct Printed {
    pub net_consistency: f64,
    pub data_conditioning: f64,
    pub total_improvement: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct StageTable {
    pub direct: Option<StageCounts>,
    pub ssas: Option<StageCounts>,
    pub confusion: [[u64; 4]; 4],
    pub ssas_column_totals: [u64; 4],
    pub printed: Option<Printed>,
}

impl StageTable {
    pub fn matrix(&self) -> ConfusionMatrix {
        ConfusionMatrix { cells: self.confusion }
    }

    /// Printed counts, or the confusion-matrix marginals where the table
    /// omits them.
    pub fn counts(&self) -> (StageCounts, StageCounts) {
        let m = self.matrix();
        (self.direct.unwrap_or_else(|| m.row_sums()), self.ssas.unwrap_or_else(|| m.column_sums()))
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ConsistencyCell {
    pub scenario: String,
    pub dataset: String,
    #[serde(default)]
    pub stages: Option<Vec<StageTable>>,
    #[serde(default)]
    pub no_datapoints: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SummaryCell {
    pub scenario: String,
    pub dataset: String,
    pub datapoints: [u64; 3],
    /// All fields are null for "No Datapoints" cells.
    pub printed: Vec<PrintedOneDecimal>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct PrintedOneDecimal {
    pub net_consistency: Option<f64>,
    pub data_conditioning: Option<f64>,
    pub total_improvement: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ThemeRow {
    pub theme: i32,
    pub all: Option<[u64; 3]>,
    pub without_irrelevant: Option<[u64; 3]>,
    pub without_irrelevant_outlier: Option<[u64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct StageTotals {
    pub all: [u64; 4],
    pub without_irrelevant: [u64; 4],
    pub without_irrelevant_outlier: [u64; 4],
}

#[derive(Debug, Clone, Deserialize)]
pub struct DatasetHierarchy {
    pub themes: Vec<ThemeRow>,
    pub totals: StageTotals,
}

fn load<T: serde::de::DeserializeOwned>(name: &str) -> T {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

pub fn consistency_tables() -> Vec<ConsistencyCell> {
    load("consistency_tables.json")
}

pub fn scenario_summary() -> Vec<SummaryCell> {
    load("scenario_summary.json")
}

pub fn hierarchy_totals() -> std::collections::BTreeMap<String, DatasetHierarchy> {
    load("hierarchy_totals.json")
}

pub fn cell<'a>(cells: &'a [ConsistencyCell], scenario: &str, dataset: &str) -> &'a ConsistencyCell {
    cells
        .iter()
        .find(|c| c.scenario == scenario && c.dataset == dataset)
        .unwrap_or_else(|| panic!("no fixture for {scenario}/{dataset}"))
}
