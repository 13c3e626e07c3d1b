use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    consistency_map, counts_from_labels, data_conditioning, net_consistency, total_improvement, EvaluationError,
    StageCounts,
};
use crate::characterize::Scenario;
use crate::inference::RunMatrix;
use crate::scalar::{round_half_up, Quantity};
use crate::scoring::{RefinementStage, StageSets};

pub const NO_DATAPOINTS: &str = "No Datapoints";

#[derive(Debug, Clone, PartialEq)]
pub struct StageMetrics<T> {
    pub stage: RefinementStage,
    pub direct: StageCounts,
    pub ssas: StageCounts,
    pub net_consistency: T,
    pub data_conditioning: T,
    pub total_improvement: T,
}

impl<T> StageMetrics<T> {
    pub fn datapoints(&self) -> u64 {
        self.direct.total
    }
}

/// Metrics for the three stages from their DIRECT and SSAS counts. Data
/// conditioning is measured against the first (unfiltered) stage.
pub fn evaluate_counts<T: Quantity>(
    counts: [(StageCounts, StageCounts); 3],
) -> Result<Vec<StageMetrics<T>>, EvaluationError> {
    let original = counts[0].0.total;
    RefinementStage::ALL
        .into_iter()
        .zip(counts)
        .map(|(stage, (direct, ssas))| {
            let net = net_consistency::<T>(&direct, &ssas)?;
            let cond = data_conditioning::<T>(original, direct.total)?;
            Ok(StageMetrics {
                stage,
                direct,
                ssas,
                net_consistency: net,
                data_conditioning: cond,
                total_improvement: total_improvement(net, cond)?,
            })
        })
        .collect()
}

/// One (scenario, dataset) cell; `None` when the segment is empty.
pub fn evaluate_cell<T: Quantity>(
    direct: &RunMatrix,
    ssas: &RunMatrix,
    stages: &StageSets,
) -> Result<Option<Vec<StageMetrics<T>>>, EvaluationError> {
    if stages.all.is_empty() {
        return Ok(None);
    }
    let d = consistency_map(direct)?;
    let s = consistency_map(ssas)?;
    let mut counts = Vec::with_capacity(3);
    for stage in RefinementStage::ALL {
        let set = stages.get(stage);
        counts.push((counts_from_labels(&d, set)?, counts_from_labels(&s, set)?));
    }
    let counts: [(StageCounts, StageCounts); 3] = counts.try_into().expect("three stages");
    // A stage emptied entirely by filtering has no consistency to compare.
    if counts.iter().any(|(d, _)| d.total == 0) {
        return evaluate_partial(counts).map(Some);
    }
    evaluate_counts(counts).map(Some)
}

fn evaluate_partial<T: Quantity>(
    counts: [(StageCounts, StageCounts); 3],
) -> Result<Vec<StageMetrics<T>>, EvaluationError> {
    let original = counts[0].0.total;
    RefinementStage::ALL
        .into_iter()
        .zip(counts)
        .map(|(stage, (direct, ssas))| {
            let net = if direct.total == 0 { T::zero() } else { net_consistency::<T>(&direct, &ssas)? };
            let cond = data_conditioning::<T>(original, direct.total)?;
            Ok(StageMetrics {
                stage,
                direct,
                ssas,
                net_consistency: net,
                data_conditioning: cond,
                total_improvement: total_improvement(net, cond)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport<T> {
    pub scenario: Scenario,
    pub dataset: String,
    pub stages: Option<Vec<StageMetrics<T>>>,
}

/// A report line: one stage of one cell, percentages rounded to 2 decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub dataset: String,
    pub stage: String,
    pub datapoints: Option<u64>,
    pub net_consistency: Option<f64>,
    pub data_conditioning: Option<f64>,
    pub total_improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub scenario: String,
    pub dataset: String,
    pub stage: String,
    pub total_improvement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report<T> {
    pub cells: Vec<CellReport<T>>,
}

/// Orders cells by scenario, keeping dataset order stable within a scenario.
pub fn build_report<T>(mut cells: Vec<CellReport<T>>) -> Report<T> {
    cells.sort_by_key(|c| c.scenario);
    Report { cells }
}

fn pct<T: Quantity>(v: &T) -> f64 {
    round_half_up(v.to_f64(), 2)
}

impl<T: Quantity> Report<T> {
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            match &cell.stages {
                None => rows.push(ReportRow {
                    scenario: cell.scenario.label().into(),
                    dataset: cell.dataset.clone(),
                    stage: NO_DATAPOINTS.into(),
                    datapoints: None,
                    net_consistency: None,
                    data_conditioning: None,
                    total_improvement: None,
                }),
                Some(stages) => rows.extend(stages.iter().map(|m| ReportRow {
                    scenario: cell.scenario.label().into(),
                    dataset: cell.dataset.clone(),
                    stage: m.stage.label().into(),
                    datapoints: Some(m.datapoints()),
                    net_consistency: Some(pct(&m.net_consistency)),
                    data_conditioning: Some(pct(&m.data_conditioning)),
                    total_improvement: Some(pct(&m.total_improvement)),
                })),
            }
        }
        rows
    }

    pub fn chart_data(&self) -> Vec<ChartPoint> {
        self.cells
            .iter()
            .filter_map(|c| c.stages.as_ref().map(|s| (c, s)))
            .flat_map(|(c, stages)| {
                stages.iter().map(move |m| ChartPoint {
                    scenario: c.scenario.label().into(),
                    dataset: c.dataset.clone(),
                    stage: m.stage.label().into(),
                    total_improvement: pct(&m.total_improvement),
                })
            })
            .collect()
    }

    /// Long-format CSV; empty cells print `No Datapoints` in every metric
    /// column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "scenario",
            "dataset",
            "stage",
            "datapoints",
            "net_consistency",
            "data_conditioning",
            "total_improvement",
        ])?;
        let fmt = |v: Option<f64>| v.map_or_else(|| NO_DATAPOINTS.to_string(), |x| format!("{x:.2}"));
        for r in self.rows() {
            wtr.write_record([
                r.scenario,
                r.dataset,
                r.stage,
                r.datapoints.map_or_else(|| NO_DATAPOINTS.to_string(), |d| d.to_string()),
                fmt(r.net_consistency),
                fmt(r.data_conditioning),
                fmt(r.total_improvement),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_chart_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(out);
        for p in self.chart_data() {
            wtr.serialize(p)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// One object per cell with per-stage arrays in stage order, or the
    /// `No Datapoints` marker.
    pub fn to_json(&self) -> serde_json::Value {
        let cells: Vec<serde_json::Value> = self
            .cells
            .iter()
            .map(|c| match &c.stages {
                None => serde_json::json!({
                    "scenario": c.scenario.label(),
                    "dataset": c.dataset,
                    "result": NO_DATAPOINTS,
                }),
                Some(stages) => serde_json::json!({
                    "scenario": c.scenario.label(),
                    "dataset": c.dataset,
                    "stages": stages.iter().map(|m| m.stage.label()).collect::<Vec<_>>(),
                    "datapoints": stages.iter().map(StageMetrics::datapoints).collect::<Vec<_>>(),
                    "net_consistency": stages.iter().map(|m| pct(&m.net_consistency)).collect::<Vec<_>>(),
                    "data_conditioning": stages.iter().map(|m| pct(&m.data_conditioning)).collect::<Vec<_>>(),
                    "total_improvement": stages.iter().map(|m| pct(&m.total_improvement)).collect::<Vec<_>>(),
                    "direct": stages.iter().map(|m| m.direct).collect::<Vec<_>>(),
                    "ssas": stages.iter().map(|m| m.ssas).collect::<Vec<_>>(),
                }),
            })
            .collect();
        serde_json::json!({ "cells": cells })
    }
}
