//! Run-to-run consistency labels, method comparison and improvement metrics.

mod report;

pub use report::{
    build_report, evaluate_cell, evaluate_counts, CellReport, ChartPoint, Report, ReportRow, StageMetrics,
    NO_DATAPOINTS,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::inference::{RunMatrix, SentimentLabel};
use crate::scalar::Quantity;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvaluationError {
    #[error("cannot classify an empty label sequence")]
    EmptyLabels,
    #[error("review `{0}` is not in the run matrix")]
    UnknownReview(String),
    #[error("stage totals differ: DIRECT {direct}, SSAS {ssas}")]
    TotalMismatch { direct: u64, ssas: u64 },
    #[error("counts do not add up to their total ({0})")]
    InconsistentCounts(String),
    #[error("stage total is zero")]
    EmptyStage,
    #[error("stage total {stage} exceeds original total {original}")]
    StageExceedsOriginal { original: u64, stage: u64 },
    #[error("original total is zero")]
    ZeroOriginal,
    #[error("improvement components must be non-negative")]
    NegativeComponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConsistencyLabel {
    ConsistentPositive,
    ConsistentNegative,
    ConsistentNeutral,
    Inconsistent,
}

impl ConsistencyLabel {
    pub const ALL: [ConsistencyLabel; 4] = [
        ConsistencyLabel::ConsistentPositive,
        ConsistencyLabel::ConsistentNegative,
        ConsistencyLabel::ConsistentNeutral,
        ConsistencyLabel::Inconsistent,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_consistent(self) -> bool {
        self != ConsistencyLabel::Inconsistent
    }

    fn of(label: SentimentLabel) -> Self {
        match label {
            SentimentLabel::Positive => ConsistencyLabel::ConsistentPositive,
            SentimentLabel::Negative => ConsistencyLabel::ConsistentNegative,
            SentimentLabel::Neutral => ConsistencyLabel::ConsistentNeutral,
        }
    }
}

impl fmt::Display for ConsistencyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConsistencyLabel::ConsistentPositive => "CONSISTENT_POSITIVE",
            ConsistencyLabel::ConsistentNegative => "CONSISTENT_NEGATIVE",
            ConsistencyLabel::ConsistentNeutral => "CONSISTENT_NEUTRAL",
            ConsistencyLabel::Inconsistent => "INCONSISTENT",
        })
    }
}

/// Consistent only when every run gave the same label.
pub fn classify_consistency(labels: &[SentimentLabel]) -> Result<ConsistencyLabel, EvaluationError> {
    let (&first, rest) = labels.split_first().ok_or(EvaluationError::EmptyLabels)?;
    Ok(if rest.iter().all(|&l| l == first) { ConsistencyLabel::of(first) } else { ConsistencyLabel::Inconsistent })
}

pub fn consistency_map(matrix: &RunMatrix) -> Result<BTreeMap<String, ConsistencyLabel>, EvaluationError> {
    matrix.rows().map(|(id, row)| classify_consistency(row).map(|c| (id.to_string(), c))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub positive: u64,
    pub negative: u64,
    pub neutral: u64,
    pub inconsistent: u64,
    pub total: u64,
}

impl StageCounts {
    pub fn new(positive: u64, negative: u64, neutral: u64, inconsistent: u64) -> Self {
        Self { positive, negative, neutral, inconsistent, total: positive + negative + neutral + inconsistent }
    }

    pub fn from_array(c: [u64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.positive, self.negative, self.neutral, self.inconsistent]
    }

    pub fn get(&self, label: ConsistencyLabel) -> u64 {
        self.as_array()[label.index()]
    }

    pub fn check(&self) -> Result<(), EvaluationError> {
        if self.as_array().iter().sum::<u64>() != self.total {
            return Err(EvaluationError::InconsistentCounts(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Consistency counts over the reviews in `stage_set`.
pub fn stage_counts(matrix: &RunMatrix, stage_set: &BTreeSet<String>) -> Result<StageCounts, EvaluationError> {
    let labels = consistency_map(matrix)?;
    counts_from_labels(&labels, stage_set)
}

pub fn counts_from_labels(
    labels: &BTreeMap<String, ConsistencyLabel>,
    stage_set: &BTreeSet<String>,
) -> Result<StageCounts, EvaluationError> {
    let mut c = [0u64; 4];
    for id in stage_set {
        let l = labels.get(id).ok_or_else(|| EvaluationError::UnknownReview(id.clone()))?;
        c[l.index()] += 1;
    }
    Ok(StageCounts::from_array(c))
}

/// How a review moved between DIRECT (row) and SSAS (column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellCategory {
    /// Same label under both methods.
    Stable,
    /// Inconsistent under DIRECT, consistent under SSAS.
    Gained,
    /// Consistent under DIRECT, inconsistent under SSAS.
    Lost,
    /// Consistent under both, with different labels.
    Flipped,
}

pub fn cell_category(direct: ConsistencyLabel, ssas: ConsistencyLabel) -> CellCategory {
    match (direct.is_consistent(), ssas.is_consistent()) {
        _ if direct == ssas => CellCategory::Stable,
        (false, true) => CellCategory::Gained,
        (true, false) => CellCategory::Lost,
        _ => CellCategory::Flipped,
    }
}

/// Rows are DIRECT labels, columns SSAS labels, both in
/// [`ConsistencyLabel::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub cells: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn row_sums(&self) -> StageCounts {
        StageCounts::from_array(self.cells.map(|row| row.iter().sum()))
    }

    pub fn column_sums(&self) -> StageCounts {
        StageCounts::from_array(std::array::from_fn(|j| self.cells.iter().map(|row| row[j]).sum()))
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn category_totals(&self) -> BTreeMap<&'static str, u64> {
        let mut out = BTreeMap::new();
        for (i, d) in ConsistencyLabel::ALL.into_iter().enumerate() {
            for (j, s) in ConsistencyLabel::ALL.into_iter().enumerate() {
                let key = match cell_category(d, s) {
                    CellCategory::Stable => "stable",
                    CellCategory::Gained => "gained",
                    CellCategory::Lost => "lost",
                    CellCategory::Flipped => "flipped",
                };
                *out.entry(key).or_default() += self.cells[i][j];
            }
        }
        out
    }
}

pub fn confusion(
    direct: &BTreeMap<String, ConsistencyLabel>,
    ssas: &BTreeMap<String, ConsistencyLabel>,
    stage_set: &BTreeSet<String>,
) -> Result<ConfusionMatrix, EvaluationError> {
    let mut m = ConfusionMatrix::default();
    for id in stage_set {
        let d = direct.get(id).ok_or_else(|| EvaluationError::UnknownReview(id.clone()))?;
        let s = ssas.get(id).ok_or_else(|| EvaluationError::UnknownReview(id.clone()))?;
        m.cells[d.index()][s.index()] += 1;
    }
    Ok(m)
}

/// Sum of absolute per-category count differences, as a percentage of the
/// stage total.
pub fn net_consistency<T: Quantity>(direct: &StageCounts, ssas: &StageCounts) -> Result<T, EvaluationError> {
    direct.check()?;
    ssas.check()?;
    if direct.total != ssas.total {
        return Err(EvaluationError::TotalMismatch { direct: direct.total, ssas: ssas.total });
    }
    if direct.total == 0 {
        return Err(EvaluationError::EmptyStage);
    }
    let diff: u64 = direct.as_array().iter().zip(ssas.as_array()).map(|(d, s)| d.abs_diff(s)).sum();
    Ok(T::from_count(diff) * T::from_count(100) / T::from_count(direct.total))
}

/// Share of the original datapoints a stage removed, in percent.
pub fn data_conditioning<T: Quantity>(original_total: u64, stage_total: u64) -> Result<T, EvaluationError> {
    if original_total == 0 {
        return Err(EvaluationError::ZeroOriginal);
    }
    if stage_total > original_total {
        return Err(EvaluationError::StageExceedsOriginal { original: original_total, stage: stage_total });
    }
    Ok(T::from_count(original_total - stage_total) * T::from_count(100) / T::from_count(original_total))
}

pub fn total_improvement<T: Quantity>(net: T, conditioning: T) -> Result<T, EvaluationError> {
    if net < T::zero() || conditioning < T::zero() {
        return Err(EvaluationError::NegativeComponent);
    }
    Ok(net + conditioning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use SentimentLabel::*;

    #[test]
    fn classification() {
        assert_eq!(classify_consistency(&[Positive; 10]).unwrap(), ConsistencyLabel::ConsistentPositive);
        let mut nine = vec![Positive; 9];
        nine.push(Negative);
        assert_eq!(classify_consistency(&nine).unwrap(), ConsistencyLabel::Inconsistent);
        assert_eq!(classify_consistency(&[]), Err(EvaluationError::EmptyLabels));
    }

    #[test]
    fn net_consistency_examples() {
        let d = StageCounts::new(84_938, 43_279, 7_634, 19_894);
        let s = StageCounts::new(86_861, 44_122, 7_125, 17_637);
        let v: f64 = net_consistency(&d, &s).unwrap();
        assert!((v - 3.551_959_934_5).abs() < 1e-9);
        let exact: Ratio<i64> = net_consistency(&d, &s).unwrap();
        assert_eq!(exact, Ratio::new(553_200, 155_745));
        assert_eq!(net_consistency::<f64>(&d, &d).unwrap(), 0.0);
        let small = net_consistency::<f64>(&StageCounts::new(5, 3, 1, 1), &StageCounts::new(6, 3, 0, 1)).unwrap();
        assert_eq!(small, 20.0);
        assert!(matches!(
            net_consistency::<f64>(&d, &StageCounts::new(1, 0, 0, 0)),
            Err(EvaluationError::TotalMismatch { .. })
        ));
    }

    #[test]
    fn conditioning_examples() {
        let a: f64 = data_conditioning(155_745, 149_823).unwrap();
        let b: f64 = data_conditioning(155_745, 116_102).unwrap();
        assert!((a - 3.802_369_257).abs() < 1e-8);
        assert!((b - 25.453_786_638).abs() < 1e-8);
        assert_eq!(data_conditioning::<f64>(10, 10).unwrap(), 0.0);
        assert!(data_conditioning::<f64>(10, 11).is_err());
        assert!(data_conditioning::<f64>(0, 0).is_err());
    }

    #[test]
    fn total_examples() {
        assert!((total_improvement(3.46f64, 3.80).unwrap() - 7.26).abs() < 1e-12);
        assert!((total_improvement(2.55f64, 25.45).unwrap() - 28.00).abs() < 1e-12);
        assert_eq!(total_improvement(0.0f64, 0.0).unwrap(), 0.0);
        assert!(total_improvement(-1.0f64, 0.0).is_err());
    }

    #[test]
    fn confusion_marginals_and_categories() {
        let d: BTreeMap<String, ConsistencyLabel> = [
            ("a", ConsistencyLabel::ConsistentPositive),
            ("b", ConsistencyLabel::Inconsistent),
            ("c", ConsistencyLabel::ConsistentNegative),
            ("d", ConsistencyLabel::ConsistentNeutral),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let mut s = d.clone();
        s.insert("b".into(), ConsistencyLabel::ConsistentPositive);
        s.insert("c".into(), ConsistencyLabel::Inconsistent);
        s.insert("d".into(), ConsistencyLabel::ConsistentPositive);
        let set: BTreeSet<String> = d.keys().cloned().collect();
        let m = confusion(&d, &s, &set).unwrap();
        assert_eq!(m.row_sums(), counts_from_labels(&d, &set).unwrap());
        assert_eq!(m.column_sums(), counts_from_labels(&s, &set).unwrap());
        let cats = m.category_totals();
        assert_eq!((cats["stable"], cats["gained"], cats["lost"], cats["flipped"]), (1, 1, 1, 1));
        let unknown: BTreeSet<String> = ["zz".to_string()].into();
        assert!(confusion(&d, &s, &unknown).is_err());
    }

    #[test]
    fn empty_stage_set_counts_zero() {
        let m = RunMatrix::new(crate::inference::Method::Direct, vec!["a".into()], vec![vec![Positive]]).unwrap();
        assert_eq!(stage_counts(&m, &BTreeSet::new()).unwrap(), StageCounts::default());
    }
}
