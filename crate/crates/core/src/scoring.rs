//! Per-review signal-to-noise scores, the cluster gate and refinement stages.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::hierarchy::{
    extract_features, ClusterKey, FeatureVector, Hierarchy, HierarchyAssignment, NodeId, UNCLASSIFIED,
};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("assignment for `{review_id}` points at missing node {path}")]
    DanglingNode { review_id: String, path: String },
    #[error("no assignment for review `{0}`")]
    MissingAssignment(String),
    #[error("no score for review `{0}`")]
    MissingScore(String),
    #[error("no classified clusters to gate")]
    NoClusters,
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SnrScore<T> {
    pub review_id: String,
    pub s_cluster: T,
    pub s_story: T,
    pub s_theme: T,
    pub total: T,
}

impl<T: Real> SnrScore<T> {
    pub fn new(review_id: impl Into<String>, s_cluster: T, s_story: T, s_theme: T) -> Self {
        Self { review_id: review_id.into(), s_cluster, s_story, s_theme, total: s_cluster + s_story + s_theme }
    }
}

/// Cosine alignment of a review with one node centroid.
pub fn component_score<T: Real>(review: &FeatureVector<T>, centroid: &FeatureVector<T>) -> T {
    review.cosine(centroid)
}

/// Sum of cluster, story and theme alignment; a `-1` level contributes 0.
pub fn compute_snr<T: Real>(
    features: &FeatureVector<T>,
    assignment: &HierarchyAssignment,
    hierarchy: &Hierarchy<T>,
) -> Result<SnrScore<T>, ScoringError> {
    let a = assignment;
    let dangling = |path: String| ScoringError::DanglingNode { review_id: a.review_id.clone(), path };
    let zero = T::zero();
    if a.theme_id == UNCLASSIFIED {
        return Ok(SnrScore::new(a.review_id.clone(), zero, zero, zero));
    }
    let theme = hierarchy.theme(a.theme_id).ok_or_else(|| dangling(format!("t{}", a.theme_id)))?;
    let s_theme = component_score(features, &theme.centroid);
    if a.story_id == UNCLASSIFIED {
        return Ok(SnrScore::new(a.review_id.clone(), zero, zero, s_theme));
    }
    let story = theme.story(a.story_id).ok_or_else(|| dangling(format!("t{}/s{}", a.theme_id, a.story_id)))?;
    let s_story = component_score(features, &story.centroid);
    if a.cluster_id == UNCLASSIFIED {
        return Ok(SnrScore::new(a.review_id.clone(), zero, s_story, s_theme));
    }
    let cluster = story.cluster(a.cluster_id).ok_or_else(|| dangling(a.cluster_key().to_string()))?;
    let s_cluster = component_score(features, &cluster.centroid);
    Ok(SnrScore::new(a.review_id.clone(), s_cluster, s_story, s_theme))
}

/// Scores every review in corpus order.
pub fn score_corpus<T: Real>(
    corpus: &Corpus,
    assignments: &[HierarchyAssignment],
    hierarchy: &Hierarchy<T>,
) -> Result<Vec<SnrScore<T>>, ScoringError> {
    let by_id: HashMap<&str, &HierarchyAssignment> = assignments.iter().map(|a| (a.review_id.as_str(), a)).collect();
    corpus
        .reviews()
        .par_iter()
        .map(|r| {
            let a = by_id.get(r.id.as_str()).ok_or_else(|| ScoringError::MissingAssignment(r.id.clone()))?;
            compute_snr(&extract_features(&r.text), a, hierarchy)
        })
        .collect()
}

/// Raw per-cluster aggregates feeding the gate.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTally<T> {
    pub key: ClusterKey,
    pub volume: u64,
    pub cumulative_snr: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ClusterGateStats<T> {
    pub theme: NodeId,
    pub story: NodeId,
    pub cluster: NodeId,
    pub volume: u64,
    pub normalized_volume: T,
    pub cumulative_snr: T,
    pub normalized_snr: T,
    pub retained: bool,
}

impl<T> ClusterGateStats<T> {
    pub fn key(&self) -> ClusterKey {
        ClusterKey { theme: self.theme, story: self.story, cluster: self.cluster }
    }
}

/// Volume and summed SNR per classified cluster, in key order.
pub fn cluster_tallies<T: Real>(
    assignments: &[HierarchyAssignment],
    scores: &[SnrScore<T>],
) -> Result<Vec<ClusterTally<T>>, ScoringError> {
    let totals: HashMap<&str, T> = scores.iter().map(|s| (s.review_id.as_str(), s.total)).collect();
    let mut tallies: BTreeMap<ClusterKey, (u64, T)> = BTreeMap::new();
    for a in assignments {
        let key = a.cluster_key();
        if !key.is_classified() {
            continue;
        }
        let total = *totals.get(a.review_id.as_str()).ok_or_else(|| ScoringError::MissingScore(a.review_id.clone()))?;
        let entry = tallies.entry(key).or_insert((0, T::zero()));
        entry.0 += 1;
        entry.1 = entry.1 + total;
    }
    Ok(tallies
        .into_iter()
        .map(|(key, (volume, cumulative_snr))| ClusterTally { key, volume, cumulative_snr })
        .collect())
}

/// Max-scales volume and cumulative SNR to `[0, 100]` and keeps a cluster
/// when either normalized value reaches `threshold`.
pub fn gate_tallies<T: Real>(
    tallies: &[ClusterTally<T>],
    threshold: T,
) -> Result<Vec<ClusterGateStats<T>>, ScoringError> {
    if tallies.is_empty() {
        return Err(ScoringError::NoClusters);
    }
    let hundred = T::from_config(100.0);
    let max_volume = tallies.iter().map(|t| t.volume).max().unwrap_or(0);
    let max_snr = tallies.iter().map(|t| t.cumulative_snr).fold(T::zero(), T::max);
    let scale = |v: T, max: T| if max > T::zero() { v / max * hundred } else { T::zero() };
    Ok(tallies
        .iter()
        .map(|t| {
            let normalized_volume = scale(T::from_len(t.volume as usize), T::from_len(max_volume as usize));
            let normalized_snr = scale(t.cumulative_snr, max_snr);
            ClusterGateStats {
                theme: t.key.theme,
                story: t.key.story,
                cluster: t.key.cluster,
                volume: t.volume,
                normalized_volume,
                cumulative_snr: t.cumulative_snr,
                normalized_snr,
                retained: normalized_volume >= threshold || normalized_snr >= threshold,
            }
        })
        .collect())
}

pub fn gate_clusters<T: Real>(
    assignments: &[HierarchyAssignment],
    scores: &[SnrScore<T>],
    threshold: T,
) -> Result<Vec<ClusterGateStats<T>>, ScoringError> {
    gate_tallies(&cluster_tallies(assignments, scores)?, threshold)
}

/// Members of clusters the gate pruned.
pub fn flag_outliers<T>(assignments: &[HierarchyAssignment], gate: &[ClusterGateStats<T>]) -> BTreeSet<String> {
    let pruned: BTreeSet<ClusterKey> = gate.iter().filter(|g| !g.retained).map(|g| g.key()).collect();
    assignments.iter().filter(|a| pruned.contains(&a.cluster_key())).map(|a| a.review_id.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RefinementStage {
    All,
    WithoutIrrelevant,
    WithoutIrrelevantOutlier,
}

impl RefinementStage {
    pub const ALL: [RefinementStage; 3] =
        [RefinementStage::All, RefinementStage::WithoutIrrelevant, RefinementStage::WithoutIrrelevantOutlier];

    pub fn label(self) -> &'static str {
        match self {
            RefinementStage::All => "All Data",
            RefinementStage::WithoutIrrelevant => "w/o Irrelevant",
            RefinementStage::WithoutIrrelevantOutlier => "w/o Irrelevant, Outlier",
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            RefinementStage::All => "all",
            RefinementStage::WithoutIrrelevant => "without_irrelevant",
            RefinementStage::WithoutIrrelevantOutlier => "without_irrelevant_outlier",
        }
    }
}

impl fmt::Display for RefinementStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for RefinementStage {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RefinementStage::ALL
            .into_iter()
            .find(|st| st.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| ScoringError::UnknownStage(s.to_string()))
    }
}

/// Review ids kept at `stage`. Reviews without an assignment count as
/// irrelevant.
pub fn stage_filter(
    corpus: &Corpus,
    assignments: &[HierarchyAssignment],
    outliers: &BTreeSet<String>,
    stage: RefinementStage,
) -> BTreeSet<String> {
    let irrelevant: HashMap<&str, bool> =
        assignments.iter().map(|a| (a.review_id.as_str(), a.is_irrelevant())).collect();
    corpus
        .ids()
        .filter(|id| match stage {
            RefinementStage::All => true,
            RefinementStage::WithoutIrrelevant => irrelevant.get(id) == Some(&false),
            RefinementStage::WithoutIrrelevantOutlier => irrelevant.get(id) == Some(&false) && !outliers.contains(*id),
        })
        .map(str::to_string)
        .collect()
}

/// The three nested review-id sets.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageSets {
    pub all: BTreeSet<String>,
    pub without_irrelevant: BTreeSet<String>,
    pub without_irrelevant_outlier: BTreeSet<String>,
}

impl StageSets {
    pub fn build(corpus: &Corpus, assignments: &[HierarchyAssignment], outliers: &BTreeSet<String>) -> Self {
        let f = |stage| stage_filter(corpus, assignments, outliers, stage);
        Self {
            all: f(RefinementStage::All),
            without_irrelevant: f(RefinementStage::WithoutIrrelevant),
            without_irrelevant_outlier: f(RefinementStage::WithoutIrrelevantOutlier),
        }
    }

    pub fn get(&self, stage: RefinementStage) -> &BTreeSet<String> {
        match stage {
            RefinementStage::All => &self.all,
            RefinementStage::WithoutIrrelevant => &self.without_irrelevant,
            RefinementStage::WithoutIrrelevantOutlier => &self.without_irrelevant_outlier,
        }
    }

    /// Restricts every stage to `keep`.
    pub fn restrict(&self, keep: &BTreeSet<String>) -> Self {
        let f = |s: &BTreeSet<String>| s.intersection(keep).cloned().collect();
        Self {
            all: f(&self.all),
            without_irrelevant: f(&self.without_irrelevant),
            without_irrelevant_outlier: f(&self.without_irrelevant_outlier),
        }
    }
}

/// Signal items first, then outliers, then irrelevant items; each tier by
/// descending total, ties by review id.
pub fn rank_order<T: Real>(scores: &[SnrScore<T>], stages: &StageSets) -> Vec<String> {
    let tier = |id: &str| {
        if stages.without_irrelevant_outlier.contains(id) {
            0
        } else if stages.without_irrelevant.contains(id) {
            1
        } else {
            2
        }
    };
    let mut ranked: Vec<&SnrScore<T>> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        tier(&a.review_id)
            .cmp(&tier(&b.review_id))
            .then_with(|| b.total.partial_cmp(&a.total).unwrap_or(std::cmp::Ordering::Equal))
            .then_with(|| a.review_id.cmp(&b.review_id))
    });
    ranked.into_iter().map(|s| s.review_id.clone()).collect()
}

fn write_rows<S: Serialize, W: Write>(rows: impl IntoIterator<Item = S>, out: W) -> Result<(), ScoringError> {
    let mut wtr = csv::Writer::from_writer(out);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn read_rows<S: serde::de::DeserializeOwned, R: Read>(input: R) -> Result<Vec<S>, ScoringError> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(ScoringError::from)).collect()
}

pub fn write_scores_csv<T: Real, W: Write>(scores: &[SnrScore<T>], out: W) -> Result<(), ScoringError> {
    write_rows(scores, out)
}

pub fn read_scores_csv<T: Real, R: Read>(input: R) -> Result<Vec<SnrScore<T>>, ScoringError> {
    read_rows(input)
}

pub fn write_gate_csv<T: Real, W: Write>(gate: &[ClusterGateStats<T>], out: W) -> Result<(), ScoringError> {
    write_rows(gate, out)
}

pub fn read_gate_csv<T: Real, R: Read>(input: R) -> Result<Vec<ClusterGateStats<T>>, ScoringError> {
    read_rows(input)
}

#[derive(Serialize, Deserialize)]
struct OutlierRow {
    review_id: String,
}

pub fn write_outliers_csv<W: Write>(outliers: &BTreeSet<String>, out: W) -> Result<(), ScoringError> {
    write_rows(outliers.iter().map(|id| OutlierRow { review_id: id.clone() }), out)
}

pub fn read_outliers_csv<R: Read>(input: R) -> Result<BTreeSet<String>, ScoringError> {
    Ok(read_rows::<OutlierRow, _>(input)?.into_iter().map(|r| r.review_id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{Cluster, Story, Theme};

    fn fv(terms: &[(&str, f64)]) -> FeatureVector<f64> {
        FeatureVector::from_weights(terms.iter().map(|(t, w)| (t.to_string(), *w)))
    }

    fn assignment(id: &str, t: NodeId, s: NodeId, c: NodeId) -> HierarchyAssignment {
        HierarchyAssignment { review_id: id.into(), theme_id: t, story_id: s, cluster_id: c }
    }

    fn hierarchy() -> Hierarchy<f64> {
        let c = fv(&[("a", 1.0)]);
        Hierarchy {
            themes: vec![Theme {
                id: 0,
                centroid: fv(&[("a", 1.0), ("b", 1.0)]),
                keyword_profile: c.clone(),
                stories: vec![Story {
                    id: 0,
                    centroid: fv(&[("b", 1.0)]),
                    keyword_profile: c.clone(),
                    clusters: vec![Cluster { id: 0, centroid: c.clone(), keyword_profile: c, member_ids: vec![] }],
                }],
            }],
        }
    }

    fn tally(c: NodeId, volume: u64, snr: f64) -> ClusterTally<f64> {
        ClusterTally { key: ClusterKey { theme: 0, story: 0, cluster: c }, volume, cumulative_snr: snr }
    }

    #[test]
    fn component_cases() {
        let ab = fv(&[("a", 1.0), ("b", 1.0)]);
        assert_eq!(component_score(&ab, &ab), 1.0);
        assert_eq!(component_score(&fv(&[("a", 1.0)]), &fv(&[("b", 1.0)])), 0.0);
        assert!((component_score(&ab, &fv(&[("a", 1.0)])) - 0.707_106_781_186_547_5).abs() < 1e-15);
    }

    #[test]
    fn snr_levels() {
        let h = hierarchy();
        let f = fv(&[("a", 1.0)]);
        let full = compute_snr(&f, &assignment("r", 0, 0, 0), &h).unwrap();
        assert_eq!(full.s_cluster, 1.0);
        assert_eq!(full.s_story, 0.0);
        assert!((full.s_theme - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(full.total, full.s_cluster + full.s_story + full.s_theme);

        let none = compute_snr(&f, &HierarchyAssignment::unclassified("r"), &h).unwrap();
        assert_eq!(none.total, 0.0);
        let partial = compute_snr(&f, &assignment("r", 0, 0, -1), &h).unwrap();
        assert_eq!(partial.s_cluster, 0.0);
        assert!(matches!(compute_snr(&f, &assignment("r", 0, 3, 0), &h), Err(ScoringError::DanglingNode { .. })));
    }

    #[test]
    fn snr_sum() {
        let s = SnrScore::new("r", 0.5f64, 0.3, 0.2);
        assert!((s.total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gate_threshold_is_disjunctive() {
        // max volume 2000 and max snr 1000 put these at (0.05, 0.2) and (0.05, 0.05).
        let tallies = [tally(0, 2000, 1000.0), tally(1, 1, 2.0), tally(2, 1, 0.5)];
        let g = gate_tallies(&tallies, 0.1).unwrap();
        assert_eq!(g[0].normalized_volume, 100.0);
        assert!((g[1].normalized_volume - 0.05).abs() < 1e-12 && (g[1].normalized_snr - 0.2).abs() < 1e-12);
        assert_eq!(g.iter().map(|s| s.retained).collect::<Vec<_>>(), vec![true, true, false]);
    }

    #[test]
    fn gate_needs_classified_clusters() {
        let a = [HierarchyAssignment::unclassified("r")];
        let s = [SnrScore::new("r", 0.0, 0.0, 0.0)];
        assert!(matches!(gate_clusters(&a, &s, 0.1), Err(ScoringError::NoClusters)));
    }

    #[test]
    fn outliers_are_members_of_pruned_clusters() {
        let mut assignments: Vec<_> = (0..7).map(|i| assignment(&format!("p{i}"), 0, 0, 1)).collect();
        assignments.push(assignment("k", 0, 0, 0));
        assignments.push(HierarchyAssignment::unclassified("x"));
        let gate = vec![
            ClusterGateStats {
                theme: 0,
                story: 0,
                cluster: 0,
                volume: 1,
                normalized_volume: 100.0,
                cumulative_snr: 1.0,
                normalized_snr: 100.0,
                retained: true,
            },
            ClusterGateStats {
                theme: 0,
                story: 0,
                cluster: 1,
                volume: 7,
                normalized_volume: 0.0,
                cumulative_snr: 0.0,
                normalized_snr: 0.0,
                retained: false,
            },
        ];
        let flagged = flag_outliers(&assignments, &gate);
        assert_eq!(flagged.len(), 7);
        assert!(flagged.iter().all(|id| id.starts_with('p')));
        let all_kept: Vec<_> = gate
            .iter()
            .cloned()
            .map(|mut g| {
                g.retained = true;
                g
            })
            .collect();
        assert!(flag_outliers(&assignments, &all_kept).is_empty());
    }

    #[test]
    fn rank_order_puts_signal_first() {
        let scores = vec![
            SnrScore::new("irrelevant", 0.0, 1.0, 1.5),
            SnrScore::new("low", 0.1, 0.1, 0.2),
            SnrScore::new("high", 1.0, 0.6, 0.5),
            SnrScore::new("outlier", 1.0, 1.0, 1.0),
        ];
        let stages = StageSets {
            all: ["irrelevant", "low", "high", "outlier"].iter().map(|s| s.to_string()).collect(),
            without_irrelevant: ["low", "high", "outlier"].iter().map(|s| s.to_string()).collect(),
            without_irrelevant_outlier: ["low", "high"].iter().map(|s| s.to_string()).collect(),
        };
        assert_eq!(rank_order(&scores, &stages), vec!["high", "low", "outlier", "irrelevant"]);
    }

    #[test]
    fn csv_round_trips() {
        let scores = vec![SnrScore::new("a", 0.25, 0.5, 0.125)];
        let mut buf = Vec::new();
        write_scores_csv(&scores, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("review_id,s_cluster,s_story,s_theme,total\n"));
        assert_eq!(read_scores_csv::<f64, _>(&buf[..]).unwrap(), scores);

        let gate = gate_tallies(&[tally(0, 3, 1.5), tally(4, 1, 0.1)], 0.1).unwrap();
        let mut buf = Vec::new();
        write_gate_csv(&gate, &mut buf).unwrap();
        assert_eq!(read_gate_csv::<f64, _>(&buf[..]).unwrap(), gate);

        let outliers: BTreeSet<String> = ["x".to_string(), "y".to_string()].into();
        let mut buf = Vec::new();
        write_outliers_csv(&outliers, &mut buf).unwrap();
        assert_eq!(read_outliers_csv(&buf[..]).unwrap(), outliers);
    }
}
