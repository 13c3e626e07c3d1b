//! Theme → Story → Cluster taxonomy and per-review level assignments.

mod builder;
mod features;

pub use builder::{build_hierarchy, AgglomerativeBuilder, HierarchyBuilder};
pub use features::{extract_features, raw_tokens, tokenize, FeatureProvider, FeatureVector, TermFrequency};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Review;
use crate::scalar::Real;

/// Node id within its parent; [`UNCLASSIFIED`] marks the catch-all node.
pub type NodeId = i32;

pub const UNCLASSIFIED: NodeId = -1;

#[derive(Debug, thiserror::Error)]
pub enum HierarchyError {
    #[error("cannot build a hierarchy from an empty corpus")]
    EmptyCorpus,
    #[error("invalid hierarchy config: {0}")]
    InvalidConfig(String),
    #[error("malformed hierarchy: {0}")]
    Malformed(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyConfig {
    /// Recorded for provenance; builders that sample may use it.
    pub seed: u64,
    pub theme_threshold: f64,
    pub story_threshold: f64,
    pub cluster_threshold: f64,
    /// Groups smaller than this are folded into the `-1` node.
    pub min_group_size: usize,
    pub max_themes: usize,
    pub max_stories_per_theme: usize,
    pub max_clusters_per_story: usize,
    /// Terms kept in each node's keyword profile.
    pub profile_terms: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            theme_threshold: 0.2,
            story_threshold: 0.35,
            cluster_threshold: 0.55,
            min_group_size: 2,
            max_themes: 50,
            max_stories_per_theme: 10,
            max_clusters_per_story: 25,
            profile_terms: 20,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<(), HierarchyError> {
        for (name, t) in [
            ("theme_threshold", self.theme_threshold),
            ("story_threshold", self.story_threshold),
            ("cluster_threshold", self.cluster_threshold),
        ] {
            if !t.is_finite() || t > 1.0 {
                return Err(HierarchyError::InvalidConfig(format!("{name} must be finite and ≤ 1, got {t}")));
            }
        }
        if self.min_group_size == 0 {
            return Err(HierarchyError::InvalidConfig("min_group_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Cluster<T> {
    pub id: NodeId,
    pub centroid: FeatureVector<T>,
    pub keyword_profile: FeatureVector<T>,
    pub member_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Story<T> {
    pub id: NodeId,
    pub centroid: FeatureVector<T>,
    pub keyword_profile: FeatureVector<T>,
    pub clusters: Vec<Cluster<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Theme<T> {
    pub id: NodeId,
    pub centroid: FeatureVector<T>,
    pub keyword_profile: FeatureVector<T>,
    pub stories: Vec<Story<T>>,
}

impl<T> Story<T> {
    pub fn cluster(&self, id: NodeId) -> Option<&Cluster<T>> {
        self.clusters.iter().find(|c| c.id == id)
    }

    pub fn member_count(&self) -> usize {
        self.clusters.iter().map(|c| c.member_ids.len()).sum()
    }
}

impl<T> Theme<T> {
    pub fn story(&self, id: NodeId) -> Option<&Story<T>> {
        self.stories.iter().find(|s| s.id == id)
    }

    pub fn member_count(&self) -> usize {
        self.stories.iter().map(Story::member_count).sum()
    }
}

/// The built taxonomy. Members live on clusters; every review is a member of
/// exactly one cluster, which may be a `-1` node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Hierarchy<T> {
    pub themes: Vec<Theme<T>>,
}

impl<T: Real> Hierarchy<T> {
    pub fn theme(&self, id: NodeId) -> Option<&Theme<T>> {
        self.themes.iter().find(|t| t.id == id)
    }

    pub fn story(&self, theme: NodeId, story: NodeId) -> Option<&Story<T>> {
        self.theme(theme)?.story(story)
    }

    pub fn cluster(&self, theme: NodeId, story: NodeId, cluster: NodeId) -> Option<&Cluster<T>> {
        self.story(theme, story)?.cluster(cluster)
    }

    pub fn member_count(&self) -> usize {
        self.themes.iter().map(Theme::member_count).sum()
    }

    /// Assignments read back off the cluster member lists, in tree order.
    pub fn assignments(&self) -> Vec<HierarchyAssignment> {
        let mut out = Vec::with_capacity(self.member_count());
        for theme in &self.themes {
            for story in &theme.stories {
                for cluster in &story.clusters {
                    out.extend(cluster.member_ids.iter().map(|id| HierarchyAssignment {
                        review_id: id.clone(),
                        theme_id: theme.id,
                        story_id: story.id,
                        cluster_id: cluster.id,
                    }));
                }
            }
        }
        out
    }

    /// Checks the structural invariants: unique ids per parent, `-1` nesting,
    /// disjoint member sets.
    pub fn validate(&self) -> Result<(), HierarchyError> {
        let bad = |msg: String| Err(HierarchyError::Malformed(msg));
        let mut seen = HashSet::new();
        check_unique(self.themes.iter().map(|t| t.id), "themes")?;
        for theme in &self.themes {
            check_unique(theme.stories.iter().map(|s| s.id), &format!("theme {}", theme.id))?;
            if theme.id == UNCLASSIFIED && theme.stories.iter().any(|s| s.id != UNCLASSIFIED) {
                return bad("theme -1 holds a classified story".into());
            }
            for story in &theme.stories {
                let path = format!("t{}/s{}", theme.id, story.id);
                check_unique(story.clusters.iter().map(|c| c.id), &path)?;
                if story.id == UNCLASSIFIED && story.clusters.iter().any(|c| c.id != UNCLASSIFIED) {
                    return bad(format!("{path} is -1 but holds a classified cluster"));
                }
                for cluster in &story.clusters {
                    for id in &cluster.member_ids {
                        if !seen.insert(id.as_str()) {
                            return bad(format!("review `{id}` belongs to more than one cluster"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, HierarchyError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, HierarchyError> {
        let h: Self = serde_json::from_str(text)?;
        h.validate()?;
        Ok(h)
    }
}

fn check_unique(ids: impl Iterator<Item = NodeId>, parent: &str) -> Result<(), HierarchyError> {
    let mut seen = HashSet::new();
    for id in ids {
        if id < UNCLASSIFIED {
            return Err(HierarchyError::Malformed(format!("{parent}: invalid node id {id}")));
        }
        if !seen.insert(id) {
            return Err(HierarchyError::Malformed(format!("{parent}: duplicate node id {id}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HierarchyAssignment {
    pub review_id: String,
    pub theme_id: NodeId,
    pub story_id: NodeId,
    pub cluster_id: NodeId,
}

impl HierarchyAssignment {
    pub fn unclassified(review_id: impl Into<String>) -> Self {
        Self { review_id: review_id.into(), theme_id: UNCLASSIFIED, story_id: UNCLASSIFIED, cluster_id: UNCLASSIFIED }
    }

    /// Unclassifiable at one or more levels.
    pub fn is_irrelevant(&self) -> bool {
        self.theme_id == UNCLASSIFIED || self.story_id == UNCLASSIFIED || self.cluster_id == UNCLASSIFIED
    }

    pub fn cluster_key(&self) -> ClusterKey {
        ClusterKey { theme: self.theme_id, story: self.story_id, cluster: self.cluster_id }
    }
}

/// Full path of a cluster, since node ids are only unique per parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterKey {
    pub theme: NodeId,
    pub story: NodeId,
    pub cluster: NodeId,
}

impl ClusterKey {
    pub fn is_classified(&self) -> bool {
        self.theme != UNCLASSIFIED && self.story != UNCLASSIFIED && self.cluster != UNCLASSIFIED
    }
}

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}/s{}/c{}", self.theme, self.story, self.cluster)
    }
}

/// Places a review under the most similar node at each level, subject to the
/// level threshold. Ties go to the lowest node id; `-1` nodes never compete.
pub fn assign<T: Real>(review: &Review, hierarchy: &Hierarchy<T>, config: &HierarchyConfig) -> HierarchyAssignment {
    assign_features(&review.id, &extract_features(&review.text), hierarchy, config)
}

pub fn assign_features<T: Real>(
    review_id: &str,
    features: &FeatureVector<T>,
    hierarchy: &Hierarchy<T>,
    config: &HierarchyConfig,
) -> HierarchyAssignment {
    let mut out = HierarchyAssignment::unclassified(review_id);
    let Some(theme) = best(&hierarchy.themes, features, config.theme_threshold, |t| (t.id, &t.centroid)) else {
        return out;
    };
    out.theme_id = theme.id;
    let Some(story) = best(&theme.stories, features, config.story_threshold, |s| (s.id, &s.centroid)) else {
        return out;
    };
    out.story_id = story.id;
    if let Some(cluster) = best(&story.clusters, features, config.cluster_threshold, |c| (c.id, &c.centroid)) {
        out.cluster_id = cluster.id;
    }
    out
}

fn best<'a, N, T: Real>(
    nodes: &'a [N],
    features: &FeatureVector<T>,
    threshold: f64,
    key: impl Fn(&'a N) -> (NodeId, &'a FeatureVector<T>),
) -> Option<&'a N> {
    let threshold = T::from_config(threshold);
    let mut winner: Option<(NodeId, T, &N)> = None;
    for node in nodes {
        let (id, centroid) = key(node);
        if id == UNCLASSIFIED {
            continue;
        }
        let sim = features.cosine(centroid);
        if sim < threshold {
            continue;
        }
        let better = match winner {
            None => true,
            Some((wid, wsim, _)) => sim > wsim || (sim == wsim && id < wid),
        };
        if better {
            winner = Some((id, sim, node));
        }
    }
    winner.map(|(_, _, n)| n)
}

pub fn write_assignments_csv<W: Write>(assignments: &[HierarchyAssignment], out: W) -> Result<(), HierarchyError> {
    let mut wtr = csv::Writer::from_writer(out);
    for a in assignments {
        wtr.serialize(a)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_assignments_csv<R: Read>(input: R) -> Result<Vec<HierarchyAssignment>, HierarchyError> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize().map(|r| r.map_err(HierarchyError::from)).collect()
}

/// Review count per `(theme, story, cluster)` path.
pub fn path_counts(assignments: &[HierarchyAssignment]) -> BTreeMap<ClusterKey, usize> {
    let mut counts = BTreeMap::new();
    for a in assignments {
        *counts.entry(a.cluster_key()).or_default() += 1;
    }
    counts
}
