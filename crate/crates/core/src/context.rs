//! Bottom-up summary-of-summaries: cluster, then story, then theme context.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Review};
use crate::hierarchy::{tokenize, FeatureVector, Hierarchy, HierarchyAssignment, NodeId};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error("{0} summary needs at least one source")]
    EmptySources(Level),
    #[error("expected {expected} children, got a {found} summary ({node})")]
    LevelMismatch { expected: Level, found: Level, node: NodeKey },
    #[error("{child} is not a child of {parent}")]
    ForeignChild { child: NodeKey, parent: NodeKey },
    #[error("token budget must be positive")]
    ZeroBudget,
    #[error("review `{0}` is listed in the hierarchy but missing from the corpus")]
    MissingReview(String),
    #[error("no summary for {0}")]
    MissingSummary(NodeKey),
    #[error("summarizer failed for {node}: {message}")]
    Summarizer { node: NodeKey, message: String },
    #[error("invalid node key `{0}`")]
    BadKey(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Level {
    Cluster,
    Story,
    Theme,
}

impl Level {
    fn child(self) -> Option<Level> {
        match self {
            Level::Cluster => None,
            Level::Story => Some(Level::Cluster),
            Level::Theme => Some(Level::Story),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Cluster => "CLUSTER",
            Level::Story => "STORY",
            Level::Theme => "THEME",
        })
    }
}

/// Path of a node in the taxonomy, rendered as `t0`, `t0/s1` or `t0/s1/c2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKey {
    pub theme: NodeId,
    pub story: Option<NodeId>,
    pub cluster: Option<NodeId>,
}

impl NodeKey {
    pub fn theme(theme: NodeId) -> Self {
        Self { theme, story: None, cluster: None }
    }

    pub fn story(theme: NodeId, story: NodeId) -> Self {
        Self { theme, story: Some(story), cluster: None }
    }

    pub fn cluster(theme: NodeId, story: NodeId, cluster: NodeId) -> Self {
        Self { theme, story: Some(story), cluster: Some(cluster) }
    }

    pub fn level(&self) -> Level {
        match (self.story, self.cluster) {
            (_, Some(_)) => Level::Cluster,
            (Some(_), None) => Level::Story,
            _ => Level::Theme,
        }
    }

    /// The id of the node itself (the last path segment).
    pub fn node_id(&self) -> NodeId {
        self.cluster.or(self.story).unwrap_or(self.theme)
    }

    pub fn parent(&self) -> Option<NodeKey> {
        match (self.story, self.cluster) {
            (Some(s), Some(_)) => Some(NodeKey::story(self.theme, s)),
            (Some(_), None) => Some(NodeKey::theme(self.theme)),
            _ => None,
        }
    }

    /// Cluster, story and theme keys for a review's assignment.
    pub fn path_of(a: &HierarchyAssignment) -> [NodeKey; 3] {
        [
            NodeKey::cluster(a.theme_id, a.story_id, a.cluster_id),
            NodeKey::story(a.theme_id, a.story_id),
            NodeKey::theme(a.theme_id),
        ]
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.theme)?;
        if let Some(s) = self.story {
            write!(f, "/s{s}")?;
        }
        if let Some(c) = self.cluster {
            write!(f, "/c{c}")?;
        }
        Ok(())
    }
}

impl FromStr for NodeKey {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ContextError::BadKey(s.to_string());
        let mut parts = s.split('/');
        let mut segment = |prefix: char| -> Result<Option<NodeId>, ContextError> {
            match parts.next() {
                None => Ok(None),
                Some(p) => p.strip_prefix(prefix).and_then(|n| n.parse().ok()).map(Some).ok_or_else(bad),
            }
        };
        let theme = segment('t')?.ok_or_else(bad)?;
        let story = segment('s')?;
        let cluster = segment('c')?;
        if (story.is_none() && cluster.is_some()) || parts.next().is_some() {
            return Err(bad());
        }
        Ok(NodeKey { theme, story, cluster })
    }
}

impl Serialize for NodeKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub level: Level,
    pub node: NodeKey,
    pub node_id: NodeId,
    pub text: String,
    /// Review ids for clusters, child node keys otherwise.
    pub source_ids: Vec<String>,
    pub token_budget: usize,
}

/// Whitespace token count, the unit for every budget.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// First `budget` whitespace tokens of `text`.
pub fn truncate_tokens(text: &str, budget: usize) -> String {
    text.split_whitespace().take(budget).collect::<Vec<_>>().join(" ")
}

/// Splits on `.`, `!` or `?` followed by whitespace, and on line breaks.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\n' || c == '\r' {
            flush_sentence(&mut current, &mut out);
            continue;
        }
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            flush_sentence(&mut current, &mut out);
        }
    }
    flush_sentence(&mut current, &mut out);
    out
}

fn flush_sentence(current: &mut String, out: &mut Vec<String>) {
    let s = current.split_whitespace().collect::<Vec<_>>().join(" ");
    if !s.is_empty() {
        out.push(s);
    }
    current.clear();
}

/// One input text to a summarizer.
#[derive(Debug, Clone, Copy)]
pub struct Source<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

#[derive(Debug, Clone)]
pub struct SummaryRequest<'a, T> {
    pub level: Level,
    pub node: NodeKey,
    pub sources: Vec<Source<'a>>,
    pub profile: &'a FeatureVector<T>,
    pub budget: usize,
}

pub trait Summarizer<T>: Send + Sync {
    /// Produces text within `request.budget` whitespace tokens.
    fn summarize(&self, request: &SummaryRequest<'_, T>) -> Result<String, String>;
}

/// Keyword-weighted sentence extraction.
///
/// Sentences score the summed profile weight of their tokens and are taken
/// best first (earlier position on ties), skipping any that would overflow the
/// budget. Above the cluster level each child first contributes its own best
/// sentence, so every child is represented when the budget allows. Output
/// keeps the original sentence order.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveSummarizer;

#[derive(Debug, Clone)]
pub struct ScoredSentence<T> {
    pub position: usize,
    pub source: usize,
    pub text: String,
    pub tokens: usize,
    pub score: T,
}

impl ExtractiveSummarizer {
    /// Deduplicated sentences in source order with their scores.
    pub fn score_sentences<T: Real>(sources: &[Source<'_>], profile: &FeatureVector<T>) -> Vec<ScoredSentence<T>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (source, src) in sources.iter().enumerate() {
            for text in split_sentences(src.text) {
                if !seen.insert(text.to_lowercase()) {
                    continue;
                }
                let score = tokenize(&text).iter().map(|t| profile.get(t)).sum();
                out.push(ScoredSentence { position: out.len(), source, tokens: count_tokens(&text), text, score });
            }
        }
        out
    }

    pub fn select<T: Real>(sentences: &[ScoredSentence<T>], budget: usize, cover_sources: bool) -> Vec<usize> {
        let mut order: Vec<usize> = (0..sentences.len()).collect();
        order.sort_by(|&a, &b| {
            sentences[b]
                .score
                .partial_cmp(&sentences[a].score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(sentences[a].position.cmp(&sentences[b].position))
        });
        let mut chosen = vec![false; sentences.len()];
        let mut used = 0usize;
        let mut take = |i: usize, chosen: &mut Vec<bool>| {
            if !chosen[i] && used + sentences[i].tokens <= budget {
                chosen[i] = true;
                used += sentences[i].tokens;
            }
        };
        if cover_sources {
            let mut covered = HashSet::new();
            for &i in &order {
                if covered.insert(sentences[i].source) {
                    take(i, &mut chosen);
                }
            }
        }
        for &i in &order {
            take(i, &mut chosen);
        }
        (0..sentences.len()).filter(|&i| chosen[i]).collect()
    }
}

impl<T: Real> Summarizer<T> for ExtractiveSummarizer {
    fn summarize(&self, request: &SummaryRequest<'_, T>) -> Result<String, String> {
        let sentences = Self::score_sentences(&request.sources, request.profile);
        let picked = Self::select(&sentences, request.budget, request.level != Level::Cluster);
        if picked.is_empty() {
            // Even the shortest sentence overflows: cut the best one.
            let best = Self::select(&sentences, usize::MAX, false);
            return Ok(best
                .iter()
                .map(|&i| &sentences[i])
                .max_by(|a, b| {
                    a.score.partial_cmp(&b.score).unwrap_or(std::cmp::Ordering::Equal).then(b.position.cmp(&a.position))
                })
                .map(|s| truncate_tokens(&s.text, request.budget))
                .unwrap_or_default());
        }
        Ok(picked.iter().map(|&i| sentences[i].text.as_str()).collect::<Vec<_>>().join(" "))
    }
}

fn run_summarizer<T: Real>(
    summarizer: &dyn Summarizer<T>,
    request: SummaryRequest<'_, T>,
    source_ids: Vec<String>,
) -> Result<ContextSummary, ContextError> {
    if request.budget == 0 {
        return Err(ContextError::ZeroBudget);
    }
    if request.sources.is_empty() {
        return Err(ContextError::EmptySources(request.level));
    }
    let text =
        summarizer.summarize(&request).map_err(|message| ContextError::Summarizer { node: request.node, message })?;
    Ok(ContextSummary {
        level: request.level,
        node: request.node,
        node_id: request.node.node_id(),
        text: truncate_tokens(&text, request.budget),
        source_ids,
        token_budget: request.budget,
    })
}

pub fn summarize_cluster<T: Real>(
    node: NodeKey,
    members: &[&Review],
    profile: &FeatureVector<T>,
    budget: usize,
    summarizer: &dyn Summarizer<T>,
) -> Result<ContextSummary, ContextError> {
    let request = SummaryRequest {
        level: Level::Cluster,
        node,
        sources: members.iter().map(|r| Source { id: &r.id, text: &r.text }).collect(),
        profile,
        budget,
    };
    run_summarizer(summarizer, request, members.iter().map(|r| r.id.clone()).collect())
}

fn summarize_children<T: Real>(
    level: Level,
    node: NodeKey,
    children: &[ContextSummary],
    profile: &FeatureVector<T>,
    budget: usize,
    summarizer: &dyn Summarizer<T>,
) -> Result<ContextSummary, ContextError> {
    let expected = level.child().expect("only story and theme summaries have children");
    for child in children {
        if child.level != expected {
            return Err(ContextError::LevelMismatch { expected, found: child.level, node: child.node });
        }
        if child.node.parent() != Some(node) {
            return Err(ContextError::ForeignChild { child: child.node, parent: node });
        }
    }
    let keys: Vec<String> = children.iter().map(|c| c.node.to_string()).collect();
    let request = SummaryRequest {
        level,
        node,
        sources: children.iter().zip(&keys).map(|(c, k)| Source { id: k, text: &c.text }).collect(),
        profile,
        budget,
    };
    run_summarizer(summarizer, request, keys.clone())
}

/// Summary of cluster summaries. Every child must be a cluster under `node`.
pub fn summarize_story<T: Real>(
    node: NodeKey,
    children: &[ContextSummary],
    profile: &FeatureVector<T>,
    budget: usize,
    summarizer: &dyn Summarizer<T>,
) -> Result<ContextSummary, ContextError> {
    summarize_children(Level::Story, node, children, profile, budget, summarizer)
}

/// Summary of story summaries. Every child must be a story under `node`.
pub fn summarize_theme<T: Real>(
    node: NodeKey,
    children: &[ContextSummary],
    profile: &FeatureVector<T>,
    budget: usize,
    summarizer: &dyn Summarizer<T>,
) -> Result<ContextSummary, ContextError> {
    summarize_children(Level::Theme, node, children, profile, budget, summarizer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryBudgets {
    pub cluster: usize,
    pub story: usize,
    pub theme: usize,
}

impl Default for SummaryBudgets {
    fn default() -> Self {
        Self { cluster: 120, story: 200, theme: 300 }
    }
}

/// Every node's summary, keyed by node path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SummarySet {
    pub summaries: BTreeMap<NodeKey, ContextSummary>,
}

impl SummarySet {
    pub fn get(&self, key: &NodeKey) -> Option<&ContextSummary> {
        self.summaries.get(key)
    }

    pub fn len(&self) -> usize {
        self.summaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
    }

    pub fn level(&self, level: Level) -> impl Iterator<Item = &ContextSummary> {
        self.summaries.values().filter(move |s| s.level == level)
    }

    /// Cluster, story and theme summaries along a review's path.
    pub fn for_assignment(&self, a: &HierarchyAssignment) -> Result<[&ContextSummary; 3], ContextError> {
        let [c, s, t] = NodeKey::path_of(a);
        let get = |k: NodeKey| self.get(&k).ok_or(ContextError::MissingSummary(k));
        Ok([get(c)?, get(s)?, get(t)?])
    }

    pub fn to_json(&self) -> Result<String, ContextError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ContextError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Builds every cluster summary, then every story, then every theme. Each
/// level runs in parallel and finishes before the next starts.
pub fn build_summaries<T: Real>(
    hierarchy: &Hierarchy<T>,
    corpus: &Corpus,
    budgets: SummaryBudgets,
    summarizer: &dyn Summarizer<T>,
) -> Result<SummarySet, ContextError> {
    let mut jobs = Vec::new();
    for theme in &hierarchy.themes {
        for story in &theme.stories {
            for cluster in &story.clusters {
                jobs.push((NodeKey::cluster(theme.id, story.id, cluster.id), cluster));
            }
        }
    }
    let clusters: Vec<ContextSummary> = jobs
        .par_iter()
        .map(|(key, cluster)| {
            let members = cluster
                .member_ids
                .iter()
                .map(|id| corpus.get(id).ok_or_else(|| ContextError::MissingReview(id.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            summarize_cluster(*key, &members, &cluster.keyword_profile, budgets.cluster, summarizer)
        })
        .collect::<Result<_, _>>()?;
    rebuild_from_clusters(hierarchy, clusters, budgets, summarizer)
}

/// Story and theme summaries recomputed from existing cluster summaries only.
pub fn rebuild_from_clusters<T: Real>(
    hierarchy: &Hierarchy<T>,
    clusters: impl IntoIterator<Item = ContextSummary>,
    budgets: SummaryBudgets,
    summarizer: &dyn Summarizer<T>,
) -> Result<SummarySet, ContextError> {
    let clusters: HashMap<NodeKey, ContextSummary> =
        clusters.into_iter().filter(|s| s.level == Level::Cluster).map(|s| (s.node, s)).collect();
    let child_summaries = |keys: Vec<NodeKey>, pool: &HashMap<NodeKey, ContextSummary>| {
        keys.into_iter()
            .map(|k| pool.get(&k).cloned().ok_or(ContextError::MissingSummary(k)))
            .collect::<Result<Vec<_>, _>>()
    };

    let story_jobs: Vec<_> = hierarchy.themes.iter().flat_map(|t| t.stories.iter().map(move |s| (t.id, s))).collect();
    let stories: HashMap<NodeKey, ContextSummary> = story_jobs
        .par_iter()
        .map(|(tid, story)| {
            let key = NodeKey::story(*tid, story.id);
            let kids = child_summaries(
                story.clusters.iter().map(|c| NodeKey::cluster(*tid, story.id, c.id)).collect(),
                &clusters,
            )?;
            summarize_story(key, &kids, &story.keyword_profile, budgets.story, summarizer).map(|s| (key, s))
        })
        .collect::<Result<_, _>>()?;

    let themes: Vec<ContextSummary> = hierarchy
        .themes
        .par_iter()
        .map(|theme| {
            let key = NodeKey::theme(theme.id);
            let kids =
                child_summaries(theme.stories.iter().map(|s| NodeKey::story(theme.id, s.id)).collect(), &stories)?;
            summarize_theme(key, &kids, &theme.keyword_profile, budgets.theme, summarizer)
        })
        .collect::<Result<_, _>>()?;

    let summaries = clusters.into_values().chain(stories.into_values()).chain(themes).map(|s| (s.node, s)).collect();
    Ok(SummarySet { summaries })
}
