use std::collections::HashMap;

use rayon::prelude::*;

use super::features::cosine_from_parts;
use super::{
    Cluster, FeatureProvider, FeatureVector, Hierarchy, HierarchyAssignment, HierarchyConfig, HierarchyError, NodeId,
    Story, TermFrequency, Theme, UNCLASSIFIED,
};
use crate::corpus::Corpus;
use crate::scalar::Real;

/// Anything that can turn a corpus into a taxonomy plus one assignment per
/// review (in corpus order).
pub trait HierarchyBuilder<T: Real> {
    fn build(
        &self,
        corpus: &Corpus,
        config: &HierarchyConfig,
    ) -> Result<(Hierarchy<T>, Vec<HierarchyAssignment>), HierarchyError>;
}

/// Threshold single-linkage grouping, applied top-down: themes over the whole
/// corpus, stories within each theme, clusters within each story.
///
/// Two items share a group when a chain of pairs with cosine similarity at or
/// above the level threshold connects them. Groups under `min_group_size` and
/// groups beyond the per-level fan-out cap go to the `-1` node. Ids are handed
/// out by descending size, ties to the group holding the smallest review id.
/// The result does not depend on input order, so `config.seed` is unused.
#[derive(Debug, Clone, Default)]
pub struct AgglomerativeBuilder<P = TermFrequency> {
    provider: P,
}

impl<P> AgglomerativeBuilder<P> {
    pub fn new(provider: P) -> Self {
        Self { provider }
    }
}

pub fn build_hierarchy<T: Real>(
    corpus: &Corpus,
    config: &HierarchyConfig,
) -> Result<(Hierarchy<T>, Vec<HierarchyAssignment>), HierarchyError> {
    AgglomerativeBuilder::new(TermFrequency).build(corpus, config)
}

struct Level<'a, T> {
    ids: &'a [&'a str],
    features: &'a [FeatureVector<T>],
    profile_terms: usize,
    min_size: usize,
}

impl<T: Real, P: FeatureProvider<T>> HierarchyBuilder<T> for AgglomerativeBuilder<P> {
    fn build(
        &self,
        corpus: &Corpus,
        config: &HierarchyConfig,
    ) -> Result<(Hierarchy<T>, Vec<HierarchyAssignment>), HierarchyError> {
        if corpus.is_empty() {
            return Err(HierarchyError::EmptyCorpus);
        }
        config.validate()?;
        let reviews = corpus.reviews();
        let features: Vec<FeatureVector<T>> = reviews.par_iter().map(|r| self.provider.features(&r.text)).collect();
        let ids: Vec<&str> = reviews.iter().map(|r| r.id.as_str()).collect();
        let level = Level {
            ids: &ids,
            features: &features,
            profile_terms: config.profile_terms,
            min_size: config.min_group_size,
        };

        let all: Vec<usize> = (0..reviews.len()).collect();
        let (groups, rest) = level.group(&all, config.theme_threshold, config.max_themes);
        let mut themes = Vec::with_capacity(groups.len() + 1);
        if !rest.is_empty() {
            let cluster = level.cluster(UNCLASSIFIED, rest);
            let story = level.story(UNCLASSIFIED, vec![cluster]);
            themes.push(level.theme(UNCLASSIFIED, vec![story]));
        }
        let classified: Vec<Theme<T>> = groups
            .into_par_iter()
            .enumerate()
            .map(|(tid, members)| {
                let (groups, rest) = level.group(&members, config.story_threshold, config.max_stories_per_theme);
                let mut stories = Vec::with_capacity(groups.len() + 1);
                if !rest.is_empty() {
                    stories.push(level.story(UNCLASSIFIED, vec![level.cluster(UNCLASSIFIED, rest)]));
                }
                for (sid, members) in groups.into_iter().enumerate() {
                    let (groups, rest) = level.group(&members, config.cluster_threshold, config.max_clusters_per_story);
                    let mut clusters = Vec::with_capacity(groups.len() + 1);
                    if !rest.is_empty() {
                        clusters.push(level.cluster(UNCLASSIFIED, rest));
                    }
                    clusters.extend(
                        groups.into_iter().enumerate().map(|(cid, members)| level.cluster(cid as NodeId, members)),
                    );
                    stories.push(level.story(sid as NodeId, clusters));
                }
                level.theme(tid as NodeId, stories)
            })
            .collect();
        themes.extend(classified);

        let hierarchy = Hierarchy { themes };
        let mut by_id: HashMap<String, HierarchyAssignment> =
            hierarchy.assignments().into_iter().map(|a| (a.review_id.clone(), a)).collect();
        let assignments =
            ids.iter().map(|id| by_id.remove(*id).expect("every review is placed in exactly one cluster")).collect();
        Ok((hierarchy, assignments))
    }
}

impl<T: Real> Level<'_, T> {
    /// Splits `members` into ranked groups and the leftover `-1` set. Every
    /// returned list is in ascending corpus order.
    fn group(&self, members: &[usize], threshold: f64, cap: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
        let n = members.len();
        let mut uf = UnionFind::new(n);
        if threshold <= 0.0 {
            for i in 1..n {
                uf.union(0, i);
            }
        } else {
            let tau = T::from_config(threshold);
            let mut postings: HashMap<&str, Vec<usize>> = HashMap::new();
            for (local, &global) in members.iter().enumerate() {
                for term in self.features[global].terms() {
                    postings.entry(term).or_default().push(local);
                }
            }
            let norms: Vec<T> = members.iter().map(|&g| self.features[g].norm_sq()).collect();
            let edges: Vec<(usize, usize)> = (0..n)
                .into_par_iter()
                .flat_map_iter(|i| {
                    let mut candidates: Vec<usize> = self.features[members[i]]
                        .terms()
                        .flat_map(|t| postings[t].iter().copied().filter(|&j| j > i))
                        .collect();
                    candidates.sort_unstable();
                    candidates.dedup();
                    let fi = &self.features[members[i]];
                    candidates
                        .into_iter()
                        .filter(|&j| cosine_from_parts(fi.dot(&self.features[members[j]]), norms[i], norms[j]) >= tau)
                        .map(move |j| (i, j))
                        .collect::<Vec<_>>()
                })
                .collect();
            for (i, j) in edges {
                uf.union(i, j);
            }
        }

        let mut components: HashMap<usize, Vec<usize>> = HashMap::new();
        for (local, &member) in members.iter().enumerate() {
            components.entry(uf.find(local)).or_default().push(member);
        }
        let mut groups: Vec<Vec<usize>> = components.into_values().collect();
        let smallest_id = |g: &Vec<usize>| g.iter().map(|&i| self.ids[i]).min().unwrap_or("");
        groups.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| smallest_id(a).cmp(smallest_id(b))));

        let mut kept = Vec::new();
        let mut rest = Vec::new();
        for g in groups {
            if g.len() >= self.min_size && kept.len() < cap {
                kept.push(g);
            } else {
                rest.extend(g);
            }
        }
        rest.sort_unstable();
        (kept, rest)
    }

    fn centroid(&self, members: &[usize]) -> FeatureVector<T> {
        FeatureVector::mean(members.iter().map(|&i| &self.features[i]))
    }

    fn cluster(&self, id: NodeId, members: Vec<usize>) -> Cluster<T> {
        let centroid = self.centroid(&members);
        Cluster {
            id,
            keyword_profile: centroid.top_k(self.profile_terms),
            centroid,
            member_ids: members.iter().map(|&i| self.ids[i].to_string()).collect(),
        }
    }

    fn story(&self, id: NodeId, clusters: Vec<Cluster<T>>) -> Story<T> {
        let members = self.members_of(clusters.iter());
        let centroid = self.centroid(&members);
        Story { id, keyword_profile: centroid.top_k(self.profile_terms), centroid, clusters }
    }

    fn theme(&self, id: NodeId, stories: Vec<Story<T>>) -> Theme<T> {
        let members = self.members_of(stories.iter().flat_map(|s| s.clusters.iter()));
        let centroid = self.centroid(&members);
        Theme { id, keyword_profile: centroid.top_k(self.profile_terms), centroid, stories }
    }

    fn members_of<'c>(&self, clusters: impl Iterator<Item = &'c Cluster<T>>) -> Vec<usize>
    where
        T: 'c,
    {
        let position: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut members: Vec<usize> =
            clusters.flat_map(|c| c.member_ids.iter().map(|id| position[id.as_str()])).collect();
        members.sort_unstable();
        members
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}
