use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

const STOP_WORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.binary_search(&token).is_ok()
}

/// Lowercased alphanumeric tokens with apostrophes dropped
/// (`don't` becomes `dont`). Single-character tokens are discarded.
pub fn raw_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(['\'', '\u{2019}'], "")
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_string)
        .collect()
}

/// Content tokens: [`raw_tokens`] minus stop words. A text made only of stop
/// words keeps its raw tokens so it still has a non-empty vector.
pub fn tokenize(text: &str) -> Vec<String> {
    let raw = raw_tokens(text);
    let content: Vec<String> = raw.iter().filter(|t| !is_stop_word(t)).cloned().collect();
    if content.is_empty() {
        raw
    } else {
        content
    }
}

/// Sparse non-negative term weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Real")]
pub struct FeatureVector<T> {
    weights: BTreeMap<String, T>,
}

impl<T: Real> FeatureVector<T> {
    pub fn new() -> Self {
        Self { weights: BTreeMap::new() }
    }

    /// Drops non-finite and non-positive weights.
    pub fn from_weights(weights: impl IntoIterator<Item = (String, T)>) -> Self {
        Self { weights: weights.into_iter().filter(|(_, w)| w.is_finite() && *w > T::zero()).collect() }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, term: &str) -> T {
        self.weights.get(term).copied().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> {
        self.weights.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    pub fn norm_sq(&self) -> T {
        self.weights.values().map(|&w| w * w).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.weights.iter().filter_map(|(k, &w)| large.weights.get(k).map(|&v| w * v)).sum()
    }

    /// Cosine similarity clamped to `[0, 1]`; zero when either side is empty.
    pub fn cosine(&self, other: &Self) -> T {
        cosine_from_parts(self.dot(other), self.norm_sq(), other.norm_sq())
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (k, &v) in &other.weights {
            let w = self.weights.entry(k.clone()).or_insert_with(T::zero);
            *w = *w + v;
        }
    }

    pub fn scaled(mut self, factor: T) -> Self {
        for w in self.weights.values_mut() {
            *w = *w * factor;
        }
        self
    }

    /// Element-wise mean; empty input gives the empty vector.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a Self>) -> Self
    where
        T: 'a,
    {
        let mut sum = Self::new();
        let mut n = 0usize;
        for v in vectors {
            sum.add_assign(v);
            n += 1;
        }
        if n == 0 {
            return sum;
        }
        sum.scaled(T::one() / T::from_len(n))
    }

    /// The `k` heaviest terms; ties go to the alphabetically first term.
    pub fn top_k(&self, k: usize) -> Self {
        let mut entries: Vec<(&String, &T)> = self.weights.iter().collect();
        entries.sort_by(|a, b| b.1.partial_cmp(a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(b.0)));
        Self { weights: entries.into_iter().take(k).map(|(t, w)| (t.clone(), *w)).collect() }
    }
}

/// `dot / sqrt(|a|² |b|²)`, which is exactly 1 for identical vectors.
pub(crate) fn cosine_from_parts<T: Real>(dot: T, norm_sq_a: T, norm_sq_b: T) -> T {
    let denom = (norm_sq_a * norm_sq_b).sqrt();
    if denom <= T::zero() {
        return T::zero();
    }
    (dot / denom).max(T::zero()).min(T::one())
}

/// Raw term counts over [`tokenize`]d text.
pub fn extract_features<T: Real>(text: &str) -> FeatureVector<T> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for token in tokenize(text) {
        *counts.entry(token).or_default() += 1;
    }
    FeatureVector { weights: counts.into_iter().map(|(t, c)| (t, T::from_len(c))).collect() }
}

/// Maps review text into the vector space the hierarchy is built in.
pub trait FeatureProvider<T>: Send + Sync {
    fn features(&self, text: &str) -> FeatureVector<T>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TermFrequency;

impl<T: Real> FeatureProvider<T> for TermFrequency {
    fn features(&self, text: &str) -> FeatureVector<T> {
        extract_features(text)
    }
}
