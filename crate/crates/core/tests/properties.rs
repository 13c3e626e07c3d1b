use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use proptest::prelude::*;
use ssas_core::characterize::{
    compute_entity_activity, segment, DistributionBucket, DistributionFilter, ScenarioFilter, VolumeBucket,
    VolumeFilter,
};
use ssas_core::context::{
    build_summaries, count_tokens, rebuild_from_clusters, ExtractiveSummarizer, Level, SummaryBudgets,
};
use ssas_core::corpus::{assign_quarters, ingest, quarters_spanned, Quarter};
use ssas_core::evaluation::{confusion, counts_from_labels, data_conditioning, net_consistency, ConsistencyLabel};
use ssas_core::hierarchy::ClusterKey;
use ssas_core::hierarchy::{build_hierarchy, path_counts, UNCLASSIFIED};
use ssas_core::inference::{build_prompt, flip_probability};
use ssas_core::scoring::{flag_outliers, gate_tallies, score_corpus, ClusterTally, StageSets};
use ssas_core::{Corpus, HierarchyConfig, Method, Review, Schema};

const VOCAB: &[&str] = &[
    "battery", "charge", "screen", "bright", "pizza", "cheese", "plot", "ending", "staff", "friendly", "price",
    "refund", "sound", "bass", "delivery", "late",
];

fn date(offset: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 1, 1).unwrap() + Duration::days(offset)
}

/// (entity, day offset, word indices) per review.
fn rows() -> impl Strategy<Value = Vec<(u8, i64, Vec<usize>)>> {
    prop::collection::vec((0u8..6, 0i64..1500, prop::collection::vec(0..VOCAB.len(), 1..6)), 1..40)
}

fn corpus_from(rows: &[(u8, i64, Vec<usize>)]) -> Corpus {
    let reviews = rows
        .iter()
        .enumerate()
        .map(|(i, (e, d, words))| {
            let text: Vec<&str> = words.iter().map(|&w| VOCAB[w]).collect();
            Review::new(format!("r{i:03}"), format!("e{e}"), text.join(" ") + ".", date(*d).to_string())
        })
        .collect();
    assign_quarters(Corpus::new("p", reviews).unwrap()).unwrap()
}

fn label(i: u8) -> ConsistencyLabel {
    ConsistencyLabel::ALL[i as usize % 4]
}

proptest! {
    #[test]
    fn quarter_count_equals_intersecting_quarters(a in 0i64..4000, len in 0i64..1200) {
        let (from, to) = (date(a), date(a + len));
        let brute: BTreeSet<Quarter> = (0..=len).map(|d| Quarter::of(date(a + d))).collect();
        prop_assert_eq!(quarters_spanned(from, to) as usize, brute.len());
    }

    #[test]
    fn ingestion_is_idempotent(rows in rows()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.jsonl");
        corpus_from(&rows).save(&path).unwrap();
        let a = ingest(&path, Schema::Generic).unwrap();
        let b = ingest(&path, Schema::Generic).unwrap();
        prop_assert_eq!(a.corpus.reviews(), b.corpus.reviews());
        prop_assert_eq!(a.corpus.len(), rows.len());
    }

    #[test]
    fn segments_partition_the_corpus(rows in rows()) {
        let corpus = corpus_from(&rows);
        let activity = compute_entity_activity::<f64>(&corpus).unwrap();
        let ids = |v, d| -> Vec<String> {
            segment(&corpus, &activity, ScenarioFilter::new(v, d)).unwrap().ids().map(str::to_string).collect()
        };
        let all: BTreeSet<String> = corpus.ids().map(str::to_string).collect();
        for parts in [
            vec![(VolumeFilter::High, DistributionFilter::All), (VolumeFilter::Low, DistributionFilter::All)],
            vec![
                (VolumeFilter::All, DistributionFilter::Persistent),
                (VolumeFilter::All, DistributionFilter::Intermittent),
                (VolumeFilter::All, DistributionFilter::Sparse),
            ],
        ] {
            let mut union = BTreeSet::new();
            let mut n = 0;
            for (v, d) in parts {
                let s = ids(v, d);
                n += s.len();
                union.extend(s);
            }
            prop_assert_eq!(n, all.len());
            prop_assert_eq!(&union, &all);
        }
    }

    #[test]
    fn buckets_are_scale_free(rows in rows(), k in 2usize..4) {
        let corpus = corpus_from(&rows);
        let scaled: Vec<_> = (0..k).flat_map(|_| rows.iter().cloned()).collect();
        let buckets = |c: &Corpus| -> Vec<(String, VolumeBucket, DistributionBucket)> {
            compute_entity_activity::<f64>(c)
                .unwrap()
                .into_iter()
                .map(|a| (a.entity_id, a.volume_bucket, a.distribution_bucket))
                .collect()
        };
        prop_assert_eq!(buckets(&corpus), buckets(&corpus_from(&scaled)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hierarchy_is_deterministic_and_covers_corpus(rows in rows()) {
        let corpus = corpus_from(&rows);
        let cfg = HierarchyConfig::default();
        let (h, assignments) = build_hierarchy::<f64>(&corpus, &cfg).unwrap();
        let (h2, _) = build_hierarchy::<f64>(&corpus, &cfg).unwrap();
        prop_assert_eq!(h.to_json().unwrap(), h2.to_json().unwrap());
        prop_assert_eq!(assignments.len(), corpus.len());
        prop_assert_eq!(h.member_count(), corpus.len());
        let counts = path_counts(&assignments);
        for theme in &h.themes {
            for story in &theme.stories {
                for cluster in &story.clusters {
                    let key = ClusterKey { theme: theme.id, story: story.id, cluster: cluster.id };
                    prop_assert_eq!(counts.get(&key).copied().unwrap_or(0), cluster.member_ids.len());
                }
            }
        }
    }

    #[test]
    fn raising_theme_threshold_never_shrinks_unclassified(rows in rows(), lo in 0.0f64..0.9, step in 0.0f64..0.5) {
        let corpus = corpus_from(&rows);
        let unclassified = |theme: f64| {
            let cfg = HierarchyConfig {
                theme_threshold: theme,
                story_threshold: theme.max(0.35),
                cluster_threshold: theme.max(0.55),
                ..HierarchyConfig::default()
            };
            let (_, a) = build_hierarchy::<f64>(&corpus, &cfg).unwrap();
            a.iter().filter(|a| a.theme_id == UNCLASSIFIED).count()
        };
        prop_assert!(unclassified(lo) <= unclassified((lo + step).min(1.0)));
    }

    #[test]
    fn summaries_are_layered_and_within_budget(rows in rows(), budget in 3usize..30) {
        let corpus = corpus_from(&rows);
        let (h, _) = build_hierarchy::<f64>(&corpus, &HierarchyConfig::default()).unwrap();
        let budgets = SummaryBudgets { cluster: budget, story: budget + 5, theme: budget + 10 };
        let set = build_summaries(&h, &corpus, budgets, &ExtractiveSummarizer).unwrap();
        prop_assert_eq!(&set, &build_summaries(&h, &corpus, budgets, &ExtractiveSummarizer).unwrap());
        for s in set.summaries.values() {
            prop_assert!(count_tokens(&s.text) <= s.token_budget);
            match s.level {
                Level::Cluster => {
                    let c = h.cluster(s.node.theme, s.node.story.unwrap(), s.node.cluster.unwrap()).unwrap();
                    prop_assert_eq!(&s.source_ids, &c.member_ids);
                }
                Level::Story | Level::Theme => {
                    // Only child summaries feed a story or theme summary.
                    for src in &s.source_ids {
                        let child: ssas_core::NodeKey = src.parse().unwrap();
                        prop_assert_eq!(child.parent(), Some(s.node));
                        prop_assert!(set.get(&child).is_some());
                    }
                }
            }
        }
        let clusters: Vec<_> = set.level(Level::Cluster).cloned().collect();
        prop_assert_eq!(rebuild_from_clusters(&h, clusters, budgets, &ExtractiveSummarizer).unwrap(), set);
    }

    #[test]
    fn snr_components_add_up_and_stages_nest(rows in rows(), threshold in 0.0f64..100.0) {
        let corpus = corpus_from(&rows);
        let (h, assignments) = build_hierarchy::<f64>(&corpus, &HierarchyConfig::default()).unwrap();
        let scores = score_corpus(&corpus, &assignments, &h).unwrap();
        for s in &scores {
            prop_assert!((s.total - (s.s_cluster + s.s_story + s.s_theme)).abs() <= 1e-12);
        }
        let Ok(gate) = ssas_core::scoring::gate_clusters(&assignments, &scores, threshold) else {
            return Ok(());
        };
        let outliers = flag_outliers(&assignments, &gate);
        let sets = StageSets::build(&corpus, &assignments, &outliers);
        prop_assert!(sets.without_irrelevant.is_subset(&sets.all));
        prop_assert!(sets.without_irrelevant_outlier.is_subset(&sets.without_irrelevant));
        let irrelevant: BTreeSet<String> =
            assignments.iter().filter(|a| a.is_irrelevant()).map(|a| a.review_id.clone()).collect();
        let dropped: BTreeSet<String> = sets.all.difference(&sets.without_irrelevant).cloned().collect();
        prop_assert_eq!(dropped, irrelevant);
        let dropped: BTreeSet<String> =
            sets.without_irrelevant.difference(&sets.without_irrelevant_outlier).cloned().collect();
        let expected: BTreeSet<String> = outliers.intersection(&sets.without_irrelevant).cloned().collect();
        prop_assert_eq!(dropped, expected);
        let cond = |s: &BTreeSet<String>| data_conditioning::<f64>(sets.all.len() as u64, s.len() as u64).unwrap();
        prop_assert!(cond(&sets.all) <= cond(&sets.without_irrelevant));
        prop_assert!(cond(&sets.without_irrelevant) <= cond(&sets.without_irrelevant_outlier));
    }
}

fn tallies() -> impl Strategy<Value = Vec<(u64, f64)>> {
    prop::collection::vec((0u64..5000, 0.0f64..500.0), 1..30)
}

fn to_tallies(raw: &[(u64, f64)], volume_scale: u64) -> Vec<ClusterTally<f64>> {
    raw.iter()
        .enumerate()
        .map(|(i, &(v, s))| ClusterTally {
            key: ClusterKey { theme: 0, story: 0, cluster: i as i32 },
            volume: v * volume_scale,
            cumulative_snr: s,
        })
        .collect()
}

proptest! {
    #[test]
    fn gate_is_disjunctive_scale_free_and_monotone(raw in tallies(), t in 0.0f64..100.0, dt in 0.0f64..50.0, k in 1u64..1000) {
        let gate = gate_tallies(&to_tallies(&raw, 1), t).unwrap();
        let max_v = raw.iter().map(|r| r.0).max().unwrap() as f64;
        let max_s = raw.iter().map(|r| r.1).fold(0.0, f64::max);
        for (g, &(v, s)) in gate.iter().zip(&raw) {
            let nv = if max_v > 0.0 { v as f64 / max_v * 100.0 } else { 0.0 };
            let ns = if max_s > 0.0 { s / max_s * 100.0 } else { 0.0 };
            prop_assert_eq!(g.retained, nv >= t || ns >= t);
        }
        let flags = |g: &[ssas_core::GateStats64]| g.iter().map(|x| x.retained).collect::<Vec<_>>();
        prop_assert_eq!(flags(&gate_tallies(&to_tallies(&raw, k), t).unwrap()), flags(&gate));
        let tighter = gate_tallies(&to_tallies(&raw, 1), t + dt).unwrap();
        for (a, b) in gate.iter().zip(&tighter) {
            prop_assert!(!b.retained || a.retained);
        }
    }

    #[test]
    fn confusion_and_net_consistency_identities(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..200)) {
        let direct: BTreeMap<String, ConsistencyLabel> =
            pairs.iter().enumerate().map(|(i, p)| (format!("r{i}"), label(p.0))).collect();
        let ssas: BTreeMap<String, ConsistencyLabel> =
            pairs.iter().enumerate().map(|(i, p)| (format!("r{i}"), label(p.1))).collect();
        let set: BTreeSet<String> = direct.keys().cloned().collect();
        let m = confusion(&direct, &ssas, &set).unwrap();
        let d = counts_from_labels(&direct, &set).unwrap();
        let s = counts_from_labels(&ssas, &set).unwrap();
        prop_assert_eq!(m.row_sums(), d);
        prop_assert_eq!(m.column_sums(), s);
        let mut brute = [[0u64; 4]; 4];
        for (a, b) in &pairs {
            brute[*a as usize][*b as usize] += 1;
        }
        prop_assert_eq!(m.cells, brute);
        prop_assert_eq!(net_consistency::<f64>(&d, &s).unwrap(), net_consistency::<f64>(&s, &d).unwrap());
        let diff: u64 = d.as_array().iter().zip(s.as_array()).map(|(x, y)| x.abs_diff(y)).sum();
        prop_assert_eq!(diff % 2, 0);
    }

    #[test]
    fn context_never_raises_flip_probability(noise in 0.0f64..=1.0, signal in 0.0f64..=1.0) {
        prop_assert!(flip_probability(noise, signal) <= flip_probability(noise, 0.0));
    }

    #[test]
    fn ssas_prompt_embeds_review_text_verbatim(text in "[a-zA-Z ,.!?'\u{e9}]{1,80}") {
        let review = Review::new("r1", "e", text.clone(), "2020-01-01");
        let summary = |level, node| ssas_core::ContextSummary {
            level,
            node,
            node_id: 0,
            text: "context".into(),
            source_ids: vec![],
            token_budget: 10,
        };
        let c = summary(Level::Cluster, ssas_core::NodeKey::cluster(0, 0, 0));
        let s = summary(Level::Story, ssas_core::NodeKey::story(0, 0));
        let t = summary(Level::Theme, ssas_core::NodeKey::theme(0));
        let direct = build_prompt(&review, Method::Direct, None).unwrap();
        let ssas = build_prompt(&review, Method::Ssas, Some([&c, &s, &t])).unwrap();
        prop_assert_eq!(&direct.text, &text);
        prop_assert_eq!(&ssas.text, &text);
    }
}
