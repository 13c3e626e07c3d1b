//! Per-entity activity metrics and robustness-scenario segmentation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Quarter};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum CharacterizeError {
    #[error("corpus has no entities")]
    NoEntities,
    #[error("review `{0}` has no quarter assigned")]
    MissingQuarter(String),
    #[error("entity `{0}` has no activity record")]
    UncoveredEntity(String),
    #[error("unknown filter value `{0}`")]
    UnknownFilter(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VolumeBucket {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistributionBucket {
    #[serde(rename = "PERSISTENT_100")]
    Persistent,
    #[serde(rename = "INTERMITTENT_51_99")]
    Intermittent,
    #[serde(rename = "SPARSE_0_50")]
    Sparse,
}

impl DistributionBucket {
    /// Bucket for `active` of `total` quarters, decided in integers.
    pub fn of(active: u32, total: u32) -> Self {
        if active >= total {
            DistributionBucket::Persistent
        } else if 2 * u64::from(active) > u64::from(total) {
            DistributionBucket::Intermittent
        } else {
            DistributionBucket::Sparse
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EntityActivity<T> {
    pub entity_id: String,
    pub review_count: u64,
    /// Review count scaled so the busiest entity sits at 100.
    pub normalized_volume: T,
    pub volume_bucket: VolumeBucket,
    pub active_quarters: u32,
    pub total_quarters: u32,
    pub distribution_fraction: T,
    pub distribution_bucket: DistributionBucket,
}

/// One activity record per entity, in entity-id order.
///
/// `total_quarters` is the span of the whole dataset, first to last quarter
/// inclusive. Volume buckets compare `count * n > sum(count)` so the strict
/// mean comparison is exact and independent of the normalization.
pub fn compute_entity_activity<T: Real>(corpus: &Corpus) -> Result<Vec<EntityActivity<T>>, CharacterizeError> {
    if corpus.entity_index().is_empty() {
        return Err(CharacterizeError::NoEntities);
    }
    let mut quarters_by_entity: BTreeMap<&str, Vec<Quarter>> = BTreeMap::new();
    let mut lo: Option<Quarter> = None;
    let mut hi: Option<Quarter> = None;
    for review in corpus.reviews() {
        let q = review.quarter.ok_or_else(|| CharacterizeError::MissingQuarter(review.id.clone()))?;
        lo = Some(lo.map_or(q, |l| l.min(q)));
        hi = Some(hi.map_or(q, |h| h.max(q)));
        quarters_by_entity.entry(&review.entity_id).or_default().push(q);
    }
    let (lo, hi) = (lo.unwrap(), hi.unwrap());
    let total_quarters = (hi.ordinal() - lo.ordinal() + 1) as u32;

    let counts: Vec<(&str, u64)> =
        corpus.entity_index().iter().map(|(entity, ids)| (entity.as_str(), ids.len() as u64)).collect();
    let n = counts.len() as u128;
    let sum: u128 = counts.iter().map(|&(_, c)| u128::from(c)).sum();
    let max = counts.iter().map(|&(_, c)| c).max().unwrap_or(0);
    let hundred = T::from_config(100.0);

    Ok(counts
        .into_iter()
        .map(|(entity, count)| {
            let mut quarters = quarters_by_entity.remove(entity).unwrap_or_default();
            quarters.sort_unstable();
            quarters.dedup();
            let active = quarters.len() as u32;
            EntityActivity {
                entity_id: entity.to_string(),
                review_count: count,
                normalized_volume: T::from_len(count as usize) / T::from_len(max as usize) * hundred,
                volume_bucket: if u128::from(count) * n > sum { VolumeBucket::High } else { VolumeBucket::Low },
                active_quarters: active,
                total_quarters,
                distribution_fraction: T::from_len(active as usize) / T::from_len(total_quarters as usize),
                distribution_bucket: DistributionBucket::of(active, total_quarters),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeFilter {
    All,
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistributionFilter {
    #[serde(rename = "all")]
    All,
    #[serde(rename = "100")]
    Persistent,
    #[serde(rename = "51-99")]
    Intermittent,
    #[serde(rename = "0-50")]
    Sparse,
}

impl FromStr for VolumeFilter {
    type Err = CharacterizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(VolumeFilter::All),
            "high" => Ok(VolumeFilter::High),
            "low" => Ok(VolumeFilter::Low),
            _ => Err(CharacterizeError::UnknownFilter(s.to_string())),
        }
    }
}

impl FromStr for DistributionFilter {
    type Err = CharacterizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().trim_end_matches('%') {
            "all" => Ok(DistributionFilter::All),
            "100" | "persistent" => Ok(DistributionFilter::Persistent),
            "51-99" | "intermittent" => Ok(DistributionFilter::Intermittent),
            "0-50" | "sparse" => Ok(DistributionFilter::Sparse),
            _ => Err(CharacterizeError::UnknownFilter(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioFilter {
    pub volume: VolumeFilter,
    pub distribution: DistributionFilter,
}

impl ScenarioFilter {
    pub const BASE: ScenarioFilter =
        ScenarioFilter { volume: VolumeFilter::All, distribution: DistributionFilter::All };

    pub fn new(volume: VolumeFilter, distribution: DistributionFilter) -> Self {
        Self { volume, distribution }
    }

    pub fn is_base(&self) -> bool {
        *self == Self::BASE
    }

    pub fn matches<T>(&self, activity: &EntityActivity<T>) -> bool {
        let volume = match self.volume {
            VolumeFilter::All => true,
            VolumeFilter::High => activity.volume_bucket == VolumeBucket::High,
            VolumeFilter::Low => activity.volume_bucket == VolumeBucket::Low,
        };
        let distribution = match self.distribution {
            DistributionFilter::All => true,
            DistributionFilter::Persistent => activity.distribution_bucket == DistributionBucket::Persistent,
            DistributionFilter::Intermittent => activity.distribution_bucket == DistributionBucket::Intermittent,
            DistributionFilter::Sparse => activity.distribution_bucket == DistributionBucket::Sparse,
        };
        volume && distribution
    }
}

/// The base case and the six volume × distribution robustness checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Base,
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
}

impl Scenario {
    pub const ALL: [Scenario; 7] =
        [Scenario::Base, Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4, Scenario::S5, Scenario::S6];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Base => "base",
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
            Scenario::S4 => "s4",
            Scenario::S5 => "s5",
            Scenario::S6 => "s6",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Base => "Base",
            Scenario::S1 => "Scenario 1",
            Scenario::S2 => "Scenario 2",
            Scenario::S3 => "Scenario 3",
            Scenario::S4 => "Scenario 4",
            Scenario::S5 => "Scenario 5",
            Scenario::S6 => "Scenario 6",
        }
    }

    pub fn filter(self) -> ScenarioFilter {
        use DistributionFilter as D;
        use VolumeFilter as V;
        let (volume, distribution) = match self {
            Scenario::Base => (V::All, D::All),
            Scenario::S1 => (V::High, D::Persistent),
            Scenario::S2 => (V::High, D::Intermittent),
            Scenario::S3 => (V::High, D::Sparse),
            Scenario::S4 => (V::Low, D::Persistent),
            Scenario::S5 => (V::Low, D::Intermittent),
            // Low volume; some tables label this row "median".
            Scenario::S6 => (V::Low, D::Sparse),
        };
        ScenarioFilter::new(volume, distribution)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = CharacterizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace("scenario", "s").replace([' ', '_'], "");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.id() == key)
            .ok_or_else(|| CharacterizeError::UnknownFilter(s.to_string()))
    }
}

/// Reviews whose entity matches both bucket predicates, in corpus order.
pub fn segment<T>(
    corpus: &Corpus,
    activity: &[EntityActivity<T>],
    filter: ScenarioFilter,
) -> Result<Corpus, CharacterizeError> {
    let by_entity: HashMap<&str, &EntityActivity<T>> = activity.iter().map(|a| (a.entity_id.as_str(), a)).collect();
    let mut keep = HashMap::with_capacity(corpus.entity_index().len());
    for entity in corpus.entity_index().keys() {
        let a = by_entity.get(entity.as_str()).ok_or_else(|| CharacterizeError::UncoveredEntity(entity.clone()))?;
        keep.insert(entity.as_str(), filter.matches(a));
    }
    Ok(corpus.subset(|r| keep[r.entity_id.as_str()]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationStats<T> {
    pub target_share: T,
    /// Smallest number of top entities whose volume reaches `target_share`.
    pub entities_needed: usize,
    pub entity_fraction: T,
    pub total_entities: usize,
    pub total_reviews: u64,
}

/// How many of the busiest entities it takes to cover `target_share` of all
/// reviews.
pub fn concentration_stats<T: Real>(activity: &[EntityActivity<T>], target_share: T) -> ConcentrationStats<T> {
    let counts = sorted_counts(activity);
    let total: u64 = counts.iter().sum();
    let goal = target_share * T::from_len(total as usize);
    let mut cumulative = 0u64;
    let mut needed = counts.len();
    for (i, c) in counts.iter().enumerate() {
        cumulative += c;
        if T::from_len(cumulative as usize) >= goal {
            needed = i + 1;
            break;
        }
    }
    if counts.is_empty() {
        needed = 0;
    }
    ConcentrationStats {
        target_share,
        entities_needed: needed,
        entity_fraction: if counts.is_empty() { T::zero() } else { T::from_len(needed) / T::from_len(counts.len()) },
        total_entities: counts.len(),
        total_reviews: total,
    }
}

/// Share of all reviews held by the top `entity_fraction` of entities
/// (rounded up to a whole entity).
pub fn top_share<T: Real>(activity: &[EntityActivity<T>], entity_fraction: T) -> T {
    let counts = sorted_counts(activity);
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return T::zero();
    }
    let k = (entity_fraction * T::from_len(counts.len())).ceil();
    let k = k.to_usize().unwrap_or(0).min(counts.len());
    let top: u64 = counts[..k].iter().sum();
    T::from_len(top as usize) / T::from_len(total as usize)
}

fn sorted_counts<T>(activity: &[EntityActivity<T>]) -> Vec<u64> {
    let mut counts: Vec<u64> = activity.iter().map(|a| a.review_count).collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts
}

pub fn write_activity_csv<T: Real, W: Write>(activity: &[EntityActivity<T>], out: W) -> Result<(), CharacterizeError> {
    let mut wtr = csv::Writer::from_writer(out);
    for a in activity {
        wtr.serialize(a)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_activity_csv<T: Real, R: Read>(input: R) -> Result<Vec<EntityActivity<T>>, CharacterizeError> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize().map(|r| r.map_err(CharacterizeError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{assign_quarters, Review};

    fn corpus(rows: &[(&str, &str, &str)]) -> Corpus {
        let reviews = rows.iter().map(|(id, entity, ts)| Review::new(*id, *entity, "text", *ts)).collect();
        assign_quarters(Corpus::new("t", reviews).unwrap()).unwrap()
    }

    #[test]
    fn single_entity_is_low_volume() {
        let c = corpus(&[("a", "e", "2020-01-01"), ("b", "e", "2020-02-01")]);
        let act = compute_entity_activity::<f64>(&c).unwrap();
        assert_eq!(act.len(), 1);
        assert_eq!(act[0].normalized_volume, 100.0);
        assert_eq!(act[0].volume_bucket, VolumeBucket::Low);
        assert_eq!(act[0].distribution_bucket, DistributionBucket::Persistent);
    }

    #[test]
    fn six_of_fourteen_quarters_is_sparse() {
        let mut rows = vec![("x0".to_string(), "other", "2020-01-01".to_string())];
        rows.push(("x1".into(), "other", "2023-05-23".into()));
        for (i, month) in [1, 4, 7, 10].iter().enumerate() {
            rows.push((format!("a{i}"), "e", format!("2020-{month:02}-15")));
        }
        rows.push(("a4".into(), "e", "2021-01-15".into()));
        rows.push(("a5".into(), "e", "2021-04-15".into()));
        let rows: Vec<(&str, &str, &str)> = rows.iter().map(|(a, b, c)| (a.as_str(), *b, c.as_str())).collect();
        let act = compute_entity_activity::<f64>(&corpus(&rows)).unwrap();
        let e = act.iter().find(|a| a.entity_id == "e").unwrap();
        assert_eq!((e.active_quarters, e.total_quarters), (6, 14));
        assert!((e.distribution_fraction - 0.428_571_428_6).abs() < 1e-9);
        assert_eq!(e.distribution_bucket, DistributionBucket::Sparse);
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(DistributionBucket::of(14, 14), DistributionBucket::Persistent);
        assert_eq!(DistributionBucket::of(8, 14), DistributionBucket::Intermittent);
        assert_eq!(DistributionBucket::of(7, 14), DistributionBucket::Sparse);
        assert_eq!(DistributionBucket::of(0, 14), DistributionBucket::Sparse);
    }

    #[test]
    fn segment_two_entities() {
        let c = corpus(&[
            ("a1", "busy", "2020-01-01"),
            ("a2", "busy", "2020-04-01"),
            ("a3", "busy", "2020-07-01"),
            ("a4", "busy", "2020-10-01"),
            ("b1", "quiet", "2020-01-01"),
        ]);
        let act = compute_entity_activity::<f64>(&c).unwrap();
        let high = segment(&c, &act, Scenario::S1.filter()).unwrap();
        assert_eq!(high.ids().collect::<Vec<_>>(), vec!["a1", "a2", "a3", "a4"]);
        assert_eq!(segment(&c, &act, ScenarioFilter::BASE).unwrap(), c);
        assert!(segment(&c, &act, Scenario::S4.filter()).unwrap().is_empty());
        assert_eq!(segment(&c, &act, Scenario::S6.filter()).unwrap().len(), 1);
    }

    #[test]
    fn concentration_degenerate_and_uniform() {
        let mk = |id: &str, n: u64| EntityActivity::<f64> {
            entity_id: id.into(),
            review_count: n,
            normalized_volume: 0.0,
            volume_bucket: VolumeBucket::Low,
            active_quarters: 1,
            total_quarters: 1,
            distribution_fraction: 1.0,
            distribution_bucket: DistributionBucket::Persistent,
        };
        let uniform: Vec<_> = (0..10).map(|i| mk(&i.to_string(), 7)).collect();
        let s = concentration_stats(&uniform, 0.5);
        assert_eq!((s.entities_needed, s.entity_fraction), (5, 0.5));
        assert_eq!(top_share(&uniform, 0.5), 0.5);

        let one = vec![mk("a", 10)];
        let s = concentration_stats(&one, 1.0);
        assert_eq!((s.entities_needed, s.entity_fraction), (1, 1.0));
    }

    #[test]
    fn activity_csv_round_trip() {
        let c = corpus(&[("a", "e1", "2020-01-01"), ("b", "e2", "2021-01-01"), ("c", "e2", "2021-03-01")]);
        let act = compute_entity_activity::<f64>(&c).unwrap();
        let mut buf = Vec::new();
        write_activity_csv(&act, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("entity_id,review_count,normalized_volume,volume_bucket"));
        assert!(text.contains("HIGH") && text.contains("SPARSE_0_50"));
        assert_eq!(read_activity_csv::<f64, _>(&buf[..]).unwrap(), act);
    }

    #[test]
    fn filter_parsing() {
        assert_eq!("51-99".parse::<DistributionFilter>().unwrap(), DistributionFilter::Intermittent);
        assert_eq!("100%".parse::<DistributionFilter>().unwrap(), DistributionFilter::Persistent);
        assert_eq!("Scenario 6".parse::<Scenario>().unwrap(), Scenario::S6);
        assert_eq!("base".parse::<Scenario>().unwrap(), Scenario::Base);
        assert!("medium".parse::<VolumeFilter>().is_err());
    }
}
