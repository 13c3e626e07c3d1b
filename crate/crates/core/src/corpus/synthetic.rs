//! Seeded synthetic review corpora for tests, demos and benchmarks.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{assign_quarters, Corpus, Review};

/// Each topic is a shared vocabulary plus aspect vocabularies.
const TOPICS: &[(&[&str], &[&[&str]])] = &[
    (
        &["phone", "device"],
        &[
            &["battery", "charge", "charger", "power", "hours", "drains"],
            &["screen", "display", "bright", "pixels", "resolution", "glare"],
            &["camera", "photos", "lens", "zoom", "focus", "flash"],
        ],
    ),
    (
        &["order", "seller"],
        &[
            &["delivery", "shipping", "arrived", "courier", "late", "tracking"],
            &["price", "value", "refund", "discount", "money", "cost"],
        ],
    ),
    (
        &["restaurant", "food"],
        &[
            &["pizza", "crust", "cheese", "sauce", "slice", "toppings"],
            &["staff", "service", "waiter", "friendly", "rude", "table"],
            &["coffee", "espresso", "latte", "beans", "barista", "mug"],
        ],
    ),
    (
        &["book", "story"],
        &[
            &["plot", "ending", "twist", "pacing", "chapter", "climax"],
            &["characters", "heroine", "villain", "dialogue", "romance", "protagonist"],
        ],
    ),
    (&["headphones", "audio"], &[&["sound", "bass", "volume", "treble", "noise", "cancelling"]]),
];

const OPINIONS: &[&str] =
    &["great", "terrible", "amazing", "awful", "decent", "excellent", "poor", "solid", "disappointing", "perfect"];

const SYLLABLES: &[&str] = &["ka", "zu", "mor", "pli", "vex", "tan", "qo", "rin", "dax", "lum", "sef", "bry"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub reviews: usize,
    pub entities: usize,
    /// Share of reviews made of unrelated pseudo-words.
    pub noise_share: f64,
    pub start: NaiveDate,
    pub days: i64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            reviews: 200,
            entities: 20,
            noise_share: 0.1,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            days: 1238,
        }
    }
}

/// Builds a corpus with quarters assigned. Entity volumes are skewed so the
/// first entities receive most reviews.
pub fn synthetic_corpus(name: &str, spec: &SyntheticSpec, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities = spec.entities.max(1);
    let mut reviews = Vec::with_capacity(spec.reviews);
    for i in 0..spec.reviews {
        // Squaring a uniform draw concentrates mass on low entity indices.
        let u: f64 = rng.random();
        let entity = ((u * u) * entities as f64) as usize % entities;
        let date = spec.start + Duration::days(rng.random_range(0..spec.days.max(1)));
        let text = if rng.random::<f64>() < spec.noise_share {
            let gibberish: Vec<String> = (0..5).map(|_| pseudo_word(&mut rng)).collect();
            format!("{}.", gibberish.join(" "))
        } else {
            let (shared, aspects) = TOPICS[(entity + rng.random_range(0..2)) % TOPICS.len()];
            let aspect = aspects[rng.random_range(0..aspects.len())];
            let opinion = OPINIONS[rng.random_range(0..OPINIONS.len())];
            format!("The {} {}. {}", words(&mut rng, shared, 1), opinion, sentence(&mut rng, aspect, 4))
        };
        reviews.push(Review::new(
            format!("r{i:05}"),
            format!("e{entity:03}"),
            text,
            date.format("%Y-%m-%d").to_string(),
        ));
    }
    let corpus = Corpus::new(name, reviews).expect("synthetic ids are unique and texts non-empty");
    assign_quarters(corpus).expect("synthetic timestamps parse")
}

fn words(rng: &mut ChaCha8Rng, pool: &[&str], n: usize) -> String {
    (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect::<Vec<_>>().join(" ")
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    (0..4).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect()
}

fn sentence(rng: &mut ChaCha8Rng, pool: &[&str], n: usize) -> String {
    let mut s = words(rng, pool, n);
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s.push('.');
    s
}
