use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::backend::{BackendError, BackendInfo, Completion, LlmBackend, Task};
use super::{Method, SentimentLabel};

/// `base_noise × (1 − context_signal)`, both clamped to `[0, 1]`.
pub fn flip_probability(base_noise: f64, context_signal: f64) -> f64 {
    base_noise.clamp(0.0, 1.0) * (1.0 - context_signal.clamp(0.0, 1.0))
}

/// Deterministic stand-in for a sentiment model.
///
/// Every review has a fixed latent label derived from the seed and its id.
/// Each call returns that label, or with probability
/// [`flip_probability`] one of the other two. DIRECT calls see a context
/// signal of 0; SSAS calls use the per-review signal supplied through
/// [`MockBackend::with_signals`]. Draws depend only on
/// `(seed, review, run, method)`, so retries and scheduling never change a
/// label.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    base_noise: f64,
    signals: HashMap<String, f64>,
    failure_rate: f64,
}

impl MockBackend {
    pub fn new(seed: u64, base_noise: f64) -> Self {
        Self { seed, base_noise: base_noise.clamp(0.0, 1.0), signals: HashMap::new(), failure_rate: 0.0 }
    }

    /// Per-review context signal in `[0, 1]` used for SSAS calls.
    pub fn with_signals(mut self, signals: HashMap<String, f64>) -> Self {
        self.signals = signals;
        self
    }

    /// Fraction of attempts that fail with a transient error.
    pub fn with_failure_rate(mut self, rate: f64) -> Self {
        self.failure_rate = rate.clamp(0.0, 1.0);
        self
    }

    pub fn latent_label(&self, review_id: &str) -> SentimentLabel {
        let n = self.hash(&[b"latent", review_id.as_bytes()]);
        SentimentLabel::ALL[(n % 3) as usize]
    }

    pub fn context_signal(&self, method: Method, review_id: &str) -> f64 {
        match method {
            Method::Direct => 0.0,
            Method::Ssas => self.signals.get(review_id).copied().unwrap_or(0.0).clamp(0.0, 1.0),
        }
    }

    pub fn flip_probability(&self, method: Method, review_id: &str) -> f64 {
        flip_probability(self.base_noise, self.context_signal(method, review_id))
    }

    /// The label a call for this cell returns.
    pub fn label_for(&self, method: Method, review_id: &str, run: usize) -> SentimentLabel {
        let latent = self.latent_label(review_id);
        let p = self.flip_probability(method, review_id);
        if p <= 0.0 {
            return latent;
        }
        let mut rng = self.rng(&[b"label", review_id.as_bytes(), &run.to_le_bytes(), method.id().as_bytes()]);
        if rng.random::<f64>() >= p {
            return latent;
        }
        let others: Vec<SentimentLabel> = SentimentLabel::ALL.into_iter().filter(|&l| l != latent).collect();
        others[rng.random_range(0..others.len())]
    }

    fn hash(&self, parts: &[&[u8]]) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }

    fn rng(&self, parts: &[&[u8]]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.hash(parts))
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, request: &Completion<'_>) -> Result<String, BackendError> {
        match request.task {
            Task::Sentiment { method, review_id, run } => {
                if self.failure_rate > 0.0 {
                    let mut rng = self.rng(&[
                        b"fail",
                        review_id.as_bytes(),
                        &run.to_le_bytes(),
                        method.id().as_bytes(),
                        &request.attempt.to_le_bytes(),
                    ]);
                    if rng.random::<f64>() < self.failure_rate {
                        return Err(BackendError::Transient("simulated failure".into()));
                    }
                }
                let label = self.label_for(method, review_id, run);
                let mut word = label.name().to_string();
                word[..1].make_ascii_uppercase();
                Ok(format!("Sentiment: {word}"))
            }
            // Echo the source material after the instruction header.
            Task::Summary { .. } => {
                Ok(request.prompt.split_once("\n\n").map_or(request.prompt, |(_, body)| body).to_string())
            }
        }
    }

    fn info(&self) -> BackendInfo {
        BackendInfo {
            kind: "mock".into(),
            model: "mock".into(),
            settings: serde_json::json!({
                "seed": self.seed,
                "base_noise": self.base_noise,
                "failure_rate": self.failure_rate,
            }),
        }
    }
}
