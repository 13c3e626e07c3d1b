use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backend::{BackendError, Completion, LlmBackend, Task};
use super::{parse_label, InferenceError, Method, Prompt, RunMatrix, SentimentLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub n_runs: usize,
    /// Retries after the first attempt, for transport and parse failures alike.
    pub max_retries: u32,
    /// Concurrent calls in flight.
    pub in_flight: usize,
    /// Token-bucket rate; `None` means unthrottled.
    pub requests_per_second: Option<f64>,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    /// Completed cells are saved here if the run aborts, and reloaded on the
    /// next attempt.
    #[serde(skip)]
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            n_runs: 10,
            max_retries: 5,
            in_flight: 4,
            requests_per_second: None,
            backoff_base_ms: 250,
            backoff_max_ms: 8_000,
            checkpoint: None,
        }
    }
}

/// Token bucket shared by all workers.
pub struct RateLimiter {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64, burst: usize) -> Self {
        let capacity = burst.max(1) as f64;
        Self { rate: requests_per_second, capacity, state: Mutex::new((capacity, Instant::now())) }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let (tokens, last) = *state;
                let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.rate).min(self.capacity);
                if tokens >= 1.0 {
                    *state = (tokens - 1.0, now);
                    return;
                }
                *state = (tokens, now);
                (1.0 - tokens) / self.rate
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointRow {
    review_id: String,
    run: usize,
    label: SentimentLabel,
}

fn load_checkpoint(
    path: &PathBuf,
    index: &HashMap<&str, usize>,
    n_runs: usize,
) -> Result<HashMap<usize, SentimentLabel>, InferenceError> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    for row in csv::Reader::from_path(path)?.deserialize::<CheckpointRow>() {
        let row = row?;
        if let Some(&i) = index.get(row.review_id.as_str()) {
            if row.run < n_runs {
                done.insert(i * n_runs + row.run, row.label);
            }
        }
    }
    Ok(done)
}

fn save_checkpoint(
    path: &PathBuf,
    ids: &[&str],
    n_runs: usize,
    cells: &[Option<SentimentLabel>],
) -> Result<(), InferenceError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut wtr = csv::Writer::from_path(path)?;
    for (cell, label) in cells.iter().enumerate() {
        if let Some(label) = label {
            wtr.serialize(CheckpointRow {
                review_id: ids[cell / n_runs].to_string(),
                run: cell % n_runs,
                label: *label,
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Fills an `n_runs`-column grid by calling `backend` once per cell.
///
/// Transient failures and unparseable answers are retried with exponential
/// backoff plus seeded jitter. A cell that exhausts its retries, or a fatal
/// backend error, aborts the run; completed cells are then written to
/// `settings.checkpoint` so a rerun only issues the missing calls.
pub fn run_experiment(
    prompts: &[Prompt],
    backend: &dyn LlmBackend,
    seed: u64,
    settings: &RunSettings,
) -> Result<RunMatrix, InferenceError> {
    let n_runs = settings.n_runs;
    if n_runs == 0 {
        return Err(InferenceError::NoRuns);
    }
    let method = prompts.first().map_or(Method::Direct, |p| p.method);
    if prompts.iter().any(|p| p.method != method) {
        return Err(InferenceError::MixedMethods);
    }
    let ids: Vec<&str> = prompts.iter().map(|p| p.review_id.as_str()).collect();
    let rendered: Vec<String> = prompts.iter().map(Prompt::render).collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    let total = prompts.len() * n_runs;
    let mut cells: Vec<Option<SentimentLabel>> = vec![None; total];
    if let Some(path) = &settings.checkpoint {
        for (cell, label) in load_checkpoint(path, &index, n_runs)? {
            cells[cell] = Some(label);
        }
    }
    let pending: Vec<usize> = (0..total).filter(|&c| cells[c].is_none()).collect();

    let cells = Mutex::new(cells);
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let failure: Mutex<Option<InferenceError>> = Mutex::new(None);
    let limiter = settings.requests_per_second.filter(|r| *r > 0.0).map(|r| RateLimiter::new(r, settings.in_flight));

    let call_cell = |cell: usize| -> Result<SentimentLabel, InferenceError> {
        let (row, run) = (cell / n_runs, cell % n_runs);
        let review_id = ids[row];
        let mut last = String::new();
        for attempt in 0..=settings.max_retries {
            if attempt > 0 {
                let exp = settings.backoff_base_ms.saturating_mul(1u64 << (attempt - 1).min(20));
                let delay = exp.min(settings.backoff_max_ms);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (cell as u64).rotate_left(17) ^ u64::from(attempt));
                let jitter = if delay > 0 { rng.random_range(0..=delay / 2) } else { 0 };
                thread::sleep(Duration::from_millis(delay + jitter));
            }
            if let Some(l) = &limiter {
                l.acquire();
            }
            let request =
                Completion { prompt: &rendered[row], task: Task::Sentiment { method, review_id, run }, attempt };
            match backend.complete(&request) {
                Ok(text) => match parse_label(&text) {
                    Ok(label) => return Ok(label),
                    Err(e) => last = e.to_string(),
                },
                Err(BackendError::Transient(msg)) => last = msg,
                Err(BackendError::Fatal(message)) => {
                    return Err(InferenceError::Fatal { review_id: review_id.to_string(), run, message })
                }
            }
        }
        Err(InferenceError::Exhausted {
            review_id: review_id.to_string(),
            run,
            attempts: settings.max_retries + 1,
            last,
        })
    };

    let workers = settings.in_flight.max(1).min(pending.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                while !stop.load(Ordering::Relaxed) {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&cell) = pending.get(k) else { break };
                    match call_cell(cell) {
                        Ok(label) => cells.lock().expect("cells poisoned")[cell] = Some(label),
                        Err(e) => {
                            stop.store(true, Ordering::Relaxed);
                            failure.lock().expect("failure poisoned").get_or_insert(e);
                            break;
                        }
                    }
                }
            });
        }
    });

    let cells = cells.into_inner().expect("cells poisoned");
    if let Some(err) = failure.into_inner().expect("failure poisoned") {
        if let Some(path) = &settings.checkpoint {
            save_checkpoint(path, &ids, n_runs, &cells)?;
        }
        return Err(err);
    }
    if let Some(path) = &settings.checkpoint {
        if path.exists() {
            fs::remove_file(path)?;
        }
    }
    let labels = cells.chunks(n_runs).map(|row| row.iter().map(|l| l.expect("every cell filled")).collect()).collect();
    let mut matrix = RunMatrix::new(method, ids.iter().map(|s| s.to_string()).collect(), labels)?;
    matrix.n_runs = n_runs;
    Ok(matrix)
}
