use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::backend::BackendInfo;
use super::{InferenceError, Method, SentimentLabel};

/// Sentiment labels per review across independent runs of one method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMatrix {
    pub method: Method,
    pub review_ids: Vec<String>,
    /// One row per review, `n_runs` labels each.
    pub labels: Vec<Vec<SentimentLabel>>,
    pub n_runs: usize,
}

impl RunMatrix {
    pub fn new(
        method: Method,
        review_ids: Vec<String>,
        labels: Vec<Vec<SentimentLabel>>,
    ) -> Result<Self, InferenceError> {
        if review_ids.len() != labels.len() {
            return Err(InferenceError::Malformed(format!("{} ids but {} rows", review_ids.len(), labels.len())));
        }
        let n_runs = labels.first().map_or(0, Vec::len);
        if let Some(i) = labels.iter().position(|row| row.len() != n_runs) {
            return Err(InferenceError::Malformed(format!("row `{}` is ragged", review_ids[i])));
        }
        Ok(Self { method, review_ids, labels, n_runs })
    }

    pub fn len(&self) -> usize {
        self.review_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.review_ids.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[SentimentLabel])> {
        self.review_ids.iter().map(String::as_str).zip(self.labels.iter().map(Vec::as_slice))
    }

    pub fn index(&self) -> HashMap<&str, &[SentimentLabel]> {
        self.rows().collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), InferenceError> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["review_id".to_string()];
        header.extend((0..self.n_runs).map(|r| format!("run_{r}")));
        wtr.write_record(&header)?;
        for (id, row) in self.rows() {
            let mut record = vec![id];
            record.extend(row.iter().map(|l| l.name()));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(method: Method, input: R) -> Result<Self, InferenceError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("review_id") {
            return Err(InferenceError::Malformed("first column must be review_id".into()));
        }
        for (i, h) in header.iter().skip(1).enumerate() {
            if h != format!("run_{i}") {
                return Err(InferenceError::Malformed(format!("unexpected column `{h}`")));
            }
        }
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for record in rdr.records() {
            let record = record?;
            ids.push(record[0].to_string());
            labels.push(record.iter().skip(1).map(str::parse).collect::<Result<Vec<_>, _>>()?);
        }
        let mut m = Self::new(method, ids, labels)?;
        m.n_runs = header.len() - 1;
        Ok(m)
    }
}

/// Provenance written next to every persisted matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub method: Method,
    pub n_runs: usize,
    pub reviews: usize,
    pub seed: u64,
    pub backend: BackendInfo,
    pub started_at: String,
    pub finished_at: String,
}
