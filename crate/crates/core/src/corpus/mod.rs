//! Review ingestion, the canonical record shape and quarterly bucketing.

mod quarter;
mod schema;
mod synthetic;

pub use quarter::{parse_timestamp, quarters_spanned, Quarter, QuarterParseError};
pub use schema::{Schema, UnknownSchema};
pub use synthetic::{synthetic_corpus, SyntheticSpec};

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Unreadable { path: PathBuf, source: io::Error },
    #[error(transparent)]
    UnknownSchema(#[from] UnknownSchema),
    #[error("no valid records in {0} ({1} malformed)")]
    NoRecords(String, usize),
    #[error("duplicate review id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("review `{0}` has empty text")]
    EmptyText(String),
    #[error("review `{review_id}` has unparseable timestamp `{value}`")]
    BadTimestamp { review_id: String, value: String },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One review in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub entity_id: String,
    pub text: String,
    /// Timestamp exactly as it appeared in the source.
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quarter: Option<Quarter>,
}

impl Review {
    pub fn new(
        id: impl Into<String>,
        entity_id: impl Into<String>,
        text: impl Into<String>,
        timestamp: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            entity_id: entity_id.into(),
            text: text.into(),
            timestamp: timestamp.into(),
            quarter: None,
        }
    }

    pub fn date(&self) -> Option<NaiveDate> {
        parse_timestamp(&self.timestamp)
    }
}

/// An immutable set of reviews with a per-entity index.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dataset_name: String,
    reviews: Vec<Review>,
    entity_index: BTreeMap<String, Vec<String>>,
    positions: HashMap<String, usize>,
}

impl Corpus {
    /// Validates id uniqueness and non-empty text, then indexes by entity.
    pub fn new(dataset_name: impl Into<String>, reviews: Vec<Review>) -> Result<Self, CorpusError> {
        let mut positions = HashMap::with_capacity(reviews.len());
        let mut entity_index: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, review) in reviews.iter().enumerate() {
            if review.text.trim().is_empty() {
                return Err(CorpusError::EmptyText(review.id.clone()));
            }
            if positions.insert(review.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId { id: review.id.clone(), line: i + 1 });
            }
            entity_index.entry(review.entity_id.clone()).or_default().push(review.id.clone());
        }
        Ok(Self { dataset_name: dataset_name.into(), reviews, entity_index, positions })
    }

    pub fn dataset_name(&self) -> &str {
        &self.dataset_name
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Review> {
        self.positions.get(id).map(|&i| &self.reviews[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    /// Entity id to the ids of its reviews, in corpus order.
    pub fn entity_index(&self) -> &BTreeMap<String, Vec<String>> {
        &self.entity_index
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.reviews.iter().map(|r| r.id.as_str())
    }

    /// Reviews satisfying `keep`, in corpus order.
    pub fn subset(&self, mut keep: impl FnMut(&Review) -> bool) -> Corpus {
        let reviews = self.reviews.iter().filter(|r| keep(r)).cloned().collect();
        Corpus::new(self.dataset_name.clone(), reviews).expect("subset of a valid corpus is valid")
    }

    /// First and last dated quarter, if any review carries a quarter.
    pub fn quarter_range(&self) -> Option<(Quarter, Quarter)> {
        let mut quarters = self.reviews.iter().filter_map(|r| r.quarter);
        let first = quarters.next()?;
        Some(quarters.fold((first, first), |(lo, hi), q| (lo.min(q), hi.max(q))))
    }

    /// Writes the corpus as canonical JSON Lines.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), CorpusError> {
        for review in &self.reviews {
            serde_json::to_writer(&mut out, review)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|source| CorpusError::Unreadable { path: path.to_path_buf(), source })?;
        self.write_jsonl(io::BufWriter::new(file))
    }

    /// Loads a canonical corpus file and (re)derives quarters.
    pub fn load(path: &Path, dataset_name: &str) -> Result<Corpus, CorpusError> {
        let ingested = ingest(path, Schema::Generic)?;
        let corpus = Corpus { dataset_name: dataset_name.to_string(), ..ingested.corpus };
        assign_quarters(corpus)
    }
}

/// A source line that could not be turned into a review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Malformed {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    pub malformed: Vec<Malformed>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    JsonLines,
    Csv,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::JsonLines,
        }
    }
}

/// Reads a review dump from disk. The dataset name is the file stem.
pub fn ingest(path: &Path, schema: Schema) -> Result<Ingested, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Unreadable { path: path.to_path_buf(), source })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
    ingest_reader(BufReader::new(file), InputFormat::from_path(path), schema, &name)
}

pub fn ingest_reader<R: Read>(
    reader: R,
    format: InputFormat,
    schema: Schema,
    dataset_name: &str,
) -> Result<Ingested, CorpusError> {
    let fields = schema.fields();
    let mut reviews = Vec::new();
    let mut malformed = Vec::new();
    let mut push = |line: usize, record: Result<Review, String>| match record {
        Ok(review) => reviews.push((line, review)),
        Err(reason) => malformed.push(Malformed { line, reason }),
    };

    match format {
        InputFormat::JsonLines => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = i + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record = serde_json::from_str::<serde_json::Value>(&line)
                    .map_err(|e| format!("invalid JSON: {e}"))
                    .and_then(|value| match value {
                        serde_json::Value::Object(map) => {
                            to_review(&fields, line_no, |key| map.get(key).and_then(json_scalar))
                        }
                        _ => Err("record is not a JSON object".to_string()),
                    });
                push(line_no, record);
            }
        }
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
            let headers = rdr.headers()?.clone();
            for (i, row) in rdr.records().enumerate() {
                // header is line 1
                let line_no = i + 2;
                let record = match row {
                    Ok(row) if row.len() != headers.len() => {
                        Err(format!("expected {} fields, found {}", headers.len(), row.len()))
                    }
                    Ok(row) => to_review(&fields, line_no, |key| {
                        headers
                            .iter()
                            .position(|h| h == key)
                            .and_then(|idx| row.get(idx))
                            .filter(|v| !v.is_empty())
                            .map(str::to_string)
                    }),
                    Err(e) => Err(format!("invalid CSV row: {e}")),
                };
                push(line_no, record);
            }
        }
    }

    if reviews.is_empty() {
        return Err(CorpusError::NoRecords(dataset_name.to_string(), malformed.len()));
    }
    let mut seen = HashMap::with_capacity(reviews.len());
    for (line, review) in &reviews {
        if seen.insert(review.id.as_str(), *line).is_some() {
            return Err(CorpusError::DuplicateId { id: review.id.clone(), line: *line });
        }
    }
    let corpus = Corpus::new(dataset_name, reviews.into_iter().map(|(_, r)| r).collect())?;
    Ok(Ingested { corpus, malformed })
}

fn json_scalar(value: &serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::String(s) if !s.is_empty() => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn to_review(fields: &schema::FieldMap, line: usize, get: impl Fn(&str) -> Option<String>) -> Result<Review, String> {
    let first = |names: &[&str]| names.iter().find_map(|n| get(n));
    let id = match first(fields.id) {
        Some(id) => id,
        None if fields.synthesize_id => format!("line-{line}"),
        None => return Err(format!("missing field `{}`", fields.id[0])),
    };
    let entity_id = first(fields.entity).ok_or_else(|| format!("missing field `{}`", fields.entity[0]))?;
    let text = first(fields.text).ok_or_else(|| format!("missing field `{}`", fields.text[0]))?;
    let timestamp = first(fields.timestamp).ok_or_else(|| format!("missing field `{}`", fields.timestamp[0]))?;
    let text = text.trim();
    if text.is_empty() {
        return Err("empty text".to_string());
    }
    Ok(Review::new(id, entity_id, text, timestamp.trim()))
}

/// Attaches the year-quarter derived from each review's timestamp.
pub fn assign_quarters(corpus: Corpus) -> Result<Corpus, CorpusError> {
    let Corpus { dataset_name, mut reviews, entity_index, positions } = corpus;
    for review in &mut reviews {
        let date = review.date().ok_or_else(|| CorpusError::BadTimestamp {
            review_id: review.id.clone(),
            value: review.timestamp.clone(),
        })?;
        review.quarter = Some(Quarter::of(date));
    }
    Ok(Corpus { dataset_name, reviews, entity_index, positions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jsonl(lines: &[&str]) -> Vec<u8> {
        lines.join("\n").into_bytes()
    }

    #[test]
    fn ingests_three_generic_lines() {
        let data = jsonl(&[
            r#"{"id":"a","entity_id":"s1","text":"great","timestamp":"2020-01-15"}"#,
            r#"{"id":"b","entity_id":"s1","text":"bad","timestamp":"2020-04-01"}"#,
            r#"{"id":"c","entity_id":"s2","text":"ok","timestamp":"2020-07-01"}"#,
        ]);
        let got = ingest_reader(&data[..], InputFormat::JsonLines, Schema::Generic, "t").unwrap();
        assert_eq!(got.corpus.len(), 3);
        assert!(got.malformed.is_empty());
        assert_eq!(got.corpus.entity_index()["s1"], vec!["a", "b"]);
    }

    #[test]
    fn malformed_lines_are_counted() {
        let data = jsonl(&[
            r#"{"id":"a","entity_id":"s1","text":"great","timestamp":"2020-01-15"}"#,
            r#"{"id":"b","entity_id":"s1","text":"#,
            r#"{"id":"c","entity_id":"s2","text":"ok","timestamp":"2020-07-01"}"#,
        ]);
        let got = ingest_reader(&data[..], InputFormat::JsonLines, Schema::Generic, "t").unwrap();
        assert_eq!(got.corpus.len(), 2);
        assert_eq!(got.malformed.len(), 1);
        assert_eq!(got.malformed[0].line, 2);
    }

    #[test]
    fn blank_text_and_missing_fields_are_malformed() {
        let data = jsonl(&[
            r#"{"id":"a","entity_id":"s1","text":"   ","timestamp":"2020-01-15"}"#,
            r#"{"id":"b","text":"fine","timestamp":"2020-01-15"}"#,
            r#"[1,2,3]"#,
            r#"{"id":"c","entity_id":"s2","text":"ok","timestamp":"2020-07-01"}"#,
        ]);
        let got = ingest_reader(&data[..], InputFormat::JsonLines, Schema::Generic, "t").unwrap();
        assert_eq!(got.corpus.len(), 1);
        assert_eq!(got.malformed.iter().map(|m| m.line).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn zero_valid_records_is_an_error() {
        let data = jsonl(&["not json", "{}"]);
        let err = ingest_reader(&data[..], InputFormat::JsonLines, Schema::Generic, "t").unwrap_err();
        assert!(matches!(err, CorpusError::NoRecords(_, 2)));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let data = jsonl(&[
            r#"{"id":"a","entity_id":"s1","text":"x","timestamp":"2020-01-15"}"#,
            r#"{"id":"a","entity_id":"s2","text":"y","timestamp":"2020-01-15"}"#,
        ]);
        let err = ingest_reader(&data[..], InputFormat::JsonLines, Schema::Generic, "t").unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, .. }));
    }

    #[test]
    fn schema_adapters_map_source_columns() {
        let amazon = jsonl(&[
            r#"{"rating":5.0,"title":"t","text":"Works well","asin":"B01","parent_asin":"P01","user_id":"u1","timestamp":1588615855070}"#,
        ]);
        let got = ingest_reader(&amazon[..], InputFormat::JsonLines, Schema::Amazon, "a").unwrap();
        let r = &got.corpus.reviews()[0];
        assert_eq!((r.id.as_str(), r.entity_id.as_str()), ("line-1", "P01"));

        let google = jsonl(&[
            r#"{"user_id":"1","name":"Ann","time":1309184881616,"rating":5,"text":"Tasty","pics":null,"gmap_id":"0x88"}"#,
        ]);
        let got = ingest_reader(&google[..], InputFormat::JsonLines, Schema::Google, "g").unwrap();
        assert_eq!(got.corpus.reviews()[0].entity_id, "0x88");

        let goodreads = jsonl(&[
            r#"{"user_id":"u","book_id":"24375664","review_id":"5cd416f3","rating":5,"review_text":"Loved it","date_added":"Fri Aug 25 13:55:02 -0700 2017"}"#,
        ]);
        let got = ingest_reader(&goodreads[..], InputFormat::JsonLines, Schema::Goodreads, "gr").unwrap();
        let r = &got.corpus.reviews()[0];
        assert_eq!((r.id.as_str(), r.entity_id.as_str()), ("5cd416f3", "24375664"));
        let got = assign_quarters(got.corpus).unwrap();
        assert_eq!(got.reviews()[0].quarter.unwrap().to_string(), "2017-Q3");
    }

    #[test]
    fn csv_input_with_header() {
        let data = b"id,entity_id,text,timestamp\na,s1,\"good, really\",2020-01-15\nb,s1,short\nc,s2,fine,2021-02-02\n";
        let got = ingest_reader(&data[..], InputFormat::Csv, Schema::Generic, "c").unwrap();
        assert_eq!(got.corpus.len(), 2);
        assert_eq!(got.malformed, vec![Malformed { line: 3, reason: "expected 4 fields, found 3".into() }]);
        assert_eq!(got.corpus.get("a").unwrap().text, "good, really");
    }

    #[test]
    fn unknown_schema_name() {
        assert!("yelp".parse::<Schema>().is_err());
        assert_eq!("Goodreads".parse::<Schema>().unwrap(), Schema::Goodreads);
    }

    #[test]
    fn quarters_require_parseable_timestamps() {
        let corpus =
            Corpus::new("t", vec![Review::new("a", "s", "x", "2020-01-15"), Review::new("b", "s", "y", "someday")])
                .unwrap();
        match assign_quarters(corpus).unwrap_err() {
            CorpusError::BadTimestamp { review_id, .. } => assert_eq!(review_id, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jsonl_round_trip_keeps_quarters() {
        let corpus =
            assign_quarters(Corpus::new("t", vec![Review::new("a", "s", "text here", "2020-05-01")]).unwrap()).unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.contains(r#""quarter":"2020-Q2""#));
        let back = ingest_reader(&buf[..], InputFormat::JsonLines, Schema::Generic, "t").unwrap();
        let back = assign_quarters(back.corpus).unwrap();
        assert_eq!(back, corpus);
    }
}
