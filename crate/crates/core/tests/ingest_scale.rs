use std::io::{BufWriter, Write};

use chrono::{Duration, NaiveDate};
use ssas_core::characterize::compute_entity_activity;
use ssas_core::corpus::{assign_quarters, ingest, quarters_spanned};
use ssas_core::Schema;

#[test]
fn full_size_amazon_dump() {
    const N: usize = 155_745;
    let first = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let last = NaiveDate::from_ymd_opt(2023, 5, 23).unwrap();
    let span = (last - first).num_days();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("amazon.jsonl");
    let mut w = BufWriter::new(std::fs::File::create(&path).unwrap());
    for i in 0..N {
        let day = first + Duration::days(i as i64 % (span + 1));
        let millis = day.and_hms_opt(12, 0, 0).unwrap().and_utc().timestamp_millis();
        writeln!(
            w,
            r#"{{"rating":4.0,"text":"review number {i}","asin":"B{:04}","parent_asin":"P{:03}","timestamp":{millis}}}"#,
            i % 5000,
            i % 700
        )
        .unwrap();
    }
    w.flush().unwrap();
    drop(w);

    let ingested = ingest(&path, Schema::Amazon).unwrap();
    assert!(ingested.malformed.is_empty());
    assert_eq!(ingested.corpus.len(), N);
    assert_eq!(ingested.corpus.dataset_name(), "amazon");
    let corpus = assign_quarters(ingested.corpus).unwrap();
    let activity = compute_entity_activity::<f64>(&corpus).unwrap();
    assert_eq!(activity.len(), 700);
    assert!(activity.iter().all(|a| a.total_quarters == 14));
    assert_eq!(quarters_spanned(first, last), 14);
}

#[test]
fn goodreads_span_has_fifty_one_quarters() {
    let first = NaiveDate::from_ymd_opt(2009, 3, 1).unwrap();
    let last = NaiveDate::from_ymd_opt(2021, 8, 25).unwrap();
    assert_eq!(quarters_spanned(first, last), 51);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("goodreads.jsonl");
    let lines = [
        r#"{"review_id":"g1","book_id":"b1","review_text":"Loved it","date_added":"Sun Mar 01 10:00:00 -0800 2009"}"#,
        r#"{"review_id":"g2","book_id":"b2","review_text":"Slow start","date_added":"Wed Aug 25 09:00:00 -0700 2021"}"#,
    ];
    std::fs::write(&path, lines.join("\n")).unwrap();
    let corpus = assign_quarters(ingest(&path, Schema::Goodreads).unwrap().corpus).unwrap();
    let activity = compute_entity_activity::<f64>(&corpus).unwrap();
    assert!(activity.iter().all(|a| a.total_quarters == 51 && a.active_quarters == 1));
}
