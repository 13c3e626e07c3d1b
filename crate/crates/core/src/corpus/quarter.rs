use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

/// A calendar year-quarter, rendered as `2020-Q1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Quarter {
    year: i32,
    quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Option<Self> {
        (1..=4).contains(&quarter).then_some(Self { year, quarter })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self { year: date.year(), quarter: (date.month0() / 3 + 1) as u8 }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn quarter(self) -> u8 {
        self.quarter
    }

    /// Linear index; consecutive quarters differ by one.
    pub fn ordinal(self) -> i64 {
        i64::from(self.year) * 4 + i64::from(self.quarter - 1)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Q{}", self.year, self.quarter)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid quarter key `{0}`")]
pub struct QuarterParseError(String);

impl FromStr for Quarter {
    type Err = QuarterParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || QuarterParseError(s.to_string());
        let (year, q) = s.split_once("-Q").ok_or_else(bad)?;
        let year = year.parse().map_err(|_| bad())?;
        let q = q.parse().map_err(|_| bad())?;
        Quarter::new(year, q).ok_or_else(bad)
    }
}

impl TryFrom<String> for Quarter {
    type Error = QuarterParseError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Quarter> for String {
    fn from(q: Quarter) -> Self {
        q.to_string()
    }
}

/// Number of year-quarters that intersect the closed date range `[from, to]`.
pub fn quarters_spanned(from: NaiveDate, to: NaiveDate) -> u32 {
    if to < from {
        return 0;
    }
    (Quarter::of(to).ordinal() - Quarter::of(from).ordinal() + 1) as u32
}

/// Parses the timestamp spellings found in the supported review dumps.
///
/// Accepts ISO dates and datetimes, RFC 3339, `MM/DD/YYYY`, `MM DD, YYYY`,
/// the `Sun Jul 30 07:44:10 -0700 2017` form, and Unix epochs in seconds or
/// milliseconds (values of 10^11 and above are read as milliseconds).
pub fn parse_timestamp(raw: &str) -> Option<NaiveDate> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(epoch) = s.parse::<i64>() {
        let secs = if epoch.abs() >= 100_000_000_000 { epoch.div_euclid(1000) } else { epoch };
        return DateTime::from_timestamp(secs, 0).map(|dt| dt.date_naive());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.date_naive());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.date());
        }
    }
    for fmt in ["%m/%d/%Y", "%m %d, %Y"] {
        if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
            return Some(d);
        }
    }
    DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y").ok().map(|dt| dt.date_naive())
}
