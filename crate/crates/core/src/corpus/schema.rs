use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Source dataset layout. Each variant maps its own column names onto the
/// canonical `{id, entity_id, text, timestamp}` record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// Amazon product reviews; the entity is the store (falling back to the product).
    Amazon,
    /// Google Local business reviews keyed by `gmap_id`.
    Google,
    /// Goodreads book reviews keyed by `book_id`.
    Goodreads,
    /// The canonical interchange layout.
    Generic,
}

pub(crate) struct FieldMap {
    pub id: &'static [&'static str],
    pub entity: &'static [&'static str],
    pub text: &'static [&'static str],
    pub timestamp: &'static [&'static str],
    /// Whether a missing id may be synthesized from the line number.
    pub synthesize_id: bool,
}

impl Schema {
    pub const ALL: [Schema; 4] = [Schema::Amazon, Schema::Google, Schema::Goodreads, Schema::Generic];

    pub fn name(self) -> &'static str {
        match self {
            Schema::Amazon => "amazon",
            Schema::Google => "google",
            Schema::Goodreads => "goodreads",
            Schema::Generic => "generic",
        }
    }

    pub(crate) fn fields(self) -> FieldMap {
        match self {
            Schema::Amazon => FieldMap {
                id: &["review_id", "id"],
                entity: &["store", "parent_asin", "asin"],
                text: &["text", "reviewText"],
                timestamp: &["timestamp", "unixReviewTime", "reviewTime"],
                synthesize_id: true,
            },
            Schema::Google => FieldMap {
                id: &["review_id", "id"],
                entity: &["gmap_id", "business_id"],
                text: &["text"],
                timestamp: &["time", "timestamp"],
                synthesize_id: true,
            },
            Schema::Goodreads => FieldMap {
                id: &["review_id"],
                entity: &["book_id", "title"],
                text: &["review_text", "text"],
                timestamp: &["date_added", "date_updated", "read_at"],
                synthesize_id: true,
            },
            Schema::Generic => FieldMap {
                id: &["id"],
                entity: &["entity_id"],
                text: &["text"],
                timestamp: &["timestamp"],
                synthesize_id: false,
            },
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown schema `{0}` (expected amazon, google, goodreads or generic)")]
pub struct UnknownSchema(pub String);

impl FromStr for Schema {
    type Err = UnknownSchema;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Schema::ALL
            .into_iter()
            .find(|schema| schema.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownSchema(s.to_string()))
    }
}
