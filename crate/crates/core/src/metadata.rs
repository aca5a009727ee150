//! Metadata stream parsing and document-level admission filters.

use std::collections::BTreeSet;
use std::io::{self, BufRead};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::langid::{detect_language, Detection};
use crate::latexnorm::CleanDocument;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: String,
    #[serde(default, deserialize_with = "categories")]
    pub categories: Vec<String>,
    #[serde(rename = "date")]
    pub submission_date: NaiveDate,
    #[serde(default)]
    pub comments: Option<String>,
    #[serde(default)]
    pub source_path: Option<String>,
}

/// Categories arrive as an array or as the space-separated string used by
/// the public arXiv snapshot.
fn categories<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        List(Vec<String>),
        Joined(String),
        Missing(()),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::List(v) => v,
        Raw::Joined(s) => s.split_whitespace().map(str::to_string).collect(),
        Raw::Missing(()) => Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetadataItem {
    Record(PaperRecord),
    Malformed(MalformedLine),
}

#[derive(Debug, Error)]
pub enum MetadataError {
    #[error("reading metadata stream: {0}")]
    Io(#[from] io::Error),
}

/// Parse one JSON line. Blank `id` counts as malformed.
pub fn parse_metadata_line(line: &str) -> Result<PaperRecord, String> {
    let rec: PaperRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if rec.id.trim().is_empty() {
        return Err("empty id".into());
    }
    Ok(rec)
}

/// One item per input line (1-based line numbers). Read errors are fatal.
pub fn parse_metadata_stream<R: BufRead>(input: R) -> Result<Vec<MetadataItem>, MetadataError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        out.push(match parse_metadata_line(&line) {
            Ok(rec) => MetadataItem::Record(rec),
            Err(reason) => MetadataItem::Malformed(MalformedLine { line: idx + 1, reason }),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    Category,
    Temporal,
    Withdrawn,
    Volume,
    Language,
    Malformed,
}

impl RejectReason {
    pub const ALL: [RejectReason; 6] = [
        RejectReason::Category,
        RejectReason::Temporal,
        RejectReason::Withdrawn,
        RejectReason::Volume,
        RejectReason::Language,
        RejectReason::Malformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Category => "Category",
            RejectReason::Temporal => "Temporal",
            RejectReason::Withdrawn => "Withdrawn",
            RejectReason::Volume => "Volume",
            RejectReason::Language => "Language",
            RejectReason::Malformed => "Malformed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    pub allowed_categories: BTreeSet<String>,
    pub min_year: i32,
    pub min_body_chars: usize,
    pub target_language: String,
    pub withdrawal_patterns: Vec<String>,
    pub language_min_confidence: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            allowed_categories: ["math", "cs", "hep-th", "hep-ph", "quant-ph", "stat.ML", "stat.TH"]
                .into_iter()
                .map(str::to_string)
                .collect(),
            min_year: 2001,
            min_body_chars: 2000,
            target_language: "en".into(),
            withdrawal_patterns: vec!["withdrawn".into()],
            language_min_confidence: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("allowed_categories must not be empty")]
    NoCategories,
    #[error("language_min_confidence must lie in [0, 1], got {0}")]
    Confidence(String),
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.allowed_categories.is_empty() {
            return Err(PolicyError::NoCategories);
        }
        if !(0.0..=1.0).contains(&self.language_min_confidence) {
            return Err(PolicyError::Confidence(self.language_min_confidence.to_string()));
        }
        Ok(())
    }

    /// Archive names admit their subcategories ("math" admits "math.AG");
    /// dotted codes such as "stat.ML" match exactly.
    pub fn category_allowed(&self, category: &str) -> bool {
        self.allowed_categories.iter().any(|allowed| {
            category == allowed
                || (!allowed.contains('.')
                    && category.len() > allowed.len()
                    && category.starts_with(allowed.as_str())
                    && category.as_bytes()[allowed.len()] == b'.')
        })
    }

    pub fn is_withdrawn(&self, comments: Option<&str>) -> bool {
        let Some(c) = comments else { return false };
        let lower = c.to_lowercase();
        self.withdrawal_patterns.iter().any(|p| lower.contains(&p.to_lowercase()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub accepted: bool,
    pub reasons: Vec<RejectReason>,
    pub language: Detection,
}

impl FilterOutcome {
    /// First reason in canonical order, used for one-reason-per-paper tallies.
    pub fn primary_reason(&self) -> Option<RejectReason> {
        self.reasons.iter().min().copied()
    }
}

/// Apply every filter and collect all failing reasons.
pub fn evaluate_filters(record: &PaperRecord, body: &CleanDocument, policy: &FilterPolicy) -> FilterOutcome {
    let mut reasons = Vec::new();
    if !record.categories.iter().any(|c| policy.category_allowed(c)) {
        reasons.push(RejectReason::Category);
    }
    if record.submission_date.year() < policy.min_year {
        reasons.push(RejectReason::Temporal);
    }
    if policy.is_withdrawn(record.comments.as_deref()) {
        reasons.push(RejectReason::Withdrawn);
    }
    if body.char_count < policy.min_body_chars {
        reasons.push(RejectReason::Volume);
    }
    let language = detect_language(&body.language_text());
    if language.language != policy.target_language || language.confidence < policy.language_min_confidence {
        reasons.push(RejectReason::Language);
    }
    FilterOutcome { accepted: reasons.is_empty(), reasons, language }
}
