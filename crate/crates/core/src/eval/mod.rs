//! Evaluation protocol: manifest ingestion, temporal hold-out, metrics, cost
//! sweeps, judge audits and report files.

mod audit;
mod metrics;
mod report;

use std::collections::HashSet;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::types::{validate_news_item, ItemError, NewsItem};

pub use audit::{audit_batch, audit_reasoning, parse_judge_reply, AuditError, AuditScore};
pub use metrics::{
    bayes_threshold, compute_metrics, cost_sweep, load_predictions, threshold_predictions, CostRatio, GroundTruth,
    Metrics, MetricsError, Prediction, SweepRow,
};
pub use report::{emit_report, AuditSummary, EvalReport, SplitSummary};

pub const DEFAULT_TEST_FRACTION: f64 = 0.15;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("IO: {0}")]
    Io(String),
    #[error("SCHEMA: line {line}: {source}")]
    Schema { line: usize, source: ItemError },
    #[error("SCHEMA: line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("DUPLICATE_ID: {id:?} on line {line}")]
    DuplicateId { id: String, line: usize },
}

impl ManifestError {
    pub fn code(&self) -> &'static str {
        match self {
            ManifestError::Io(_) => "IO",
            ManifestError::Schema { .. } | ManifestError::Json { .. } => "SCHEMA",
            ManifestError::DuplicateId { .. } => "DUPLICATE_ID",
        }
    }
}

/// Parses JSONL manifest text. Blank lines are skipped; line numbers are
/// 1-based.
pub fn parse_manifest(text: &str) -> Result<Vec<NewsItem>, ManifestError> {
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Value = serde_json::from_str(line).map_err(|e| ManifestError::Json {
            line: line_no,
            message: e.to_string(),
        })?;
        let item = validate_news_item(&raw).map_err(|source| ManifestError::Schema { line: line_no, source })?;
        if !seen.insert(item.id.clone()) {
            return Err(ManifestError::DuplicateId {
                id: item.id,
                line: line_no,
            });
        }
        items.push(item);
    }
    Ok(items)
}

pub fn load_manifest(path: &Path) -> Result<Vec<NewsItem>, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Io(format!("{}: {e}", path.display())))?;
    parse_manifest(&text)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("EMPTY_INPUT: nothing to split")]
    EmptyInput,
    #[error("BAD_FRACTION: test fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
}

impl SplitError {
    pub fn code(&self) -> &'static str {
        match self {
            SplitError::EmptyInput => "EMPTY_INPUT",
            SplitError::BadFraction(_) => "BAD_FRACTION",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<NewsItem>,
    pub test: Vec<NewsItem>,
}

/// `ceil(fraction * n)`, snapping products within 1e-9 of an integer so that
/// e.g. `0.15 * 100` counts as 15 rather than 15.000000000000002.
pub fn test_size(n: usize, fraction: f64) -> usize {
    let x = fraction * n as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (k as usize).min(n)
}

/// Holds out the most recent items. Ordering is by `published_at`, ties by id.
pub fn temporal_split(items: &[NewsItem], test_fraction: f64) -> Result<Split, SplitError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::BadFraction(test_fraction));
    }
    if items.is_empty() {
        return Err(SplitError::EmptyInput);
    }
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| a.published_at.cmp(&b.published_at).then_with(|| a.id.cmp(&b.id)));
    let k = test_size(sorted.len(), test_fraction);
    let test = sorted.split_off(sorted.len() - k);
    Ok(Split { train: sorted, test })
}
