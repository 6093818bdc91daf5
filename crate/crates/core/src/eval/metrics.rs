use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::types::{Label, NewsItem, RewardConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub verdict: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub id: String,
    pub label: Label,
}

impl From<&NewsItem> for GroundTruth {
    fn from(item: &NewsItem) -> Self {
        Self {
            id: item.id.clone(),
            label: item.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("ID_MISMATCH: {0}")]
    IdMismatch(String),
    #[error("IO: {0}")]
    Io(String),
    #[error("SCHEMA: line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("BAD_RATIO: {0:?}")]
    BadRatio(String),
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::IdMismatch(_) => "ID_MISMATCH",
            MetricsError::Io(_) => "IO",
            MetricsError::Schema { .. } => "SCHEMA",
            MetricsError::BadRatio(_) => "BAD_RATIO",
        }
    }
}

/// Binary metrics with Fake as the positive class.
///
/// Items without a verdict are counted in `n_unparseable`; they count as
/// errors for accuracy and, when the truth is Fake, as misses for recall.
/// Undefined ratios are reported as 0.0 with the matching flag set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub n_unparseable: usize,
    pub n_unparseable_fake: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize, n_unparseable: usize, n_unparseable_fake: usize) -> Self {
        let n = tp + fp + fn_ + tn + n_unparseable;
        let (accuracy, _) = ratio(tp + tn, n);
        let (precision, precision_undefined) = ratio(tp, tp + fp);
        let (recall, recall_undefined) = ratio(tp, tp + fn_ + n_unparseable_fake);
        let (f1, f1_undefined) = if precision + recall > 0.0 {
            (2.0 * precision * recall / (precision + recall), false)
        } else {
            (0.0, true)
        };
        Self {
            n,
            tp,
            fp,
            fn_,
            tn,
            n_unparseable,
            n_unparseable_fake,
            accuracy,
            precision,
            recall,
            f1,
            precision_undefined,
            recall_undefined,
            f1_undefined,
        }
    }
}

/// Predictions and truth must cover the same ids exactly once each.
pub fn compute_metrics(predictions: &[Prediction], truth: &[GroundTruth]) -> Result<Metrics, MetricsError> {
    let mut by_id: HashMap<&str, Option<Label>> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.id.as_str(), p.verdict).is_some() {
            return Err(MetricsError::IdMismatch(format!("duplicate prediction for {:?}", p.id)));
        }
    }
    if predictions.len() != truth.len() {
        return Err(MetricsError::IdMismatch(format!(
            "{} predictions for {} items",
            predictions.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn, mut unp, mut unp_fake) = (0, 0, 0, 0, 0, 0);
    let mut seen = HashSet::with_capacity(truth.len());
    for t in truth {
        if !seen.insert(t.id.as_str()) {
            return Err(MetricsError::IdMismatch(format!("duplicate truth for {:?}", t.id)));
        }
        let verdict = by_id
            .get(t.id.as_str())
            .ok_or_else(|| MetricsError::IdMismatch(format!("no prediction for {:?}", t.id)))?;
        match (verdict, t.label) {
            (Some(Label::Fake), Label::Fake) => tp += 1,
            (Some(Label::Fake), Label::Real) => fp += 1,
            (Some(Label::Real), Label::Fake) => fn_ += 1,
            (Some(Label::Real), Label::Real) => tn += 1,
            (None, label) => {
                unp += 1;
                if label == Label::Fake {
                    unp_fake += 1;
                }
            }
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn, unp, unp_fake))
}

#[derive(Deserialize)]
struct PredictionRow {
    #[serde(alias = "item_id")]
    id: String,
    #[serde(default)]
    verdict: Option<Label>,
}

/// Reads prediction JSONL. Rows need `id` (or `item_id`) and an optional
/// `verdict`, so trajectory files can be used directly.
pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|e| MetricsError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| MetricsError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        let row: PredictionRow = serde_json::from_value(v).map_err(|e| MetricsError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(Prediction {
            id: row.id,
            verdict: row.verdict,
        });
    }
    Ok(out)
}

/// False-positive to false-negative cost ratio, written `alpha:gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostRatio {
    pub alpha: f64,
    pub gamma: f64,
}

impl CostRatio {
    pub fn config(self, base: &RewardConfig) -> RewardConfig {
        RewardConfig {
            alpha_fp: self.alpha,
            gamma_fn: self.gamma,
            ..*base
        }
    }
}

impl fmt::Display for CostRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.alpha, self.gamma)
    }
}

impl FromStr for CostRatio {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricsError::BadRatio(s.to_string());
        let (a, g) = s.trim().split_once(':').ok_or_else(bad)?;
        let alpha: f64 = a.trim().parse().map_err(|_| bad())?;
        let gamma: f64 = g.trim().parse().map_err(|_| bad())?;
        if !(alpha.is_finite() && gamma.is_finite() && alpha >= 0.0 && gamma >= 0.0) {
            return Err(bad());
        }
        Ok(Self { alpha, gamma })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: String,
    pub alpha: f64,
    pub gamma: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Tabulates one metrics result per cost ratio, in the given order.
pub fn cost_sweep(runs: &[(CostRatio, Metrics)]) -> Vec<SweepRow> {
    runs.iter()
        .map(|(r, m)| SweepRow {
            ratio: r.to_string(),
            alpha: r.alpha,
            gamma: r.gamma,
            precision: m.precision,
            recall: m.recall,
        })
        .collect()
}

/// Probability-of-Fake threshold above which answering Fake has the higher
/// expected reward. Format and tool terms are identical for both answers and
/// cancel.
pub fn bayes_threshold(cfg: &RewardConfig) -> f64 {
    let c = cfg.r_acc_correct;
    let a = cfg.lambda_risk * cfg.alpha_fp;
    let g = cfg.lambda_risk * cfg.gamma_fn;
    (c + a) / (2.0 * c + a + g)
}

/// Answers Fake exactly when the item's score reaches the threshold.
pub fn threshold_predictions(scores: &[(String, f64)], threshold: f64) -> Vec<Prediction> {
    scores
        .iter()
        .map(|(id, s)| Prediction {
            id: id.clone(),
            verdict: Some(if *s >= threshold { Label::Fake } else { Label::Real }),
        })
        .collect()
}
