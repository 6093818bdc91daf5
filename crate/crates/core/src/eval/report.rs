use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::audit::AuditScore;
use super::metrics::{Metrics, SweepRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub strategy: String,
    pub test_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub n_eligible: usize,
    pub n_scored: usize,
    pub mean_faithfulness: f64,
    pub mean_logical_consistency: f64,
    pub mean_evidence_grounding: f64,
    /// `(item_id, error code)` for audits that failed.
    pub failures: Vec<(String, String)>,
}

impl AuditSummary {
    pub fn from_scores(n_eligible: usize, scores: &[AuditScore], failures: Vec<(String, String)>) -> Self {
        let mean = |f: fn(&AuditScore) -> u8| {
            if scores.is_empty() {
                0.0
            } else {
                scores.iter().map(|s| f(s) as f64).sum::<f64>() / scores.len() as f64
            }
        };
        Self {
            n_eligible,
            n_scored: scores.len(),
            mean_faithfulness: mean(|s| s.faithfulness),
            mean_logical_consistency: mean(|s| s.logical_consistency),
            mean_evidence_grounding: mean(|s| s.evidence_grounding),
            failures,
        }
    }
}

/// Everything `report.json` holds. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub per_dataset: BTreeMap<String, Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub cost_sweep: Vec<SweepRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSummary>,
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()
}

fn metric_row(scope: &str, m: &Metrics) -> Vec<String> {
    vec![
        scope.to_string(),
        m.n.to_string(),
        m.accuracy.to_string(),
        m.precision.to_string(),
        m.recall.to_string(),
        m.f1.to_string(),
        m.tp.to_string(),
        m.fp.to_string(),
        m.fn_.to_string(),
        m.tn.to_string(),
        m.n_unparseable.to_string(),
    ]
}

/// Writes `report.json` and `metrics.csv`, plus `cost_sweep.csv` and
/// `cost_sweep_plot.csv` when a sweep is present and `audits.csv` when audit
/// scores are given. Returns the written paths in order.
pub fn emit_report(report: &EvalReport, audits: &[AuditScore], out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let json_path = out_dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    json.push('\n');
    std::fs::write(&json_path, json)?;
    written.push(json_path);

    let metrics_path = out_dir.join("metrics.csv");
    let rows = std::iter::once(metric_row("all", &report.metrics))
        .chain(report.per_dataset.iter().map(|(k, m)| metric_row(k, m)));
    write_csv(
        &metrics_path,
        &["scope", "n", "accuracy", "precision", "recall", "f1", "tp", "fp", "fn", "tn", "n_unparseable"],
        rows,
    )?;
    written.push(metrics_path);

    if !report.cost_sweep.is_empty() {
        let sweep_path = out_dir.join("cost_sweep.csv");
        write_csv(
            &sweep_path,
            &["ratio", "precision", "recall"],
            report
                .cost_sweep
                .iter()
                .map(|r| vec![r.ratio.clone(), r.precision.to_string(), r.recall.to_string()]),
        )?;
        written.push(sweep_path);

        let plot_path = out_dir.join("cost_sweep_plot.csv");
        let rows = report.cost_sweep.iter().flat_map(|r| {
            let x = (r.alpha / r.gamma).to_string();
            [
                vec![r.ratio.clone(), x.clone(), "precision".into(), r.precision.to_string()],
                vec![r.ratio.clone(), x, "recall".into(), r.recall.to_string()],
            ]
        });
        write_csv(&plot_path, &["ratio", "alpha_over_gamma", "metric", "value"], rows)?;
        written.push(plot_path);
    }

    if !audits.is_empty() {
        let audit_path = out_dir.join("audits.csv");
        write_csv(
            &audit_path,
            &["item_id", "faithfulness", "logical_consistency", "evidence_grounding", "rationale"],
            audits.iter().map(|a| {
                vec![
                    a.item_id.clone(),
                    a.faithfulness.to_string(),
                    a.logical_consistency.to_string(),
                    a.evidence_grounding.to_string(),
                    a.rationale.clone(),
                ]
            }),
        )?;
        written.push(audit_path);
    }
    Ok(written)
}
