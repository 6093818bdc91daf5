use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::orchestrator::prompts::render;
use crate::orchestrator::{BackendError, ChatMessage, ModelBackend, ModelBackendRequest, PromptTemplateSet, RequestTag, Role, MAX_RESPONSE_TOKENS};
use crate::tools::observation_to_prompt_block;
use crate::types::{NewsItem, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditScore {
    pub item_id: String,
    pub faithfulness: u8,
    pub logical_consistency: u8,
    pub evidence_grounding: u8,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("PRECONDITION_VIOLATION: item {0} was not predicted correctly")]
    IncorrectPrediction(String),
    #[error("JUDGE_UNPARSEABLE: {0}")]
    JudgeUnparseable(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl AuditError {
    pub fn code(&self) -> &'static str {
        match self {
            AuditError::IncorrectPrediction(_) => "PRECONDITION_VIOLATION",
            AuditError::JudgeUnparseable(_) => "JUDGE_UNPARSEABLE",
            AuditError::Backend(e) => e.code(),
        }
    }
}

const DIMENSIONS: [&str; 3] = ["faithfulness", "logical_consistency", "evidence_grounding"];

/// Accepts one JSON object, optionally wrapped in a ``` fence. Each
/// dimension must be an integer in 1..=5.
pub fn parse_judge_reply(item_id: &str, text: &str) -> Result<AuditScore, String> {
    let mut body = text.trim();
    if let Some(rest) = body.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        body = rest.strip_suffix("```").ok_or("unterminated code fence")?.trim();
    }
    let v: Value = serde_json::from_str(body).map_err(|e| format!("not a JSON object: {e}"))?;
    let obj = v.as_object().ok_or("not a JSON object")?;
    let mut scores = [0u8; 3];
    for (slot, dim) in scores.iter_mut().zip(DIMENSIONS) {
        let n = obj
            .get(dim)
            .and_then(Value::as_u64)
            .ok_or_else(|| format!("`{dim}` missing or not an integer"))?;
        if !(1..=5).contains(&n) {
            return Err(format!("`{dim}` = {n} outside 1..=5"));
        }
        *slot = n as u8;
    }
    let rationale = obj.get("rationale").and_then(Value::as_str).unwrap_or_default().to_string();
    Ok(AuditScore {
        item_id: item_id.to_string(),
        faithfulness: scores[0],
        logical_consistency: scores[1],
        evidence_grounding: scores[2],
        rationale,
    })
}

fn evidence_text(t: &Trajectory) -> String {
    match &t.observation {
        Some(obs) => observation_to_prompt_block(obs).text,
        None => "(no tool was used)".to_string(),
    }
}

fn reasoning_text(t: &Trajectory) -> String {
    t.turns
        .iter()
        .filter_map(|turn| turn.parsed.think_text.as_deref())
        .map(str::trim)
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn audit_request(t: &Trajectory, item: &NewsItem, templates: &PromptTemplateSet, attempt: usize) -> ModelBackendRequest {
    let prediction = t.verdict.map(|v| v.as_str()).unwrap_or("none");
    let prompt = render(
        &templates.audit,
        &[
            ("metadata", &item.metadata_text),
            ("transcript", &item.audio_transcript),
            ("evidence", &evidence_text(t)),
            ("prediction", prediction),
            ("reasoning", &reasoning_text(t)),
        ],
    );
    ModelBackendRequest {
        messages: vec![ChatMessage::new(Role::User, prompt)],
        max_tokens: MAX_RESPONSE_TOKENS,
        temperature: 0.0,
        want_logprobs: false,
        seed: Some(attempt as u64),
        tag: Some(RequestTag {
            item_id: item.id.clone(),
            stage: "audit".into(),
            rollout: Some(attempt),
        }),
    }
}

/// Scores the reasoning of a correctly predicted trajectory with a judge
/// model. An unparseable reply is retried once.
pub fn audit_reasoning(
    t: &Trajectory,
    item: &NewsItem,
    judge: &dyn ModelBackend,
    templates: &PromptTemplateSet,
) -> Result<AuditScore, AuditError> {
    if t.verdict != Some(item.label) {
        return Err(AuditError::IncorrectPrediction(item.id.clone()));
    }
    let mut last = String::new();
    for attempt in 0..2 {
        let reply = judge.complete(&audit_request(t, item, templates, attempt))?;
        match parse_judge_reply(&item.id, &reply.text) {
            Ok(score) => return Ok(score),
            Err(e) => last = e,
        }
    }
    Err(AuditError::JudgeUnparseable(format!("{}: {last}", item.id)))
}

/// Audits the correctly predicted pairs concurrently, keeping input order.
/// Incorrect predictions are skipped, not errors.
pub fn audit_batch(
    pairs: &[(&Trajectory, &NewsItem)],
    judge: &dyn ModelBackend,
    templates: &PromptTemplateSet,
    concurrency: usize,
) -> Vec<Result<AuditScore, AuditError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        pairs
            .par_iter()
            .filter(|(t, item)| t.verdict == Some(item.label))
            .map(|(t, item)| audit_reasoning(t, item, judge, templates))
            .collect()
    })
}
