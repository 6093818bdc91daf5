//! Supervised fine-tuning corpus construction: teacher trajectories,
//! rule-based filtering plus an external review pass, and conversation
//! emission with student-facing prompts.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{
    build_stage1_prompt, build_stage2_prompt, run_batch, ChatMessage, EpisodeContext, EpisodeError, PromptError,
    PromptTemplateSet, RequestOptions, Role,
};
use crate::parser::parse_tool_action;
use crate::tools::ToolError;
use crate::types::{assert_trajectory_wellformed, NewsItem, Trajectory};

/// Text that only teacher prompts contain; its presence in emitted data means
/// the ground-truth label leaked.
pub const LABEL_REVEAL_MARKER: &str = "Reference label";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectionCode {
    MalformedStructure,
    InvalidToolAction,
    WrongFinalDecision,
    HallucinationFlagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeRecord {
    pub item_id: String,
    pub item: NewsItem,
    pub trajectory: Trajectory,
    pub teacher_model: String,
    pub kept: bool,
    #[serde(default)]
    pub rejection_codes: Vec<RejectionCode>,
}

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("IO: {0}")]
    Io(String),
    #[error("SCHEMA: line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("UNKEPT_RECORD: {0}")]
    UnkeptRecord(String),
    #[error("LABEL_LEAK: emitted conversation for {0} reveals the label")]
    LabelLeak(String),
}

impl ForgeError {
    pub fn code(&self) -> &'static str {
        match self {
            ForgeError::Episode(e) => e.code(),
            ForgeError::Prompt(e) => e.code(),
            ForgeError::Io(_) => "IO",
            ForgeError::Schema { .. } => "SCHEMA",
            ForgeError::UnkeptRecord(_) => "UNKEPT_RECORD",
            ForgeError::LabelLeak(_) => "LABEL_LEAK",
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ForgeError {
    ForgeError::Io(format!("{}: {e}", path.display()))
}

/// One episode per item against the teacher; records come back unfiltered,
/// in input order. `ctx.templates` should be the label-revealing set.
pub fn generate_teacher_trajectories(
    items: &[NewsItem],
    ctx: &EpisodeContext<'_>,
    teacher_model: &str,
) -> Result<Vec<ForgeRecord>, ForgeError> {
    let trajectories = run_batch(items, ctx);
    items
        .iter()
        .zip(trajectories)
        .map(|(item, t)| {
            Ok(ForgeRecord {
                item_id: item.id.clone(),
                item: item.clone(),
                trajectory: t?,
                teacher_model: teacher_model.to_string(),
                kept: false,
                rejection_codes: vec![],
            })
        })
        .collect()
}

fn has_invalid_tool_action(t: &Trajectory) -> bool {
    let unparseable = t
        .turns
        .iter()
        .filter_map(|turn| turn.parsed.tool_call_raw.as_deref())
        .any(|raw| parse_tool_action(raw).is_err());
    let over_budget = t
        .observation
        .as_ref()
        .and_then(|o| o.error_note.as_deref())
        .is_some_and(|note| note.starts_with(ToolError::BudgetExhausted.code()));
    unparseable || over_budget || !t.refused_calls.is_empty()
}

/// Rejection codes for one record, sorted. Hallucination flags come only from
/// the review set.
pub fn rejection_codes(record: &ForgeRecord, flagged: &BTreeSet<String>) -> Vec<RejectionCode> {
    let t = &record.trajectory;
    let mut codes = Vec::new();
    if !t.format_verdict.well_formed || !assert_trajectory_wellformed(t).is_empty() {
        codes.push(RejectionCode::MalformedStructure);
    }
    if has_invalid_tool_action(t) {
        codes.push(RejectionCode::InvalidToolAction);
    }
    if t.verdict != Some(record.item.label) {
        codes.push(RejectionCode::WrongFinalDecision);
    }
    if flagged.contains(&record.item_id) {
        codes.push(RejectionCode::HallucinationFlagged);
    }
    codes
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partition {
    pub kept: Vec<ForgeRecord>,
    pub rejected: Vec<ForgeRecord>,
}

pub fn filter_rules(records: Vec<ForgeRecord>, flagged: &BTreeSet<String>) -> Partition {
    let mut out = Partition::default();
    for mut r in records {
        r.rejection_codes = rejection_codes(&r, flagged);
        r.kept = r.rejection_codes.is_empty();
        if r.kept {
            out.kept.push(r);
        } else {
            out.rejected.push(r);
        }
    }
    out
}

#[derive(Deserialize)]
struct ReviewRow {
    item_id: String,
    flag: bool,
}

/// Reads manual review JSONL rows `{"item_id", "flag"}`; returns flagged ids.
pub fn load_review(path: &Path) -> Result<BTreeSet<String>, ForgeError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut flagged = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: ReviewRow = serde_json::from_str(line).map_err(|e| ForgeError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        if row.flag {
            flagged.insert(row.item_id);
        }
    }
    Ok(flagged)
}

pub fn read_records(path: &Path) -> Result<Vec<ForgeRecord>, ForgeError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ForgeError::Schema {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_records(path: &Path, records: &[ForgeRecord]) -> Result<(), ForgeError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| io_err(path, e))?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    pub item_id: String,
    pub dataset: String,
    pub messages: Vec<ChatMessage>,
    /// Every assistant and tool message joined by newlines: the span the
    /// likelihood objective covers.
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SftStats {
    pub total: usize,
    pub tool_used: BTreeMap<String, usize>,
    pub per_dataset: BTreeMap<String, usize>,
}

/// Rebuilds the conversation a student would see: student prompts (no
/// label), the teacher's raw turns, and the observation block.
pub fn to_sft_example(record: &ForgeRecord, student: &PromptTemplateSet) -> Result<SftExample, ForgeError> {
    let t = &record.trajectory;
    let first = match t.turns.first() {
        Some(turn) if record.kept => &turn.raw_text,
        _ => return Err(ForgeError::UnkeptRecord(record.item_id.clone())),
    };
    let opts = RequestOptions::default();
    let messages = match &t.observation {
        Some(obs) => {
            let mut m = build_stage2_prompt(&record.item, first, obs, student, &opts)?.messages;
            if let Some(second) = t.turns.get(1) {
                m.push(ChatMessage::new(Role::Assistant, second.raw_text.clone()));
            }
            m
        }
        None => {
            let mut m = build_stage1_prompt(&record.item, student, &opts)?.messages;
            m.push(ChatMessage::new(Role::Assistant, first.clone()));
            m
        }
    };
    if messages.iter().any(|m| m.text.contains(LABEL_REVEAL_MARKER)) {
        return Err(ForgeError::LabelLeak(record.item_id.clone()));
    }
    let target = messages
        .iter()
        .filter(|m| matches!(m.role, Role::Assistant | Role::Tool))
        .map(|m| m.text.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    Ok(SftExample {
        item_id: record.item_id.clone(),
        dataset: record.item.source_dataset.as_str().to_string(),
        messages,
        target,
    })
}

/// Writes one conversation per line and returns usage statistics.
pub fn emit_sft_dataset(records: &[ForgeRecord], student: &PromptTemplateSet, out_path: &Path) -> Result<SftStats, ForgeError> {
    let mut stats = SftStats::default();
    let mut buf = Vec::new();
    for r in records {
        let ex = to_sft_example(r, student)?;
        serde_json::to_writer(&mut buf, &ex).map_err(|e| io_err(out_path, e))?;
        buf.push(b'\n');
        stats.total += 1;
        let tool = r.trajectory.action.as_ref().map(|a| a.kind().as_str()).unwrap_or("none");
        *stats.tool_used.entry(tool.to_string()).or_default() += 1;
        *stats.per_dataset.entry(ex.dataset).or_default() += 1;
    }
    let mut f = std::fs::File::create(out_path).map_err(|e| io_err(out_path, e))?;
    f.write_all(&buf).map_err(|e| io_err(out_path, e))?;
    Ok(stats)
}
