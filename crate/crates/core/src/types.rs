//! Domain types shared by every stage of the pipeline.
//!
//! Everything here is a plain value object: once built it is never mutated
//! behind a shared reference, so items, trajectories and groups can be handed
//! to concurrent episodes freely.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::parser::{FormatVerdict, ParsedTurn};

/// Binary veracity label. `Fake` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    Real,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Fake => "fake",
            Label::Real => "real",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Fake => Label::Real,
            Label::Real => Label::Fake,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ();

    /// Case-insensitive, whitespace-trimmed, exact match.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("fake") {
            Ok(Label::Fake)
        } else if t.eq_ignore_ascii_case("real") {
            Ok(Label::Real)
        } else {
            Err(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceDataset {
    FakeSV,
    FakeTT,
    FakeVV,
    Synthetic,
}

impl SourceDataset {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceDataset::FakeSV => "FakeSV",
            SourceDataset::FakeTT => "FakeTT",
            SourceDataset::FakeVV => "FakeVV",
            SourceDataset::Synthetic => "Synthetic",
        }
    }
}

impl FromStr for SourceDataset {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fakesv" => Ok(SourceDataset::FakeSV),
            "fakett" => Ok(SourceDataset::FakeTT),
            "fakevv" => Ok(SourceDataset::FakeVV),
            "synthetic" => Ok(SourceDataset::Synthetic),
            _ => Err(()),
        }
    }
}

/// One multimodal sample: video, speech transcript and text metadata.
///
/// Serializes to exactly one manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    pub video_path: String,
    #[serde(rename = "duration_s")]
    pub video_duration_s: f64,
    #[serde(rename = "transcript")]
    pub audio_transcript: String,
    pub metadata_text: String,
    pub label: Label,
    pub published_at: DateTime<Utc>,
    #[serde(rename = "dataset")]
    pub source_dataset: SourceDataset,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ItemError {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` has bad timestamp {value:?}")]
    BadTimestamp { field: &'static str, value: String },
    #[error("field `{field}` has bad label {value:?}")]
    BadLabel { field: &'static str, value: String },
    #[error("field `{field}` is invalid: {reason}")]
    BadValue { field: &'static str, reason: String },
    #[error("row is not a JSON object")]
    NotAnObject,
}

impl ItemError {
    pub fn field(&self) -> Option<&'static str> {
        match self {
            ItemError::MissingField(f) => Some(f),
            ItemError::BadTimestamp { field, .. }
            | ItemError::BadLabel { field, .. }
            | ItemError::BadValue { field, .. } => Some(field),
            ItemError::NotAnObject => None,
        }
    }
}

fn str_field<'a>(obj: &'a serde_json::Map<String, Value>, name: &'static str) -> Result<&'a str, ItemError> {
    match obj.get(name) {
        None | Some(Value::Null) => Err(ItemError::MissingField(name)),
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(ItemError::BadValue {
            field: name,
            reason: format!("expected string, got {other}"),
        }),
    }
}

/// Validates one untyped manifest row into a [`NewsItem`].
///
/// Labels and dataset names are matched case-insensitively. Items without a
/// parseable `published_at` are rejected since the temporal split needs it.
pub fn validate_news_item(raw: &Value) -> Result<NewsItem, ItemError> {
    let obj = raw.as_object().ok_or(ItemError::NotAnObject)?;

    let id = str_field(obj, "id")?;
    if id.trim().is_empty() {
        return Err(ItemError::BadValue {
            field: "id",
            reason: "empty id".into(),
        });
    }
    let video_path = str_field(obj, "video_path")?;

    let duration = match obj.get("duration_s") {
        None | Some(Value::Null) => return Err(ItemError::MissingField("duration_s")),
        Some(v) => v.as_f64().ok_or_else(|| ItemError::BadValue {
            field: "duration_s",
            reason: format!("expected number, got {v}"),
        })?,
    };
    if !duration.is_finite() || duration < 0.0 {
        return Err(ItemError::BadValue {
            field: "duration_s",
            reason: format!("duration must be finite and >= 0, got {duration}"),
        });
    }

    let transcript = str_field(obj, "transcript")?;
    let metadata_text = str_field(obj, "metadata_text")?;

    let label_raw = str_field(obj, "label")?;
    let label = label_raw.parse::<Label>().map_err(|_| ItemError::BadLabel {
        field: "label",
        value: label_raw.to_string(),
    })?;

    let ts_raw = str_field(obj, "published_at")?;
    let published_at = DateTime::parse_from_rfc3339(ts_raw.trim())
        .map_err(|_| ItemError::BadTimestamp {
            field: "published_at",
            value: ts_raw.to_string(),
        })?
        .with_timezone(&Utc);

    let dataset_raw = str_field(obj, "dataset")?;
    let source_dataset = dataset_raw.parse::<SourceDataset>().map_err(|_| ItemError::BadValue {
        field: "dataset",
        reason: format!("unknown dataset {dataset_raw:?}"),
    })?;

    Ok(NewsItem {
        id: id.to_string(),
        video_path: video_path.to_string(),
        video_duration_s: duration,
        audio_transcript: transcript.to_string(),
        metadata_text: metadata_text.to_string(),
        label,
        published_at,
        source_dataset,
    })
}

/// Position of an episode in the two-stage loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentStage {
    Initial,
    AwaitingTool,
    Refining,
    Done,
}

impl AgentStage {
    pub fn can_advance_to(self, next: AgentStage) -> bool {
        use AgentStage::*;
        matches!(
            (self, next),
            (Initial, AwaitingTool) | (Initial, Done) | (AwaitingTool, Refining) | (Refining, Done)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal stage transition {from:?} -> {to:?}")]
pub struct TransitionError {
    pub from: AgentStage,
    pub to: AgentStage,
}

/// Explicit per-episode state: stage, turn counter, remaining tool budgets and
/// the observations gathered so far.
///
/// A tool missing from `tool_budget_remaining` has no limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub stage: AgentStage,
    pub turn_index: u32,
    pub tool_budget_remaining: BTreeMap<ToolKind, u32>,
    pub accumulated_observations: Vec<Observation>,
}

impl AgentState {
    pub fn new(tool_budget_remaining: BTreeMap<ToolKind, u32>) -> Self {
        Self {
            stage: AgentStage::Initial,
            turn_index: 0,
            tool_budget_remaining,
            accumulated_observations: Vec::new(),
        }
    }

    pub fn advance(&mut self, next: AgentStage) -> Result<(), TransitionError> {
        if !self.stage.can_advance_to(next) {
            return Err(TransitionError {
                from: self.stage,
                to: next,
            });
        }
        self.stage = next;
        Ok(())
    }

    /// Consumes one unit of budget for `tool`. Returns false (and leaves the
    /// budget untouched) when it is already exhausted.
    pub fn try_consume(&mut self, tool: ToolKind) -> bool {
        match self.tool_budget_remaining.get_mut(&tool) {
            None => true,
            Some(0) => false,
            Some(n) => {
                *n -= 1;
                true
            }
        }
    }

    pub fn remaining(&self, tool: ToolKind) -> Option<u32> {
        self.tool_budget_remaining.get(&tool).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ToolKind {
    FactProbe,
    ClipScout,
}

impl ToolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolKind::FactProbe => "FactProbe",
            ToolKind::ClipScout => "ClipScout",
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tool identity plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool")]
pub enum ToolAction {
    FactProbe { query: String },
    ClipScout { start_s: f64, end_s: f64 },
}

impl ToolAction {
    pub fn kind(&self) -> ToolKind {
        match self {
            ToolAction::FactProbe { .. } => ToolKind::FactProbe,
            ToolAction::ClipScout { .. } => ToolKind::ClipScout,
        }
    }

    /// Checks the parameter invariants; returns a reason on failure.
    pub fn check(&self) -> Result<(), String> {
        match self {
            ToolAction::FactProbe { query } => {
                if query.trim().is_empty() {
                    Err("query is empty".into())
                } else {
                    Ok(())
                }
            }
            ToolAction::ClipScout { start_s, end_s } => {
                if !start_s.is_finite() || !end_s.is_finite() {
                    Err("interval bounds must be finite".into())
                } else if *start_s < 0.0 {
                    Err(format!("start_s must be >= 0, got {start_s}"))
                } else if start_s >= end_s {
                    Err(format!("start_s ({start_s}) must be < end_s ({end_s})"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Four sampled frames composed into one 2x2 image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub interval: (f64, f64),
    pub sample_timestamps: Vec<f64>,
    pub image: String,
    pub width: u32,
    pub height: u32,
}

/// What a tool invocation returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub tool_id: ToolKind,
    pub ok: bool,
    pub text_report: Option<String>,
    pub frame_grid: Option<FrameGrid>,
    pub error_note: Option<String>,
    pub latency_ms: u64,
}

impl Observation {
    pub fn failure(tool_id: ToolKind, note: impl Into<String>, latency_ms: u64) -> Self {
        Self {
            tool_id,
            ok: false,
            text_report: None,
            frame_grid: None,
            error_note: Some(note.into()),
            latency_ms,
        }
    }

    /// Whether the payload fields agree with `ok` and `tool_id`.
    pub fn is_consistent(&self) -> bool {
        if self.ok {
            match self.tool_id {
                ToolKind::FactProbe => self.text_report.is_some() && self.frame_grid.is_none(),
                ToolKind::ClipScout => self.frame_grid.is_some() && self.text_report.is_none(),
            }
        } else {
            self.error_note.is_some()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: String,
    pub raw_text: String,
    pub parsed: ParsedTurn,
}

/// A tool request the orchestrator refused without dispatching, e.g. a second
/// call emitted in the refinement turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefusedCall {
    pub action: ToolAction,
    pub observation: Observation,
}

/// Sequence-level log-probability masses of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLogProbs {
    pub sum_logp_policy: f64,
    pub sum_logp_rollout: f64,
    pub sum_logp_reference: f64,
    pub token_count: u32,
}

impl TrajectoryLogProbs {
    pub fn is_valid(&self, max_tokens: u32) -> bool {
        self.sum_logp_policy.is_finite()
            && self.sum_logp_rollout.is_finite()
            && self.sum_logp_reference.is_finite()
            && self.token_count > 0
            && self.token_count <= max_tokens
    }
}

/// One full agent episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub item_id: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub turns: Vec<Turn>,
    pub action: Option<ToolAction>,
    pub observation: Option<Observation>,
    #[serde(default)]
    pub refused_calls: Vec<RefusedCall>,
    pub verdict: Option<Label>,
    pub token_logprobs: Option<TrajectoryLogProbs>,
    pub format_verdict: FormatVerdict,
    #[serde(default)]
    pub stage_trace: Vec<AgentStage>,
}

impl Trajectory {
    /// A tool counts as used when an action was chosen and its dispatch was
    /// attempted, whatever the outcome.
    pub fn tool_used(&self) -> bool {
        self.action.is_some() && self.observation.is_some()
    }
}

pub const OBS_MISSING: &str = "OBS_MISSING";
pub const OBS_WITHOUT_ACTION: &str = "OBS_WITHOUT_ACTION";
pub const OBS_INCONSISTENT: &str = "OBS_INCONSISTENT";
pub const OBS_TOOL_MISMATCH: &str = "OBS_TOOL_MISMATCH";
pub const TURN_COUNT: &str = "TURN_COUNT";
pub const VERDICT_WITHOUT_ANSWER: &str = "VERDICT_WITHOUT_ANSWER";
pub const VERDICT_MISSING: &str = "VERDICT_MISSING";
pub const LOGPROBS_INVALID: &str = "LOGPROBS_INVALID";
pub const BAD_ACTION_PARAMS: &str = "BAD_ACTION_PARAMS";

/// Lists every broken trajectory invariant; empty means well-formed.
pub fn assert_trajectory_wellformed(t: &Trajectory) -> Vec<&'static str> {
    let mut v = Vec::new();
    match (&t.action, &t.observation) {
        (Some(_), None) => v.push(OBS_MISSING),
        (None, Some(_)) => v.push(OBS_WITHOUT_ACTION),
        (Some(a), Some(o)) => {
            if a.kind() != o.tool_id {
                v.push(OBS_TOOL_MISMATCH);
            }
            if !o.is_consistent() {
                v.push(OBS_INCONSISTENT);
            }
        }
        (None, None) => {}
    }
    if let Some(a) = &t.action {
        if a.check().is_err() {
            v.push(BAD_ACTION_PARAMS);
        }
    }
    if !(1..=2).contains(&t.turns.len()) {
        v.push(TURN_COUNT);
    }
    match (t.verdict.is_some(), t.format_verdict.answer_parseable) {
        (true, false) => v.push(VERDICT_WITHOUT_ANSWER),
        (false, true) => v.push(VERDICT_MISSING),
        _ => {}
    }
    if let Some(lp) = &t.token_logprobs {
        if !(lp.sum_logp_policy.is_finite()
            && lp.sum_logp_rollout.is_finite()
            && lp.sum_logp_reference.is_finite()
            && lp.token_count > 0)
        {
            v.push(LOGPROBS_INVALID);
        }
    }
    v
}

/// Coefficients of the gated reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub lambda_risk: f64,
    pub alpha_fp: f64,
    pub gamma_fn: f64,
    pub r_tool_plus: f64,
    pub r_tool_minus: f64,
    pub r_format_valid: f64,
    pub r_acc_correct: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda_risk: 1.0,
            alpha_fp: 1.0,
            gamma_fn: 1.0,
            r_tool_plus: 0.2,
            r_tool_minus: 0.2,
            r_format_valid: 0.5,
            r_acc_correct: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        let nonneg = [
            ("lambda_risk", self.lambda_risk),
            ("alpha_fp", self.alpha_fp),
            ("gamma_fn", self.gamma_fn),
            ("r_tool_plus", self.r_tool_plus),
            ("r_tool_minus", self.r_tool_minus),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [("r_format_valid", self.r_format_valid), ("r_acc_correct", self.r_acc_correct)] {
            if !v.is_finite() {
                return Err(format!("{name} must be finite, got {v}"));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_GROUP_SIZE: usize = 8;
pub const DEFAULT_BETA: f64 = 0.04;

/// G rollouts for one item, plus their rewards and normalized advantages once
/// scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryGroup {
    pub item_id: String,
    pub truth: Label,
    pub trajectories: Vec<Trajectory>,
    #[serde(default)]
    pub rewards: Vec<f64>,
    #[serde(default)]
    pub advantages: Vec<f64>,
    pub beta: f64,
}

impl TrajectoryGroup {
    pub fn is_scored(&self) -> bool {
        let g = self.trajectories.len();
        g >= 2 && self.rewards.len() == g && self.advantages.len() == g
    }
}
