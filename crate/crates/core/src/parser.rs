//! Parser and validator for tagged model turns.
//!
//! A turn is free text carrying up to three ASCII-tagged blocks:
//! `<think>…</think>`, `<tool_call>…</tool_call>` and `<answer>…</answer>`.
//! Parsing never fails; anything unexpected is recorded as an anomaly and
//! surfaces later as a [`FormatViolation`].

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::types::{Label, ToolAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Think,
    ToolCall,
    Answer,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::Think, Tag::ToolCall, Tag::Answer];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Think => "think",
            Tag::ToolCall => "tool_call",
            Tag::Answer => "answer",
        }
    }

    pub fn open(self) -> &'static str {
        match self {
            Tag::Think => "<think>",
            Tag::ToolCall => "<tool_call>",
            Tag::Answer => "<answer>",
        }
    }

    pub fn close(self) -> &'static str {
        match self {
            Tag::Think => "</think>",
            Tag::ToolCall => "</tool_call>",
            Tag::Answer => "</answer>",
        }
    }
}

/// Byte range of one captured block, tags included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSpan {
    pub tag: Tag,
    pub byte_start: usize,
    pub byte_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TagAnomaly {
    /// Opening tag with no matching close before end of input.
    Unclosed { tag: Tag, at: usize },
    /// Closing tag with no open block.
    StrayClose { tag: Tag, at: usize },
    /// Second block of a tag already captured; only the first is kept.
    Duplicate { tag: Tag, at: usize },
    /// Non-whitespace text outside any block.
    StrayText { start: usize, end: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedTurn {
    pub think_text: Option<String>,
    pub tool_call_raw: Option<String>,
    pub answer_raw: Option<String>,
    pub span_map: Vec<TagSpan>,
    #[serde(default)]
    pub anomalies: Vec<TagAnomaly>,
}

impl ParsedTurn {
    pub fn content(&self, tag: Tag) -> Option<&str> {
        match tag {
            Tag::Think => self.think_text.as_deref(),
            Tag::ToolCall => self.tool_call_raw.as_deref(),
            Tag::Answer => self.answer_raw.as_deref(),
        }
    }

    fn slot(&mut self, tag: Tag) -> &mut Option<String> {
        match tag {
            Tag::Think => &mut self.think_text,
            Tag::ToolCall => &mut self.tool_call_raw,
            Tag::Answer => &mut self.answer_raw,
        }
    }

    pub fn span(&self, tag: Tag) -> Option<&TagSpan> {
        self.span_map.iter().find(|s| s.tag == tag)
    }
}

enum TagHit {
    Open(Tag),
    Close(Tag),
}

fn next_tag(raw: &str, from: usize) -> Option<(usize, TagHit)> {
    let bytes = raw.as_bytes();
    let mut i = from;
    while let Some(off) = raw[i..].find('<') {
        let p = i + off;
        let rest = &raw[p..];
        for tag in Tag::ALL {
            if rest.starts_with(tag.open()) {
                return Some((p, TagHit::Open(tag)));
            }
            if rest.starts_with(tag.close()) {
                return Some((p, TagHit::Close(tag)));
            }
        }
        i = p + 1;
        if i >= bytes.len() {
            break;
        }
    }
    None
}

fn note_gap(raw: &str, start: usize, end: usize, out: &mut Vec<TagAnomaly>) {
    if start < end && !raw[start..end].trim().is_empty() {
        out.push(TagAnomaly::StrayText { start, end });
    }
}

/// Splits one raw turn into its tagged blocks. Total over all inputs.
pub fn parse_turn(raw: &str) -> ParsedTurn {
    let mut turn = ParsedTurn::default();
    let mut pos = 0;
    while let Some((p, hit)) = next_tag(raw, pos) {
        let mut gap_anomalies = Vec::new();
        note_gap(raw, pos, p, &mut gap_anomalies);
        turn.anomalies.extend(gap_anomalies);
        match hit {
            TagHit::Close(tag) => {
                turn.anomalies.push(TagAnomaly::StrayClose { tag, at: p });
                pos = p + tag.close().len();
            }
            TagHit::Open(tag) => {
                let body_start = p + tag.open().len();
                let Some(off) = raw[body_start..].find(tag.close()) else {
                    turn.anomalies.push(TagAnomaly::Unclosed { tag, at: p });
                    return turn;
                };
                let body_end = body_start + off;
                let end = body_end + tag.close().len();
                let slot = turn.slot(tag);
                if slot.is_some() {
                    turn.anomalies.push(TagAnomaly::Duplicate { tag, at: p });
                } else {
                    *slot = Some(raw[body_start..body_end].to_string());
                    turn.span_map.push(TagSpan {
                        tag,
                        byte_start: p,
                        byte_end: end,
                    });
                }
                pos = end;
            }
        }
    }
    let mut tail = Vec::new();
    note_gap(raw, pos, raw.len(), &mut tail);
    turn.anomalies.extend(tail);
    turn
}

/// Re-emits the captured blocks, in span order, with no text between them.
pub fn render_turn(turn: &ParsedTurn) -> String {
    let mut out = String::new();
    for span in &turn.span_map {
        if let Some(body) = turn.content(span.tag) {
            out.push_str(span.tag.open());
            out.push_str(body);
            out.push_str(span.tag.close());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FormatViolation {
    MissingThink,
    MissingAnswerAndTool,
    UnclosedTag,
    DuplicateTag,
    TagOrder,
    BadToolJson,
    BadAnswerToken,
    TrailingGarbage,
}

impl FormatViolation {
    pub fn code(self) -> &'static str {
        match self {
            FormatViolation::MissingThink => "MISSING_THINK",
            FormatViolation::MissingAnswerAndTool => "MISSING_ANSWER_AND_TOOL",
            FormatViolation::UnclosedTag => "UNCLOSED_TAG",
            FormatViolation::DuplicateTag => "DUPLICATE_TAG",
            FormatViolation::TagOrder => "TAG_ORDER",
            FormatViolation::BadToolJson => "BAD_TOOL_JSON",
            FormatViolation::BadAnswerToken => "BAD_ANSWER_TOKEN",
            FormatViolation::TrailingGarbage => "TRAILING_GARBAGE",
        }
    }
}

/// Which blocks a turn must carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageExpectation {
    /// think, then exactly one of tool_call / answer.
    Stage1,
    /// think, then answer.
    Stage2,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FormatVerdict {
    pub well_formed: bool,
    pub answer_parseable: bool,
    pub violations: Vec<FormatViolation>,
}

impl FormatVerdict {
    fn from_violations(mut violations: Vec<FormatViolation>, answer_parseable: bool) -> Self {
        violations.sort();
        violations.dedup();
        Self {
            well_formed: violations.is_empty(),
            answer_parseable,
            violations,
        }
    }

    /// Combines per-turn verdicts of one trajectory. The answer channel is
    /// taken from the last turn.
    pub fn merge(verdicts: &[FormatVerdict]) -> FormatVerdict {
        let violations = verdicts.iter().flat_map(|v| v.violations.iter().copied()).collect();
        let answer_parseable = verdicts.last().is_some_and(|v| v.answer_parseable);
        Self::from_violations(violations, answer_parseable)
    }
}

/// Checks one parsed turn against the grammar for its stage.
pub fn validate_turn(turn: &ParsedTurn, expect: StageExpectation) -> FormatVerdict {
    let mut v = Vec::new();
    for a in &turn.anomalies {
        v.push(match a {
            TagAnomaly::Unclosed { .. } | TagAnomaly::StrayClose { .. } => FormatViolation::UnclosedTag,
            TagAnomaly::Duplicate { .. } => FormatViolation::DuplicateTag,
            TagAnomaly::StrayText { .. } => FormatViolation::TrailingGarbage,
        });
    }

    let has_tool = turn.tool_call_raw.is_some();
    let has_answer = turn.answer_raw.is_some();
    if turn.think_text.is_none() {
        v.push(FormatViolation::MissingThink);
    }
    match expect {
        StageExpectation::Stage1 => {
            if !has_tool && !has_answer {
                v.push(FormatViolation::MissingAnswerAndTool);
            }
            if has_tool && has_answer {
                v.push(FormatViolation::TagOrder);
            }
        }
        StageExpectation::Stage2 => {
            if !has_answer {
                v.push(FormatViolation::MissingAnswerAndTool);
            }
            if has_tool {
                v.push(FormatViolation::TagOrder);
            }
        }
    }
    if let Some(think) = turn.span(Tag::Think) {
        let action_first = turn
            .span_map
            .iter()
            .any(|s| s.tag != Tag::Think && s.byte_start < think.byte_start);
        if action_first {
            v.push(FormatViolation::TagOrder);
        }
    }
    if let Some(raw) = &turn.tool_call_raw {
        if parse_tool_action(raw).is_err() {
            v.push(FormatViolation::BadToolJson);
        }
    }
    let mut answer_parseable = false;
    if let Some(ans) = &turn.answer_raw {
        if parse_answer_label(ans).is_ok() {
            answer_parseable = true;
        } else {
            v.push(FormatViolation::BadAnswerToken);
        }
    }
    FormatVerdict::from_violations(v, answer_parseable)
}

/// Validates every turn against one expectation and merges the result.
pub fn validate_format(turns: &[ParsedTurn], expect: StageExpectation) -> FormatVerdict {
    let per_turn: Vec<_> = turns.iter().map(|t| validate_turn(t, expect)).collect();
    if per_turn.is_empty() {
        return FormatVerdict::from_violations(
            vec![FormatViolation::MissingThink, FormatViolation::MissingAnswerAndTool],
            false,
        );
    }
    FormatVerdict::merge(&per_turn)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("BAD_ANSWER_TOKEN: {0:?}")]
pub struct BadAnswerToken(pub String);

/// Exact (trimmed, case-insensitive) match against `fake` / `real`.
pub fn parse_answer_label(answer_raw: &str) -> Result<Label, BadAnswerToken> {
    answer_raw
        .parse::<Label>()
        .map_err(|_| BadAnswerToken(answer_raw.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolParseError {
    #[error("BAD_TOOL_JSON: {0}")]
    BadToolJson(String),
    #[error("UNKNOWN_TOOL: {0}")]
    UnknownTool(String),
    #[error("BAD_PARAMS: {0}")]
    BadParams(String),
}

impl ToolParseError {
    pub fn code(&self) -> &'static str {
        match self {
            ToolParseError::BadToolJson(_) => "BAD_TOOL_JSON",
            ToolParseError::UnknownTool(_) => "UNKNOWN_TOOL",
            ToolParseError::BadParams(_) => "BAD_PARAMS",
        }
    }
}

fn number_field(obj: &serde_json::Map<String, Value>, name: &str) -> Result<f64, ToolParseError> {
    match obj.get(name) {
        Some(Value::Number(n)) => n
            .as_f64()
            .ok_or_else(|| ToolParseError::BadParams(format!("`{name}` is not representable"))),
        Some(other) => Err(ToolParseError::BadParams(format!("`{name}` must be a JSON number, got {other}"))),
        None => Err(ToolParseError::BadParams(format!("missing `{name}`"))),
    }
}

/// Decodes a `<tool_call>` body into a [`ToolAction`].
pub fn parse_tool_action(tool_call_raw: &str) -> Result<ToolAction, ToolParseError> {
    let value: Value =
        serde_json::from_str(tool_call_raw.trim()).map_err(|e| ToolParseError::BadToolJson(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(ToolParseError::BadToolJson("payload is not a JSON object".into()));
    };
    let tool = match obj.get("tool") {
        Some(Value::String(s)) => s.as_str(),
        Some(other) => return Err(ToolParseError::UnknownTool(other.to_string())),
        None => return Err(ToolParseError::UnknownTool("<missing>".into())),
    };
    let action = match tool {
        "FactProbe" => match obj.get("query") {
            Some(Value::String(q)) => ToolAction::FactProbe { query: q.clone() },
            Some(other) => return Err(ToolParseError::BadParams(format!("`query` must be a string, got {other}"))),
            None => return Err(ToolParseError::BadParams("missing `query`".into())),
        },
        "ClipScout" => ToolAction::ClipScout {
            start_s: number_field(&obj, "start_s")?,
            end_s: number_field(&obj, "end_s")?,
        },
        other => return Err(ToolParseError::UnknownTool(other.to_string())),
    };
    action.check().map_err(ToolParseError::BadParams)?;
    Ok(action)
}
