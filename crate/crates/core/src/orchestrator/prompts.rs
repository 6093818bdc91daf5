//! Prompt templates and deterministic request assembly for both stages.
//!
//! Templates use `{{name}}` placeholders. When a prompt is over the token
//! limit the transcript is shortened first, then the metadata; the
//! instruction text of the templates is never cut.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{estimate_tokens, ChatMessage, ModelBackendRequest, RequestTag, Role, MAX_PROMPT_TOKENS, MAX_RESPONSE_TOKENS};
use crate::tools::{format_seconds, observation_to_prompt_block};
use crate::types::{NewsItem, Observation};

pub const TRUNCATION_MARKER: &str = " [TRUNCATED]";

const STAGE1_SYSTEM: &str = include_str!("../../assets/templates/stage1_system.txt");
const STAGE1_USER: &str = include_str!("../../assets/templates/stage1_user.txt");
const STAGE1_USER_TEACHER: &str = include_str!("../../assets/templates/stage1_user_teacher.txt");
const STAGE2_USER: &str = include_str!("../../assets/templates/stage2_user.txt");
const AUDIT: &str = include_str!("../../assets/templates/audit.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("TEMPLATE_PLACEHOLDER_MISSING: template `{template}` must contain {{{{{name}}}}} exactly once (found {count})")]
    PlaceholderMissing {
        template: &'static str,
        name: &'static str,
        count: usize,
    },
    #[error("TEMPLATE_UNKNOWN_PLACEHOLDER: template `{template}` uses undeclared {{{{{name}}}}}")]
    UnknownPlaceholder { template: &'static str, name: String },
    #[error("PROMPT_TOO_LONG: instruction skeleton alone needs {0} tokens")]
    SkeletonTooLong(u32),
    #[error("IO: {0}")]
    Io(String),
}

impl PromptError {
    pub fn code(&self) -> &'static str {
        match self {
            PromptError::PlaceholderMissing { .. } => "TEMPLATE_PLACEHOLDER_MISSING",
            PromptError::UnknownPlaceholder { .. } => "TEMPLATE_UNKNOWN_PLACEHOLDER",
            PromptError::SkeletonTooLong(_) => "PROMPT_TOO_LONG",
            PromptError::Io(_) => "IO",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplateSet {
    pub stage1_system: String,
    pub stage1_user: String,
    pub stage2_user: String,
    pub audit: String,
    /// Teacher templates carry the ground-truth label in the stage-1 prompt.
    #[serde(default)]
    pub reveals_label: bool,
}

impl Default for PromptTemplateSet {
    fn default() -> Self {
        Self::student()
    }
}

/// Scans `{{name}}` occurrences in order.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                out.push(&after[..close]);
                rest = &after[close + 2..];
            }
            None => break,
        }
    }
    out
}

/// Single-pass substitution, so values containing `{{…}}` are left alone.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = &after[..close];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(name);
                        out.push_str("}}");
                    }
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

impl PromptTemplateSet {
    pub fn student() -> Self {
        Self {
            stage1_system: STAGE1_SYSTEM.to_string(),
            stage1_user: STAGE1_USER.to_string(),
            stage2_user: STAGE2_USER.to_string(),
            audit: AUDIT.to_string(),
            reveals_label: false,
        }
    }

    pub fn teacher() -> Self {
        Self {
            stage1_user: STAGE1_USER_TEACHER.to_string(),
            reveals_label: true,
            ..Self::student()
        }
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        let set: Self = toml::from_str(&text).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        set.validate()?;
        Ok(set)
    }

    fn declared(&self) -> [(&'static str, &str, Vec<&'static str>); 4] {
        let mut stage1 = vec!["duration", "metadata", "transcript"];
        if self.reveals_label {
            stage1.push("label");
        }
        [
            ("stage1_system", self.stage1_system.as_str(), vec![]),
            ("stage1_user", self.stage1_user.as_str(), stage1),
            ("stage2_user", self.stage2_user.as_str(), vec!["observation"]),
            (
                "audit",
                self.audit.as_str(),
                vec!["evidence", "metadata", "prediction", "reasoning", "transcript"],
            ),
        ]
    }

    /// Every declared placeholder appears exactly once and nothing else does.
    pub fn validate(&self) -> Result<(), PromptError> {
        for (template, text, names) in self.declared() {
            let found = placeholders(text);
            for name in &names {
                let count = found.iter().filter(|f| *f == name).count();
                if count != 1 {
                    return Err(PromptError::PlaceholderMissing { template, name, count });
                }
            }
            if let Some(extra) = found.iter().find(|f| !names.contains(f)) {
                return Err(PromptError::UnknownPlaceholder {
                    template,
                    name: extra.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Sampling and size settings shared by every request of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestOptions {
    pub max_tokens: u32,
    pub temperature: f64,
    pub want_logprobs: bool,
    pub seed: Option<u64>,
    pub prompt_token_limit: u32,
    pub rollout: Option<usize>,
}

impl Default for RequestOptions {
    fn default() -> Self {
        Self {
            max_tokens: MAX_RESPONSE_TOKENS,
            temperature: 0.0,
            want_logprobs: false,
            seed: None,
            prompt_token_limit: MAX_PROMPT_TOKENS,
            rollout: None,
        }
    }
}

pub fn estimate_messages(messages: &[ChatMessage]) -> u32 {
    messages.iter().map(|m| estimate_tokens(&m.text)).sum()
}

fn clipped(original: &str, keep: usize) -> String {
    let len = original.chars().count();
    if keep >= len {
        original.to_string()
    } else {
        let mut s: String = original.chars().take(keep).collect();
        s.push_str(TRUNCATION_MARKER);
        s
    }
}

/// Builds messages via `build(transcript, metadata)`, shortening the two
/// free-text fields until the estimate fits `limit`.
fn fit_to_limit(
    item: &NewsItem,
    limit: u32,
    build: impl Fn(&str, &str) -> Vec<ChatMessage>,
) -> Result<Vec<ChatMessage>, PromptError> {
    let t_len = item.audio_transcript.chars().count();
    let m_len = item.metadata_text.chars().count();
    let (mut t_keep, mut m_keep) = (t_len, m_len);
    loop {
        let msgs = build(
            &clipped(&item.audio_transcript, t_keep),
            &clipped(&item.metadata_text, m_keep),
        );
        let est = estimate_messages(&msgs);
        if est <= limit {
            return Ok(msgs);
        }
        let over = (est - limit) as usize * 4;
        if t_keep > 0 {
            let marker = if t_keep == t_len { TRUNCATION_MARKER.len() } else { 0 };
            t_keep = t_keep.saturating_sub(over + marker);
        } else if m_keep > 0 {
            let marker = if m_keep == m_len { TRUNCATION_MARKER.len() } else { 0 };
            m_keep = m_keep.saturating_sub(over + marker);
        } else {
            return Err(PromptError::SkeletonTooLong(est));
        }
    }
}

fn stage1_messages(item: &NewsItem, templates: &PromptTemplateSet, transcript: &str, metadata: &str) -> Vec<ChatMessage> {
    let duration = format_seconds(item.video_duration_s);
    let label = item.label.as_str();
    let mut vars = vec![("duration", duration.as_str()), ("metadata", metadata), ("transcript", transcript)];
    if templates.reveals_label {
        vars.push(("label", label));
    }
    vec![
        ChatMessage::new(Role::System, templates.stage1_system.clone()),
        ChatMessage::new(Role::User, render(&templates.stage1_user, &vars)),
    ]
}

fn request(messages: Vec<ChatMessage>, item: &NewsItem, stage: &str, opts: &RequestOptions) -> ModelBackendRequest {
    ModelBackendRequest {
        messages,
        max_tokens: opts.max_tokens,
        temperature: opts.temperature,
        want_logprobs: opts.want_logprobs,
        seed: opts.seed,
        tag: Some(RequestTag {
            item_id: item.id.clone(),
            stage: stage.to_string(),
            rollout: opts.rollout,
        }),
    }
}

pub fn build_stage1_prompt(
    item: &NewsItem,
    templates: &PromptTemplateSet,
    opts: &RequestOptions,
) -> Result<ModelBackendRequest, PromptError> {
    templates.validate()?;
    let messages = fit_to_limit(item, opts.prompt_token_limit, |t, m| stage1_messages(item, templates, t, m))?;
    Ok(request(messages, item, "stage1", opts))
}

/// Full stage-1 history, the model's first turn, then the observation block
/// as a tool message carrying any image attachments.
pub fn build_stage2_prompt(
    item: &NewsItem,
    stage1_reply: &str,
    obs: &Observation,
    templates: &PromptTemplateSet,
    opts: &RequestOptions,
) -> Result<ModelBackendRequest, PromptError> {
    templates.validate()?;
    let block = observation_to_prompt_block(obs);
    let tool_text = render(&templates.stage2_user, &[("observation", &block.text)]);
    let messages = fit_to_limit(item, opts.prompt_token_limit, |t, m| {
        let mut msgs = stage1_messages(item, templates, t, m);
        msgs.push(ChatMessage::new(Role::Assistant, stage1_reply));
        msgs.push(ChatMessage {
            role: Role::Tool,
            text: tool_text.clone(),
            images: block.images.clone(),
        });
        msgs
    })?;
    Ok(request(messages, item, "stage2", opts))
}
