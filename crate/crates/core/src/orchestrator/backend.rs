//! Chat-model backends: the trait the orchestrator drives, an
//! OpenAI-compatible HTTP client, and a scripted mock for tests.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAX_RESPONSE_TOKENS: u32 = 768;
pub const MAX_PROMPT_TOKENS: u32 = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
}

impl ChatMessage {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            images: Vec::new(),
        }
    }
}

/// Routing hint for scripted backends; never sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTag {
    pub item_id: String,
    pub stage: String,
    pub rollout: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBackendRequest {
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub want_logprobs: bool,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub tag: Option<RequestTag>,
}

impl ModelBackendRequest {
    /// Hex digest over everything except the routing tag.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(&Sha256::digest(&canonical)[..16])
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_tokens == 0 || self.max_tokens > MAX_RESPONSE_TOKENS {
            return Err(BackendError::BadRequest(format!(
                "max_tokens must be in 1..={MAX_RESPONSE_TOKENS}, got {}",
                self.max_tokens
            )));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::BadRequest(format!("bad temperature {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBackendResponse {
    pub text: String,
    pub sum_logprob: Option<f64>,
    /// Log-mass of the same text under a frozen reference model, when the
    /// backend can provide it.
    #[serde(default)]
    pub reference_logprob: Option<f64>,
    pub token_count: u32,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("BACKEND_UNREACHABLE: {0}")]
    Unreachable(String),
    #[error("BAD_REQUEST: {0}")]
    BadRequest(String),
    #[error("PROMPT_TOO_LONG: {0} tokens")]
    PromptTooLong(u32),
    #[error("SCRIPT_MISSING: {0}")]
    ScriptMissing(String),
    #[error("BAD_RESPONSE: {0}")]
    BadResponse(String),
}

impl BackendError {
    pub fn code(&self) -> &'static str {
        match self {
            BackendError::Unreachable(_) => "BACKEND_UNREACHABLE",
            BackendError::BadRequest(_) => "BAD_REQUEST",
            BackendError::PromptTooLong(_) => "PROMPT_TOO_LONG",
            BackendError::ScriptMissing(_) => "SCRIPT_MISSING",
            BackendError::BadResponse(_) => "BAD_RESPONSE",
        }
    }
}

pub trait ModelBackend: Send + Sync {
    fn complete(&self, req: &ModelBackendRequest) -> Result<ModelBackendResponse, BackendError>;
}

/// Character-count heuristic: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u32 {
    (text.chars().count() as u32).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedResponse {
    pub text: String,
    #[serde(default)]
    pub logprob: Option<f64>,
    #[serde(default)]
    pub reference_logprob: Option<f64>,
    #[serde(default)]
    pub token_count: Option<u32>,
}

impl ScriptedResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            logprob: None,
            reference_logprob: None,
            token_count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyedResponse {
    /// Item id, or `*` for any item.
    pub item: String,
    pub stage: String,
    #[serde(default)]
    pub rollout: Option<usize>,
    #[serde(flatten)]
    pub response: ScriptedResponse,
}

/// On-disk script for [`ScriptedBackend`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub responses: Vec<KeyedResponse>,
    #[serde(default)]
    pub by_hash: BTreeMap<String, ScriptedResponse>,
    #[serde(default)]
    pub sequence: Vec<ScriptedResponse>,
}

impl MockScript {
    pub fn push(&mut self, item: &str, stage: &str, rollout: Option<usize>, response: ScriptedResponse) {
        self.responses.push(KeyedResponse {
            item: item.to_string(),
            stage: stage.to_string(),
            rollout,
            response,
        });
    }
}

type Key = (String, String, Option<usize>);

/// Replays canned turns.
///
/// Resolution order for a request: exact content hash, then
/// `(item, stage, rollout)`, `(item, stage)`, `(*, stage, rollout)`,
/// `(*, stage)`, and finally the next unused entry of `sequence`.
#[derive(Debug)]
pub struct ScriptedBackend {
    keyed: BTreeMap<Key, ScriptedResponse>,
    by_hash: BTreeMap<String, ScriptedResponse>,
    sequence: Vec<ScriptedResponse>,
    cursor: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(script: MockScript) -> Self {
        let keyed = script
            .responses
            .into_iter()
            .map(|k| ((k.item, k.stage, k.rollout), k.response))
            .collect();
        Self {
            keyed,
            by_hash: script.by_hash,
            sequence: script.sequence,
            cursor: AtomicUsize::new(0),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::BadRequest(format!("{}: {e}", path.display())))?;
        let script: MockScript = serde_json::from_str(&text)
            .map_err(|e| BackendError::BadRequest(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    fn lookup(&self, req: &ModelBackendRequest) -> Option<ScriptedResponse> {
        if let Some(r) = self.by_hash.get(&req.content_hash()) {
            return Some(r.clone());
        }
        if let Some(tag) = &req.tag {
            let candidates = [
                (tag.item_id.as_str(), tag.rollout),
                (tag.item_id.as_str(), None),
                ("*", tag.rollout),
                ("*", None),
            ];
            for (item, rollout) in candidates {
                if let Some(r) = self.keyed.get(&(item.to_string(), tag.stage.clone(), rollout)) {
                    return Some(r.clone());
                }
            }
        }
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        self.sequence.get(i).cloned()
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, req: &ModelBackendRequest) -> Result<ModelBackendResponse, BackendError> {
        req.validate()?;
        let scripted = self.lookup(req).ok_or_else(|| {
            BackendError::ScriptMissing(match &req.tag {
                Some(t) => format!("item={} stage={} rollout={:?}", t.item_id, t.stage, t.rollout),
                None => req.content_hash(),
            })
        })?;
        let mut text = scripted.text;
        let mut finish_reason = FinishReason::Stop;
        let budget_chars = req.max_tokens as usize * 4;
        if text.chars().count() > budget_chars {
            text = text.chars().take(budget_chars).collect();
            finish_reason = FinishReason::Length;
        }
        let token_count = scripted
            .token_count
            .unwrap_or_else(|| estimate_tokens(&text))
            .clamp(1, req.max_tokens);
        let sum_logprob = req
            .want_logprobs
            .then(|| scripted.logprob.unwrap_or(-0.25 * token_count as f64));
        let reference_logprob = if req.want_logprobs { scripted.reference_logprob } else { None };
        Ok(ModelBackendResponse {
            text,
            sum_logprob,
            reference_logprob,
            token_count,
            finish_reason,
        })
    }
}

pub const BACKEND_URL_ENV: &str = "EVIDENTIA_BACKEND_URL";
pub const BACKEND_MODEL_ENV: &str = "EVIDENTIA_MODEL";
pub const BACKEND_KEY_ENV: &str = "EVIDENTIA_API_KEY";

/// OpenAI-compatible `/chat/completions` client.
///
/// Tool-role messages are sent as user messages since the observation is
/// plain text plus images, not a native function-call result.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub deadline: Duration,
    pub retries: u32,
    pub backoff: Duration,
    pub prompt_token_limit: u32,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            deadline: Duration::from_secs(120),
            retries: 2,
            backoff: Duration::from_millis(500),
            prompt_token_limit: MAX_PROMPT_TOKENS,
        }
    }

    /// Reads `EVIDENTIA_BACKEND_URL`, `EVIDENTIA_MODEL` and (optionally)
    /// `EVIDENTIA_API_KEY`.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(BACKEND_URL_ENV)
            .map_err(|_| BackendError::BadRequest(format!("{BACKEND_URL_ENV} is not set")))?;
        let model = std::env::var(BACKEND_MODEL_ENV)
            .map_err(|_| BackendError::BadRequest(format!("{BACKEND_MODEL_ENV} is not set")))?;
        let mut b = Self::new(url, model);
        b.api_key = std::env::var(BACKEND_KEY_ENV).ok();
        Ok(b)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn request_body(&self, req: &ModelBackendRequest) -> Result<Value, BackendError> {
        let mut messages = Vec::with_capacity(req.messages.len());
        for m in &req.messages {
            let role = match m.role {
                Role::System => "system",
                Role::User | Role::Tool => "user",
                Role::Assistant => "assistant",
            };
            let content = if m.images.is_empty() {
                json!(m.text)
            } else {
                let mut parts = vec![json!({"type": "text", "text": m.text})];
                for path in &m.images {
                    let bytes = std::fs::read(path)
                        .map_err(|e| BackendError::BadRequest(format!("attachment {path}: {e}")))?;
                    let data = base64::engine::general_purpose::STANDARD.encode(bytes);
                    parts.push(json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:image/png;base64,{data}")}
                    }));
                }
                Value::Array(parts)
            };
            messages.push(json!({"role": role, "content": content}));
        }
        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        if req.want_logprobs {
            body["logprobs"] = json!(true);
        }
        Ok(body)
    }

    pub fn parse_response(&self, body: &Value) -> Result<ModelBackendResponse, BackendError> {
        let choice = body
            .pointer("/choices/0")
            .ok_or_else(|| BackendError::BadResponse("no choices".into()))?;
        let text = choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::BadResponse("no message content".into()))?
            .to_string();
        let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            _ => FinishReason::Other,
        };
        let sum_logprob = choice
            .pointer("/logprobs/content")
            .and_then(Value::as_array)
            .map(|toks| toks.iter().filter_map(|t| t.get("logprob").and_then(Value::as_f64)).sum());
        if let Some(prompt_tokens) = body.pointer("/usage/prompt_tokens").and_then(Value::as_u64) {
            if prompt_tokens > self.prompt_token_limit as u64 {
                return Err(BackendError::PromptTooLong(prompt_tokens as u32));
            }
        }
        let token_count = body
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .map(|n| n as u32)
            .unwrap_or_else(|| estimate_tokens(&text));
        Ok(ModelBackendResponse {
            text,
            sum_logprob,
            reference_logprob: None,
            token_count,
            finish_reason,
        })
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&self, req: &ModelBackendRequest) -> Result<ModelBackendResponse, BackendError> {
        req.validate()?;
        let body = self.request_body(req)?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.deadline))
            .build()
            .into();
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let mut call = agent.post(self.endpoint()).header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                call = call.header("Authorization", &format!("Bearer {key}"));
            }
            match call.send_json(&body) {
                Ok(mut resp) => {
                    let value: Value = resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| BackendError::BadResponse(e.to_string()))?;
                    let out = self.parse_response(&value)?;
                    if out.token_count > req.max_tokens {
                        return Err(BackendError::BadResponse(format!(
                            "{} tokens exceeds requested {}",
                            out.token_count, req.max_tokens
                        )));
                    }
                    return Ok(out);
                }
                Err(ureq::Error::StatusCode(code)) if (400..500).contains(&code) && code != 429 => {
                    return Err(BackendError::BadRequest(format!("status {code}")));
                }
                Err(e) => {
                    log::warn!("backend attempt {} failed: {e}", attempt + 1);
                    last = e.to_string();
                }
            }
        }
        Err(BackendError::Unreachable(last))
    }
}
