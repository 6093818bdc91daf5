//! Drives a chat model through the two-stage reason / tool / refine / verdict
//! loop and fans out rollout groups.

pub mod backend;
mod episode;
pub mod prompts;

pub use backend::{
    estimate_tokens, BackendError, ChatMessage, FinishReason, HttpBackend, MockScript, ModelBackend,
    ModelBackendRequest, ModelBackendResponse, RequestTag, Role, ScriptedBackend, ScriptedResponse,
    MAX_PROMPT_TOKENS, MAX_RESPONSE_TOKENS,
};
pub use episode::{rollout_group, run_batch, run_episode, EpisodeConfig, EpisodeContext, EpisodeError};
pub use prompts::{build_stage1_prompt, build_stage2_prompt, PromptError, PromptTemplateSet, RequestOptions};
