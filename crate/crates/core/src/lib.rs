//! Agentic video misinformation verification: a two-stage reason, tool,
//! refine, verdict loop around a chat model, the group-relative reward engine
//! used to train it, evaluation tooling and SFT corpus construction.
//!
//! The most used types are re-exported at the crate root.

pub mod bridge;
pub mod eval;
pub mod forge;
pub mod orchestrator;
pub mod parser;
pub mod reward;
pub mod synthetic;
pub mod tools;
pub mod types;

pub use orchestrator::{
    rollout_group, run_batch, run_episode, EpisodeConfig, EpisodeContext, EpisodeError, HttpBackend, ModelBackend,
    PromptTemplateSet, ScriptedBackend,
};
pub use parser::{parse_tool_action, parse_turn, validate_format, validate_turn, FormatVerdict, FormatViolation, ParsedTurn};
pub use reward::{grpo_objective, group_advantages, kl_surrogate, score_group, total_reward, RewardBreakdown, RewardError};
pub use tools::{ToolBudget, ToolError, ToolRegistry};
pub use types::*;
