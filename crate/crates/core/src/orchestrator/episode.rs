use rayon::prelude::*;
use thiserror::Error;

use super::backend::{BackendError, ModelBackend, ModelBackendResponse, MAX_PROMPT_TOKENS, MAX_RESPONSE_TOKENS};
use super::prompts::{build_stage1_prompt, build_stage2_prompt, PromptError, PromptTemplateSet, RequestOptions};
use crate::parser::{parse_tool_action, parse_turn, validate_turn, FormatVerdict, StageExpectation};
use crate::tools::{ToolError, ToolRegistry};
use crate::types::{
    AgentStage, AgentState, NewsItem, Observation, RefusedCall, Trajectory, TrajectoryGroup, TrajectoryLogProbs, Turn,
    DEFAULT_BETA,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("GROUP_TOO_SMALL: group size must be >= 2, got {0}")]
    GroupTooSmall(usize),
    #[error("BAD_CONFIG: {0}")]
    BadConfig(String),
}

impl EpisodeError {
    pub fn code(&self) -> &'static str {
        match self {
            EpisodeError::Backend(e) => e.code(),
            EpisodeError::Prompt(e) => e.code(),
            EpisodeError::GroupTooSmall(_) => "GROUP_TOO_SMALL",
            EpisodeError::BadConfig(_) => "BAD_CONFIG",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_tokens: u32,
    pub prompt_token_limit: u32,
    pub want_logprobs: bool,
    /// Episodes run in parallel by batch and group helpers.
    pub concurrency: usize,
    pub beta: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            seed: None,
            max_tokens: MAX_RESPONSE_TOKENS,
            prompt_token_limit: MAX_PROMPT_TOKENS,
            want_logprobs: false,
            concurrency: 8,
            beta: DEFAULT_BETA,
        }
    }
}

impl EpisodeConfig {
    /// Group rollouts sample at temperature 1.0 with log-probs on.
    pub fn for_rollouts() -> Self {
        Self {
            temperature: 1.0,
            want_logprobs: true,
            ..Self::default()
        }
    }

    fn options(&self, seed: Option<u64>, rollout: Option<usize>) -> RequestOptions {
        RequestOptions {
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            want_logprobs: self.want_logprobs,
            seed,
            prompt_token_limit: self.prompt_token_limit,
            rollout,
        }
    }

    fn check(&self) -> Result<(), EpisodeError> {
        if self.max_tokens == 0 || self.max_tokens > MAX_RESPONSE_TOKENS {
            return Err(EpisodeError::BadConfig(format!("max_tokens {} outside 1..=768", self.max_tokens)));
        }
        if self.prompt_token_limit > MAX_PROMPT_TOKENS {
            return Err(EpisodeError::BadConfig(format!(
                "prompt_token_limit {} exceeds {MAX_PROMPT_TOKENS}",
                self.prompt_token_limit
            )));
        }
        Ok(())
    }
}

/// Everything an episode needs besides the item itself.
pub struct EpisodeContext<'a> {
    pub backend: &'a dyn ModelBackend,
    pub tools: &'a ToolRegistry,
    pub templates: &'a PromptTemplateSet,
    pub config: &'a EpisodeConfig,
}

#[derive(Default)]
struct LogMass {
    policy: f64,
    reference: f64,
    tokens: u32,
    complete: bool,
}

impl LogMass {
    fn start() -> Self {
        Self {
            complete: true,
            ..Default::default()
        }
    }

    fn add(&mut self, r: &ModelBackendResponse) {
        self.tokens += r.token_count;
        match r.sum_logprob {
            Some(lp) => {
                self.policy += lp;
                self.reference += r.reference_logprob.unwrap_or(lp);
            }
            None => self.complete = false,
        }
    }

    /// At collection time the policy and rollout policy coincide.
    fn finish(self, wanted: bool) -> Option<TrajectoryLogProbs> {
        (wanted && self.complete && self.tokens > 0).then_some(TrajectoryLogProbs {
            sum_logp_policy: self.policy,
            sum_logp_rollout: self.policy,
            sum_logp_reference: self.reference,
            token_count: self.tokens,
        })
    }
}

fn advance(state: &mut AgentState, trace: &mut Vec<AgentStage>, next: AgentStage) {
    state
        .advance(next)
        .expect("episode driver only takes legal transitions");
    trace.push(next);
}

fn assistant_turn(text: String) -> Turn {
    let parsed = parse_turn(&text);
    Turn {
        role: "assistant".into(),
        raw_text: text,
        parsed,
    }
}

/// Runs one two-stage episode.
///
/// Stage 1 either answers directly or requests one tool. A tool request is
/// dispatched, its observation appended, and stage 2 produces the verdict.
/// Format problems never abort the episode; they are recorded in the
/// trajectory's format verdict.
pub fn run_episode(item: &NewsItem, ctx: &EpisodeContext<'_>, rollout: Option<usize>) -> Result<Trajectory, EpisodeError> {
    ctx.config.check()?;
    let seed = ctx.config.seed.map(|s| s + rollout.unwrap_or(0) as u64);
    let opts = ctx.config.options(seed, rollout);

    let mut state = ctx.tools.new_state();
    let mut trace = vec![state.stage];
    let mut mass = LogMass::start();

    let req1 = build_stage1_prompt(item, ctx.templates, &opts)?;
    let resp1 = ctx.backend.complete(&req1)?;
    mass.add(&resp1);
    let turn1 = assistant_turn(resp1.text);
    let fv1 = validate_turn(&turn1.parsed, StageExpectation::Stage1);
    state.turn_index = 1;

    let requested = match (&turn1.parsed.tool_call_raw, &turn1.parsed.answer_raw) {
        (Some(raw), None) => parse_tool_action(raw).ok(),
        _ => None,
    };

    let Some(action) = requested else {
        advance(&mut state, &mut trace, AgentStage::Done);
        let verdict = turn1
            .parsed
            .answer_raw
            .as_deref()
            .filter(|_| fv1.answer_parseable)
            .and_then(|a| a.parse().ok());
        return Ok(Trajectory {
            item_id: item.id.clone(),
            seed,
            turns: vec![turn1],
            action: None,
            observation: None,
            refused_calls: vec![],
            verdict,
            token_logprobs: mass.finish(ctx.config.want_logprobs),
            format_verdict: fv1,
            stage_trace: trace,
        });
    };

    advance(&mut state, &mut trace, AgentStage::AwaitingTool);
    let observation = ctx.tools.dispatch(&action, item, &mut state);
    advance(&mut state, &mut trace, AgentStage::Refining);

    let req2 = build_stage2_prompt(item, &turn1.raw_text, &observation, ctx.templates, &opts)?;
    let resp2 = ctx.backend.complete(&req2)?;
    mass.add(&resp2);
    let turn2 = assistant_turn(resp2.text);
    let fv2 = validate_turn(&turn2.parsed, StageExpectation::Stage2);
    state.turn_index = 2;

    // One tool round per episode: later requests are refused, never run.
    let refused_calls = turn2
        .parsed
        .tool_call_raw
        .as_deref()
        .and_then(|raw| parse_tool_action(raw).ok())
        .map(|a| {
            let observation = Observation::failure(a.kind(), ToolError::BudgetExhausted.code(), 0);
            vec![RefusedCall { action: a, observation }]
        })
        .unwrap_or_default();

    advance(&mut state, &mut trace, AgentStage::Done);
    let format_verdict = FormatVerdict::merge(&[fv1, fv2.clone()]);
    let verdict = turn2
        .parsed
        .answer_raw
        .as_deref()
        .filter(|_| fv2.answer_parseable)
        .and_then(|a| a.parse().ok());

    Ok(Trajectory {
        item_id: item.id.clone(),
        seed,
        turns: vec![turn1, turn2],
        action: Some(action),
        observation: Some(observation),
        refused_calls,
        verdict,
        token_logprobs: mass.finish(ctx.config.want_logprobs),
        format_verdict,
        stage_trace: trace,
    })
}

fn pool(concurrency: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool")
}

/// Samples `group_size` independent episodes (seeds `seed + i`). Either the
/// whole group comes back or an error does.
pub fn rollout_group(item: &NewsItem, ctx: &EpisodeContext<'_>, group_size: usize) -> Result<TrajectoryGroup, EpisodeError> {
    if group_size < 2 {
        return Err(EpisodeError::GroupTooSmall(group_size));
    }
    let trajectories = pool(ctx.config.concurrency).install(|| {
        (0..group_size)
            .into_par_iter()
            .map(|i| run_episode(item, ctx, Some(i)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(TrajectoryGroup {
        item_id: item.id.clone(),
        truth: item.label,
        trajectories,
        rewards: vec![],
        advantages: vec![],
        beta: ctx.config.beta,
    })
}

/// One episode per item, run concurrently; results keep input order.
pub fn run_batch(items: &[NewsItem], ctx: &EpisodeContext<'_>) -> Vec<Result<Trajectory, EpisodeError>> {
    pool(ctx.config.concurrency).install(|| items.par_iter().map(|it| run_episode(it, ctx, None)).collect())
}
