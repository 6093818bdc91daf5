//! The tool operator: maps a parsed [`ToolAction`] to an [`Observation`].
//!
//! Budgets live in the episode's [`AgentState`]; the registry itself holds
//! only configuration and provider handles, so one registry can serve any
//! number of concurrent episodes.

pub mod clip_scout;
pub mod fact_probe;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clip_scout::{clip_scout, compose_grid, sample_timestamps, FixtureVideo, RenderConfig};
pub use fact_probe::{
    fact_probe, Blocklist, EvidenceReport, FactProbeConfig, HttpSearchProvider, OrganicResult, SearchProvider,
    StubSearchProvider, NO_EVIDENCE_FOUND,
};

use crate::types::{AgentState, NewsItem, Observation, ToolAction, ToolKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolError {
    #[error("BUDGET_EXHAUSTED")]
    BudgetExhausted,
    #[error("PROVIDER_TIMEOUT")]
    ProviderTimeout,
    #[error("PROVIDER_ERROR: {0}")]
    ProviderError(String),
    #[error("DECODE_FAILURE: {0}")]
    DecodeFailure(String),
    #[error("DEGENERATE_INTERVAL")]
    DegenerateInterval,
    #[error("EMPTY_RESULTS")]
    EmptyResults,
    #[error("BAD_PARAMS: {0}")]
    BadParams(String),
    #[error("IO: {0}")]
    Io(String),
}

impl ToolError {
    pub fn code(&self) -> &'static str {
        match self {
            ToolError::BudgetExhausted => "BUDGET_EXHAUSTED",
            ToolError::ProviderTimeout => "PROVIDER_TIMEOUT",
            ToolError::ProviderError(_) => "PROVIDER_ERROR",
            ToolError::DecodeFailure(_) => "DECODE_FAILURE",
            ToolError::DegenerateInterval => "DEGENERATE_INTERVAL",
            ToolError::EmptyResults => "EMPTY_RESULTS",
            ToolError::BadParams(_) => "BAD_PARAMS",
            ToolError::Io(_) => "IO",
        }
    }
}

/// Per-episode invocation limits. `None` means unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolBudget {
    pub clip_scout_max: u32,
    pub fact_probe_max: Option<u32>,
}

impl Default for ToolBudget {
    fn default() -> Self {
        Self {
            clip_scout_max: 1,
            fact_probe_max: None,
        }
    }
}

impl ToolBudget {
    pub fn initial(&self) -> BTreeMap<ToolKind, u32> {
        let mut m = BTreeMap::from([(ToolKind::ClipScout, self.clip_scout_max)]);
        if let Some(n) = self.fact_probe_max {
            m.insert(ToolKind::FactProbe, n);
        }
        m
    }
}

#[derive(Clone)]
pub struct ToolRegistry {
    pub search: Arc<dyn SearchProvider>,
    pub probe: FactProbeConfig,
    pub render: RenderConfig,
    pub budget: ToolBudget,
    /// When false every observation reports `latency_ms = 0`, which keeps
    /// serialized trajectories byte-stable across runs.
    pub measure_latency: bool,
}

impl ToolRegistry {
    pub fn new(search: Arc<dyn SearchProvider>, render: RenderConfig) -> Self {
        Self {
            search,
            probe: FactProbeConfig::default(),
            render,
            budget: ToolBudget::default(),
            measure_latency: true,
        }
    }

    pub fn new_state(&self) -> AgentState {
        AgentState::new(self.budget.initial())
    }

    /// Executes one action. Budget is consumed on every attempt, successful
    /// or not; failures come back as `ok = false` observations.
    pub fn dispatch(&self, action: &ToolAction, item: &NewsItem, state: &mut AgentState) -> Observation {
        let kind = action.kind();
        let obs = if !state.try_consume(kind) {
            Observation::failure(kind, ToolError::BudgetExhausted.code(), 0)
        } else {
            let started = Instant::now();
            let result = self.run(action, item);
            let latency_ms = if self.measure_latency {
                started.elapsed().as_millis() as u64
            } else {
                0
            };
            match result {
                Ok(mut o) => {
                    o.latency_ms = latency_ms;
                    o
                }
                Err(e) => Observation::failure(kind, e.to_string(), latency_ms),
            }
        };
        state.accumulated_observations.push(obs.clone());
        obs
    }

    fn run(&self, action: &ToolAction, item: &NewsItem) -> Result<Observation, ToolError> {
        action.check().map_err(ToolError::BadParams)?;
        match action {
            ToolAction::FactProbe { query } => {
                let report = fact_probe(query, self.search.as_ref(), &self.probe)?;
                Ok(Observation {
                    tool_id: ToolKind::FactProbe,
                    ok: true,
                    text_report: Some(report.synthesized_text),
                    frame_grid: None,
                    error_note: None,
                    latency_ms: 0,
                })
            }
            ToolAction::ClipScout { start_s, end_s } => {
                let grid = clip_scout(*start_s, *end_s, item, &self.render)?;
                Ok(Observation {
                    tool_id: ToolKind::ClipScout,
                    ok: true,
                    text_report: None,
                    frame_grid: Some(grid),
                    error_note: None,
                    latency_ms: 0,
                })
            }
        }
    }
}

/// Text plus image attachments to splice into the refinement prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBlock {
    pub text: String,
    #[serde(default)]
    pub images: Vec<String>,
}

/// `11.25` -> `"11.25"`, `5.0` -> `"5"`, at most millisecond precision.
pub fn format_seconds(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

pub fn observation_to_prompt_block(obs: &Observation) -> PromptBlock {
    if !obs.ok {
        return PromptBlock {
            text: format!("TOOL ERROR: {}", obs.error_note.as_deref().unwrap_or("UNKNOWN")),
            images: vec![],
        };
    }
    match obs.tool_id {
        ToolKind::FactProbe => PromptBlock {
            text: format!("EVIDENCE REPORT:\n{}", obs.text_report.as_deref().unwrap_or(NO_EVIDENCE_FOUND)),
            images: vec![],
        },
        ToolKind::ClipScout => match &obs.frame_grid {
            Some(grid) => {
                let ts: Vec<String> = grid.sample_timestamps.iter().map(|t| format!("{}s", format_seconds(*t))).collect();
                PromptBlock {
                    text: format!("CLIP FRAMES (2x2 grid, row-major): frames at {}", ts.join(", ")),
                    images: vec![grid.image.clone()],
                }
            }
            None => PromptBlock {
                text: "TOOL ERROR: DECODE_FAILURE".into(),
                images: vec![],
            },
        },
    }
}
