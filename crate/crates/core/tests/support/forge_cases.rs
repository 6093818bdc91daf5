//! Fifty teacher records with hand-assigned rejection codes.
//!
//! Records are produced by running real episodes against a scripted backend,
//! so the trajectories carry the same structure the forge sees in practice.
//! Shared by the core integration tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use evidentia_core::forge::{ForgeRecord, RejectionCode};
use evidentia_core::orchestrator::backend::{MockScript, ScriptedResponse};
use evidentia_core::tools::{OrganicResult, RenderConfig, SearchProvider, ToolBudget};
use evidentia_core::{
    run_episode, EpisodeConfig, EpisodeContext, Label, NewsItem, PromptTemplateSet, ScriptedBackend, SourceDataset,
    ToolError, ToolRegistry,
};

use RejectionCode::{
    HallucinationFlagged as H, InvalidToolAction as I, MalformedStructure as M, WrongFinalDecision as W,
};

#[derive(Clone, Copy, Debug)]
pub enum Kind {
    DirectFake,
    DirectReal,
    ToolThenFake,
    ToolThenReal,
    NoThink,
    TrailingText,
    Unclosed,
    BadJson,
    UnknownTool,
    OverBudget,
    SecondCall,
}

impl Kind {
    fn stage1(self) -> &'static str {
        match self {
            Kind::DirectFake => "<think>The overlay date contradicts the claimed event.</think><answer>fake</answer>",
            Kind::DirectReal => "<think>Caption, speech and scene agree.</think><answer>real</answer>",
            Kind::ToolThenFake | Kind::ToolThenReal | Kind::OverBudget | Kind::SecondCall => {
                "<think>I need outside reporting on this.</think><tool_call>{\"tool\":\"FactProbe\",\"query\":\"harbor fire footage\"}</tool_call>"
            }
            Kind::NoThink => "<answer>fake</answer>",
            Kind::TrailingText => "<think>Edited audio.</think><answer>fake</answer> hope that helps",
            Kind::Unclosed => "<think>Edited audio.</think><answer>fake",
            Kind::BadJson => "<think>Search it.</think><tool_call>{\"tool\":\"FactProbe\",query:harbor}</tool_call>",
            Kind::UnknownTool => "<think>Zoom in.</think><tool_call>{\"tool\":\"WebCam\",\"query\":\"harbor\"}</tool_call>",
        }
    }

    fn stage2(self) -> Option<&'static str> {
        match self {
            Kind::ToolThenFake | Kind::OverBudget => {
                Some("<think>Reports place this footage years earlier.</think><answer>fake</answer>")
            }
            Kind::ToolThenReal => Some("<think>Local outlets confirm the event.</think><answer>real</answer>"),
            Kind::SecondCall => Some(
                "<think>Still unsure.</think><tool_call>{\"tool\":\"FactProbe\",\"query\":\"harbor fire date\"}</tool_call><answer>fake</answer>",
            ),
            _ => None,
        }
    }
}

pub struct Case {
    pub id: &'static str,
    pub label: Label,
    pub kind: Kind,
    pub flagged: bool,
    pub expected: &'static [RejectionCode],
}

const fn case(id: &'static str, label: Label, kind: Kind, flagged: bool, expected: &'static [RejectionCode]) -> Case {
    Case {
        id,
        label,
        kind,
        flagged,
        expected,
    }
}

use Kind::*;
use Label::{Fake as F, Real as R};

pub const CASES: [Case; 50] = [
    case("f00", F, DirectFake, false, &[]),
    case("f01", R, DirectReal, false, &[]),
    case("f02", F, ToolThenFake, false, &[]),
    case("f03", R, ToolThenReal, false, &[]),
    case("f04", R, DirectFake, false, &[W]),
    case("f05", F, DirectReal, false, &[W]),
    case("f06", R, ToolThenFake, false, &[W]),
    case("f07", F, ToolThenReal, false, &[W]),
    case("f08", F, NoThink, false, &[M]),
    case("f09", R, NoThink, false, &[M, W]),
    case("f10", F, TrailingText, false, &[M]),
    case("f11", R, TrailingText, false, &[M, W]),
    case("f12", F, Unclosed, false, &[M, W]),
    case("f13", R, Unclosed, false, &[M, W]),
    case("f14", F, BadJson, false, &[M, I, W]),
    case("f15", R, BadJson, false, &[M, I, W]),
    case("f16", F, UnknownTool, false, &[M, I, W]),
    case("f17", R, UnknownTool, false, &[M, I, W]),
    case("f18", F, OverBudget, false, &[I]),
    case("f19", R, OverBudget, false, &[I, W]),
    case("f20", F, SecondCall, false, &[M, I]),
    case("f21", R, SecondCall, false, &[M, I, W]),
    case("f22", F, DirectFake, true, &[H]),
    case("f23", R, DirectReal, true, &[H]),
    case("f24", F, ToolThenFake, true, &[H]),
    case("f25", F, ToolThenReal, true, &[W, H]),
    case("f26", F, NoThink, true, &[M, H]),
    case("f27", F, OverBudget, true, &[I, H]),
    case("f28", R, BadJson, true, &[M, I, W, H]),
    case("f29", F, SecondCall, true, &[M, I, H]),
    case("f30", F, DirectFake, false, &[]),
    case("f31", F, DirectFake, false, &[]),
    case("f32", R, DirectReal, false, &[]),
    case("f33", R, DirectReal, false, &[]),
    case("f34", F, ToolThenFake, false, &[]),
    case("f35", F, ToolThenFake, false, &[]),
    case("f36", R, ToolThenReal, false, &[]),
    case("f37", R, ToolThenReal, false, &[]),
    case("f38", R, DirectReal, false, &[]),
    case("f39", F, ToolThenFake, false, &[]),
    case("f40", R, DirectFake, false, &[W]),
    case("f41", F, DirectReal, false, &[W]),
    case("f42", F, TrailingText, false, &[M]),
    case("f43", F, NoThink, false, &[M]),
    case("f44", R, OverBudget, false, &[I, W]),
    case("f45", F, OverBudget, false, &[I]),
    case("f46", R, ToolThenReal, true, &[H]),
    case("f47", R, ToolThenFake, true, &[W, H]),
    case("f48", F, UnknownTool, false, &[M, I, W]),
    case("f49", R, DirectReal, false, &[]),
];

struct OneHit;

impl SearchProvider for OneHit {
    fn search(&self, query: &str) -> Result<Vec<OrganicResult>, ToolError> {
        Ok(vec![OrganicResult {
            title: format!("Archive result for {query}"),
            snippet: "Footage first published in 2019.".into(),
            link: "https://news.example.org/harbor".into(),
            position: Some(1),
        }])
    }
}

pub fn item(id: &str, label: Label) -> NewsItem {
    NewsItem {
        id: id.into(),
        video_path: format!("videos/{id}"),
        video_duration_s: 30.0,
        audio_transcript: "Crowds gather as the harbor burns.".into(),
        metadata_text: "Harbor fire tonight #breaking".into(),
        label,
        published_at: chrono::DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
        source_dataset: SourceDataset::Synthetic,
    }
}

pub fn flagged() -> BTreeSet<String> {
    CASES.iter().filter(|c| c.flagged).map(|c| c.id.to_string()).collect()
}

/// Runs every case once and returns the unfiltered records in case order.
pub fn records() -> Vec<ForgeRecord> {
    let mut script = MockScript::default();
    for c in &CASES {
        script.push(c.id, "stage1", None, ScriptedResponse::text(c.kind.stage1()));
        if let Some(s2) = c.kind.stage2() {
            script.push(c.id, "stage2", None, ScriptedResponse::text(s2));
        }
    }
    let backend = ScriptedBackend::new(script);
    let mut open = ToolRegistry::new(Arc::new(OneHit), RenderConfig::default());
    open.measure_latency = false;
    let mut closed = open.clone();
    closed.budget = ToolBudget {
        clip_scout_max: 1,
        fact_probe_max: Some(0),
    };
    let templates = PromptTemplateSet::teacher();
    let config = EpisodeConfig::default();
    CASES
        .iter()
        .map(|c| {
            let tools = if matches!(c.kind, Kind::OverBudget) { &closed } else { &open };
            let ctx = EpisodeContext {
                backend: &backend,
                tools,
                templates: &templates,
                config: &config,
            };
            let it = item(c.id, c.label);
            let trajectory = run_episode(&it, &ctx, None).expect("scripted episode");
            ForgeRecord {
                item_id: c.id.into(),
                item: it,
                trajectory,
                teacher_model: "scripted-teacher".into(),
                kept: false,
                rejection_codes: vec![],
            }
        })
        .collect()
}
