use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use evidentia_core::bridge;
use evidentia_core::eval::{
    audit_batch, compute_metrics, cost_sweep, emit_report, load_manifest, load_predictions, temporal_split,
    AuditSummary, CostRatio, EvalReport, GroundTruth, Metrics, Prediction, SplitSummary,
};
use evidentia_core::forge::{self, emit_sft_dataset, filter_rules, generate_teacher_trajectories};
use evidentia_core::orchestrator::{HttpBackend, ModelBackend, ScriptedBackend};
use evidentia_core::reward::{grpo_objective, score_group, GrpoDiagnostics, RewardBreakdown};
use evidentia_core::synthetic::{self, SynthConfig};
use evidentia_core::tools::{HttpSearchProvider, OrganicResult, RenderConfig, SearchProvider, StubSearchProvider, ToolError};
use evidentia_core::{
    rollout_group, run_batch, EpisodeConfig, EpisodeContext, NewsItem, PromptTemplateSet, RewardConfig, ToolRegistry,
    Trajectory, TrajectoryGroup,
};

use crate::{BackendKind, EvalArgs, RunArgs};

const MOCK_SCRIPT_ENV: &str = "EVIDENTIA_MOCK_SCRIPT";

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| anyhow!("SCHEMA: {}:{}: {e}", path.display(), i + 1)))
        .collect()
}

fn backend(kind: BackendKind, script: Option<&Path>) -> Result<Box<dyn ModelBackend>> {
    match kind {
        BackendKind::Mock => {
            let path = match script {
                Some(p) => p.to_path_buf(),
                None => std::env::var_os(MOCK_SCRIPT_ENV)
                    .map(PathBuf::from)
                    .ok_or_else(|| anyhow!("mock backend needs --mock-script or ${MOCK_SCRIPT_ENV}"))?,
            };
            Ok(Box::new(ScriptedBackend::from_file(&path)?))
        }
        BackendKind::Http => Ok(Box::new(HttpBackend::from_env()?)),
    }
}

/// Stands in when no search provider is configured, so runs that never call
/// FactProbe still work; calls that do get a provider error observation.
struct Unconfigured(String);

impl SearchProvider for Unconfigured {
    fn search(&self, _: &str) -> Result<Vec<OrganicResult>, ToolError> {
        Err(ToolError::ProviderError(self.0.clone()))
    }
}

fn registry(run: &RunArgs) -> ToolRegistry {
    let search: Arc<dyn SearchProvider> = match &run.search_fixtures {
        Some(dir) => Arc::new(StubSearchProvider::new(dir)),
        None => match HttpSearchProvider::from_env() {
            Ok(p) => Arc::new(p),
            Err(e) => {
                log::warn!("search provider unavailable: {e}");
                Arc::new(Unconfigured(e.to_string()))
            }
        },
    };
    let mut render = RenderConfig::default();
    if let Some(dir) = &run.grid_dir {
        render.output_dir = dir.clone();
    }
    render.decoder_command = run
        .decoder
        .as_ref()
        .map(|d| d.split_whitespace().map(str::to_string).collect());
    let mut reg = ToolRegistry::new(search, render);
    reg.measure_latency = run.measure_latency;
    reg
}

fn templates(run: &RunArgs, fallback: PromptTemplateSet) -> Result<PromptTemplateSet> {
    match &run.templates {
        Some(p) => Ok(PromptTemplateSet::from_toml_file(p)?),
        None => Ok(fallback),
    }
}

pub fn verify(manifest: &Path, out: &Path, kind: BackendKind, temperature: f64, seed: Option<u64>, run: &RunArgs) -> Result<()> {
    let items = load_manifest(manifest)?;
    let backend = backend(kind, run.mock_script.as_deref())?;
    let tools = registry(run);
    let templates = templates(run, PromptTemplateSet::student())?;
    let config = EpisodeConfig {
        temperature,
        seed,
        concurrency: run.concurrency,
        ..EpisodeConfig::default()
    };
    let ctx = EpisodeContext {
        backend: backend.as_ref(),
        tools: &tools,
        templates: &templates,
        config: &config,
    };
    let trajectories = run_batch(&items, &ctx)
        .into_iter()
        .zip(&items)
        .map(|(r, item)| r.with_context(|| format!("item {}", item.id)))
        .collect::<Result<Vec<Trajectory>>>()?;
    write_jsonl(out, &trajectories)?;
    log::info!("wrote {} trajectories to {}", trajectories.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn rollout(
    manifest: &Path,
    out: &Path,
    group_size: usize,
    kind: BackendKind,
    temperature: f64,
    seed: Option<u64>,
    beta: f64,
    run: &RunArgs,
) -> Result<()> {
    let items = load_manifest(manifest)?;
    let backend = backend(kind, run.mock_script.as_deref())?;
    let tools = registry(run);
    let templates = templates(run, PromptTemplateSet::student())?;
    let config = EpisodeConfig {
        temperature,
        seed,
        beta,
        concurrency: run.concurrency,
        ..EpisodeConfig::for_rollouts()
    };
    let ctx = EpisodeContext {
        backend: backend.as_ref(),
        tools: &tools,
        templates: &templates,
        config: &config,
    };
    let groups = items
        .iter()
        .map(|item| rollout_group(item, &ctx, group_size).with_context(|| format!("item {}", item.id)))
        .collect::<Result<Vec<TrajectoryGroup>>>()?;
    write_jsonl(out, &groups)
}

#[derive(Deserialize, Default)]
struct ScoreConfig {
    #[serde(flatten)]
    reward: RewardConfig,
    beta: Option<f64>,
}

#[derive(Serialize)]
struct ScoredGroup {
    #[serde(flatten)]
    group: TrajectoryGroup,
    breakdowns: Vec<RewardBreakdown>,
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<GrpoDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective_error: Option<String>,
}

pub fn score(groups_path: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg: ScoreConfig = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ScoreConfig::default(),
    };
    cfg.reward.validate().map_err(|m| anyhow!("BAD_CONFIG: {m}"))?;
    let groups: Vec<TrajectoryGroup> = read_jsonl(groups_path)?;
    let mut scored = Vec::with_capacity(groups.len());
    for mut group in groups {
        if let Some(b) = cfg.beta {
            group.beta = b;
        }
        let (breakdowns, degenerate) = score_group(&mut group, &cfg.reward).with_context(|| format!("group {}", group.item_id))?;
        let (objective, objective_error) = match grpo_objective(&group, group.beta) {
            Ok(d) => (Some(d), None),
            Err(e) => (None, Some(e.to_string())),
        };
        scored.push(ScoredGroup {
            group,
            breakdowns,
            degenerate,
            objective,
            objective_error,
        });
    }
    write_jsonl(out, &scored)
}

pub fn serve_rewards(socket: Option<&str>, stdio: bool) -> Result<()> {
    match (socket, stdio) {
        (_, true) => bridge::serve_stdio()?,
        (Some(addr), false) => bridge::serve_socket(addr)?,
        (None, false) => bail!("one of --socket or --stdio is required"),
    }
    Ok(())
}

fn restrict(preds: &[Prediction], ids: &HashSet<&str>) -> Vec<Prediction> {
    preds.iter().filter(|p| ids.contains(p.id.as_str())).cloned().collect()
}

fn metrics_for(preds: &[Prediction], items: &[&NewsItem], restrict_ids: bool) -> Result<Metrics> {
    let truth: Vec<GroundTruth> = items.iter().map(|i| GroundTruth::from(*i)).collect();
    let preds = if restrict_ids {
        let ids: HashSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
        restrict(preds, &ids)
    } else {
        preds.to_vec()
    };
    Ok(compute_metrics(&preds, &truth)?)
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let items = load_manifest(&args.manifest)?;
    let (eval_items, split) = match args.split.as_deref() {
        Some("temporal") => {
            let s = temporal_split(&items, args.test_frac)?;
            let summary = SplitSummary {
                strategy: "temporal".into(),
                test_fraction: args.test_frac,
                n_train: s.train.len(),
                n_test: s.test.len(),
            };
            (s.test, Some(summary))
        }
        Some(other) => bail!("unknown split {other:?}"),
        None => (items, None),
    };
    let restricted = split.is_some();
    let refs: Vec<&NewsItem> = eval_items.iter().collect();
    let preds = load_predictions(&args.predictions)?;
    let metrics = metrics_for(&preds, &refs, restricted)?;

    let mut per_dataset = BTreeMap::new();
    let eval_ids: HashSet<&str> = refs.iter().map(|i| i.id.as_str()).collect();
    let scoped = restrict(&preds, &eval_ids);
    let mut by_dataset: BTreeMap<&str, Vec<&NewsItem>> = BTreeMap::new();
    for it in &refs {
        by_dataset.entry(it.source_dataset.as_str()).or_default().push(it);
    }
    for (name, group) in by_dataset {
        per_dataset.insert(name.to_string(), metrics_for(&scoped, &group, true)?);
    }

    let ratios = args
        .sweep
        .iter()
        .map(|s| s.parse::<CostRatio>())
        .collect::<Result<Vec<_>, _>>()?;
    if !args.sweep_predictions.is_empty() && args.sweep_predictions.len() != ratios.len() {
        bail!(
            "--sweep-predictions has {} files for {} ratios",
            args.sweep_predictions.len(),
            ratios.len()
        );
    }
    let mut runs = Vec::with_capacity(ratios.len());
    for (i, r) in ratios.iter().enumerate() {
        let m = match args.sweep_predictions.get(i) {
            Some(p) => metrics_for(&load_predictions(p)?, &refs, restricted)?,
            None => metrics.clone(),
        };
        runs.push((*r, m));
    }

    let mut audits = Vec::new();
    let mut audit = None;
    if args.audit {
        let trajectories: Vec<Trajectory> = read_jsonl(&args.predictions).context("--audit needs trajectory JSONL as --predictions")?;
        let by_id: BTreeMap<&str, &Trajectory> = trajectories.iter().map(|t| (t.item_id.as_str(), t)).collect();
        let pairs: Vec<(&Trajectory, &NewsItem)> = refs
            .iter()
            .filter_map(|it| by_id.get(it.id.as_str()).map(|t| (*t, *it)))
            .collect();
        let n_eligible = pairs.iter().filter(|(t, it)| t.verdict == Some(it.label)).count();
        let judge = backend(args.judge_backend, args.judge_script.as_deref())?;
        let templates = PromptTemplateSet::student();
        let eligible: Vec<_> = pairs.iter().filter(|(t, it)| t.verdict == Some(it.label)).collect();
        let results = audit_batch(&pairs, judge.as_ref(), &templates, args.audit_concurrency);
        let mut failures = Vec::new();
        for ((_, item), r) in eligible.iter().zip(results) {
            match r {
                Ok(s) => audits.push(s),
                Err(e) => {
                    log::warn!("audit of {} failed: {e}", item.id);
                    failures.push((item.id.clone(), e.code().to_string()));
                }
            }
        }
        audit = Some(AuditSummary::from_scores(n_eligible, &audits, failures));
    }

    let report = EvalReport {
        metrics,
        per_dataset,
        split,
        cost_sweep: cost_sweep(&runs),
        audit,
    };
    for path in emit_report(&report, &audits, &args.out)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

pub fn forge_generate(manifest: &Path, kind: BackendKind, teacher_model: Option<String>, out: &Path, run: &RunArgs) -> Result<()> {
    let items = load_manifest(manifest)?;
    let backend = backend(kind, run.mock_script.as_deref())?;
    let model = teacher_model.unwrap_or_else(|| match kind {
        BackendKind::Mock => "mock".to_string(),
        BackendKind::Http => std::env::var("EVIDENTIA_MODEL").unwrap_or_else(|_| "unknown".into()),
    });
    let tools = registry(run);
    let templates = templates(run, PromptTemplateSet::teacher())?;
    let config = EpisodeConfig {
        concurrency: run.concurrency,
        ..EpisodeConfig::default()
    };
    let ctx = EpisodeContext {
        backend: backend.as_ref(),
        tools: &tools,
        templates: &templates,
        config: &config,
    };
    let records = generate_teacher_trajectories(&items, &ctx, &model)?;
    Ok(forge::write_records(out, &records)?)
}

pub fn forge_filter(input: &Path, review: Option<&Path>, kept: &Path, rejected: &Path) -> Result<()> {
    let records = forge::read_records(input)?;
    let flagged = match review {
        Some(p) => forge::load_review(p)?,
        None => Default::default(),
    };
    let p = filter_rules(records, &flagged);
    forge::write_records(kept, &p.kept)?;
    forge::write_records(rejected, &p.rejected)?;
    eprintln!("kept {} rejected {}", p.kept.len(), p.rejected.len());
    Ok(())
}

pub fn forge_emit(input: &Path, out: &Path) -> Result<()> {
    let records = forge::read_records(input)?;
    let stats = emit_sft_dataset(&records, &PromptTemplateSet::student(), out)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

pub fn synth(out: &Path, n: usize, seed: u64, group_size: usize) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let root = out.canonicalize()?;
    let cfg = SynthConfig {
        n_items: n,
        seed,
        group_size,
        ..SynthConfig::default()
    };
    let corpus = synthetic::generate(&cfg, &root);
    synthetic::write_corpus(&corpus, &cfg, &root)?;
    eprintln!(
        "wrote {} items to {}; sweep files: {}",
        corpus.items.len(),
        root.display(),
        cfg.sweep.iter().map(synthetic::sweep_file_name).collect::<Vec<_>>().join(",")
    );
    Ok(())
}
