//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs with `cargo test -p evidentia-cli --test acceptance`.

#[path = "../../core/tests/support/forge_cases.rs"]
mod forge_cases;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use evidentia_core::eval::{
    bayes_threshold, compute_metrics, cost_sweep, temporal_split, threshold_predictions, CostRatio, GroundTruth, Metrics,
};
use evidentia_core::forge::filter_rules;
use evidentia_core::orchestrator::backend::{MockScript, ScriptedResponse};
use evidentia_core::parser::{render_turn, FormatVerdict};
use evidentia_core::reward::{grpo_objective_from_parts, reward_from_parts};
use evidentia_core::synthetic::PlanEntry;
use evidentia_core::tools::{clip_scout, sample_timestamps, RenderConfig, StubSearchProvider};
use evidentia_core::{
    group_advantages, kl_surrogate, parse_turn, run_episode, validate_turn, EpisodeConfig, EpisodeContext, Label,
    NewsItem, PromptTemplateSet, RewardConfig, ScriptedBackend, SourceDataset, ToolKind, ToolRegistry,
    TrajectoryLogProbs,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_label(rng: &mut impl Rng) -> Label {
    if rng.random_bool(0.5) {
        Label::Fake
    } else {
        Label::Real
    }
}

// Gated reward written out case by case, independent of the library.
fn oracle_reward(verdict: Option<Label>, truth: Label, wf: bool, tool: bool, c: &RewardConfig) -> f64 {
    let acc = if verdict == Some(truth) { c.r_acc_correct } else { 0.0 };
    let fmt = if wf { c.r_format_valid } else { 0.0 };
    let risk = match (verdict, truth) {
        (Some(Label::Fake), Label::Real) => -c.alpha_fp,
        (Some(Label::Real), Label::Fake) => -c.gamma_fn,
        _ => 0.0,
    };
    let gate = if !tool {
        0.0
    } else if acc > 0.0 {
        c.r_tool_plus
    } else {
        -c.r_tool_minus
    };
    acc + fmt + c.lambda_risk * risk + gate
}

fn reward_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let c = RewardConfig {
            lambda_risk: rng.random_range(0.0..3.0),
            alpha_fp: rng.random_range(0.0..3.0),
            gamma_fn: rng.random_range(0.0..3.0),
            r_tool_plus: rng.random_range(0.0..1.0),
            r_tool_minus: rng.random_range(0.0..1.0),
            r_format_valid: rng.random_range(-1.0..1.0),
            r_acc_correct: rng.random_range(0.01..2.0),
        };
        let verdict = match rng.random_range(0..3) {
            0 => None,
            1 => Some(Label::Fake),
            _ => Some(Label::Real),
        };
        let truth = random_label(&mut rng);
        let (wf, tool) = (rng.random_bool(0.5), rng.random_bool(0.5));
        let fv = FormatVerdict {
            well_formed: wf,
            answer_parseable: verdict.is_some(),
            violations: vec![],
        };
        if reward_from_parts(verdict, truth, &fv, tool, &c).total != oracle_reward(verdict, truth, wf, tool, &c) {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed();
    check(mismatches == 0, format!("{mismatches} of 10000 differ"))?;
    check(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("10000 cases exact in {elapsed:?}"))
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

fn advantage_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let g = rng.random_range(2..=16);
        let mut r: Vec<f64> = (0..g).map(|_| rng.random_range(-3.0..3.0)).collect();
        r[0] = r[1] + 1.0;
        let a = group_advantages(&r).map_err(|e| e.to_string())?;
        check(!a.degenerate, "non-degenerate group flagged degenerate")?;
        let (m, s) = moments(&a.values);
        worst = worst.max(m.abs()).max((s - 1.0).abs());
        let (k, b) = (rng.random_range(0.01..50.0), rng.random_range(-100.0..100.0));
        let moved: Vec<f64> = r.iter().map(|x| k * x + b).collect();
        let a2 = group_advantages(&moved).map_err(|e| e.to_string())?;
        for i in 0..g {
            worst = worst.max((a.values[i] - a2.values[i]).abs());
            for j in 0..g {
                if r[i] < r[j] {
                    check(a.values[i] < a.values[j] && a2.values[i] < a2.values[j], "ordering broken")?;
                }
            }
        }
        let flat = group_advantages(&vec![r[0]; g]).map_err(|e| e.to_string())?;
        check(flat.degenerate && flat.values.iter().all(|v| *v == 0.0), "degenerate group not zeroed")?;
    }
    check(worst < 1e-9, format!("max deviation {worst:e}"))?;
    Ok(format!("1000 groups, max deviation {worst:.1e}"))
}

fn kl_surrogate_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100_000 {
        let (x, y) = (rng.random_range(-60.0..0.0), rng.random_range(-60.0..0.0));
        let v = kl_surrogate(x, y).map_err(|e| e.to_string())?;
        check(v >= 0.0, format!("negative at ({x}, {y})"))?;
    }
    let ln2 = std::f64::consts::LN_2;
    let at2 = kl_surrogate(ln2, 0.0).map_err(|e| e.to_string())?;
    check((at2 - (2.0 - ln2 - 1.0)).abs() < 1e-12, format!("ratio 2 gives {at2}"))?;
    check(kl_surrogate(-4.5, -4.5) == Ok(0.0), "nonzero at equality")?;
    Ok(format!("100000 pairs nonnegative, ratio 2 -> {at2:.12}"))
}

fn lp(policy: f64, rollout: f64, reference: f64) -> Option<TrajectoryLogProbs> {
    Some(TrajectoryLogProbs {
        sum_logp_policy: policy,
        sum_logp_rollout: rollout,
        sum_logp_reference: reference,
        token_count: 32,
    })
}

fn grpo_null_test() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let g = rng.random_range(2..=16);
        let mut r: Vec<f64> = (0..g).map(|_| rng.random_range(-2.0..2.0)).collect();
        r[0] = r[1] + 0.5;
        let adv = group_advantages(&r).map_err(|e| e.to_string())?.values;
        let logprobs: Vec<_> = (0..g)
            .map(|_| {
                let x = rng.random_range(-300.0..-1.0);
                lp(x, x, x)
            })
            .collect();
        let d = grpo_objective_from_parts(&adv, &logprobs, 0.04).map_err(|e| e.to_string())?;
        worst = worst.max(d.objective.abs());
    }
    check(worst < 1e-9, format!("null objective reaches {worst:e}"))?;
    let ex = grpo_objective_from_parts(&[1.0, -1.0], &[lp(2f64.ln(), 0.0, 2f64.ln()), lp(-1.0, -1.0, -1.0)], 0.04)
        .map_err(|e| e.to_string())?
        .objective;
    check((ex - 0.5).abs() < 1e-12, format!("worked example gives {ex}"))?;
    Ok(format!("null |objective| <= {worst:.1e}, worked example {ex}"))
}

/// Scores sit at bin centres; the share of fakes grows with the bin, so the
/// fake-class precision of `score >= t` cannot drop as `t` rises.
fn binned_scores() -> (Vec<(String, f64)>, Vec<GroundTruth>) {
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for bin in 0..10usize {
        let centre = bin as f64 / 10.0 + 0.05;
        for k in 0..20usize {
            let id = format!("b{bin}-{k:02}");
            let label = if k < 2 * bin + 1 { Label::Fake } else { Label::Real };
            scores.push((id.clone(), centre));
            truth.push(GroundTruth { id, label });
        }
    }
    (scores, truth)
}

fn cost_ratio_direction() -> Outcome {
    let (scores, truth) = binned_scores();
    let base = RewardConfig::default();
    let ratios: Vec<CostRatio> = ["1:2", "1:1", "2:1"].iter().map(|s| s.parse().unwrap()).collect();
    let mut runs = Vec::new();
    let mut table = Vec::new();
    for r in &ratios {
        let cfg = r.config(&base);
        let preds = threshold_predictions(&scores, bayes_threshold(&cfg));
        runs.push((*r, compute_metrics(&preds, &truth).map_err(|e| e.to_string())?));

        // Brute force: pick the label with the larger expected reward.
        let (c, l) = (cfg.r_acc_correct, cfg.lambda_risk);
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for ((_, s), t) in scores.iter().zip(&truth) {
            let says_fake = s * c - (1.0 - s) * l * cfg.alpha_fp >= (1.0 - s) * c - s * l * cfg.gamma_fn;
            match (says_fake, t.label) {
                (true, Label::Fake) => tp += 1,
                (true, Label::Real) => fp += 1,
                (false, Label::Fake) => fneg += 1,
                _ => {}
            }
        }
        table.push((tp as f64 / (tp + fp) as f64, tp as f64 / (tp + fneg) as f64));
    }
    let sweep = cost_sweep(&runs);
    for (row, (p, r)) in sweep.iter().zip(&table) {
        check(row.precision == *p && row.recall == *r, format!("{} differs from brute force", row.ratio))?;
    }
    for w in sweep.windows(2) {
        check(w[1].recall <= w[0].recall, format!("recall rises {} -> {}", w[0].ratio, w[1].ratio))?;
        check(w[1].precision >= w[0].precision, format!("precision falls {} -> {}", w[0].ratio, w[1].ratio))?;
    }
    let cells: Vec<String> = sweep
        .iter()
        .map(|r| format!("{} P={:.3} R={:.3}", r.ratio, r.precision, r.recall))
        .collect();
    Ok(cells.join(", "))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_evidentia"))
        .args(args)
        .env_remove("EVIDENTIA_SEARCH_URL")
        .env_remove("EVIDENTIA_BACKEND_URL")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// synth, verify, rollout, score and eval through the binary. Returns the
/// files whose bytes must be reproducible.
fn pipeline(root: &Path, out: &Path) -> Result<Vec<PathBuf>, String> {
    let (manifest, script, search, grids) =
        (root.join("manifest.jsonl"), root.join("mock_script.json"), root.join("search"), root.join("grids"));
    let run = ["--mock-script", &s(&script), "--search-fixtures", &s(&search), "--grid-dir", &s(&grids)].map(String::from);
    let traj = out.join("trajectories.jsonl");
    let groups = out.join("groups.jsonl");
    let scored = out.join("scored.jsonl");
    let report = out.join("report");
    let with_run = |head: &[&str]| -> Vec<String> { head.iter().map(|x| x.to_string()).chain(run.iter().cloned()).collect() };
    let verify = with_run(&["verify", "--manifest", &s(&manifest), "--out", &s(&traj), "--backend", "mock"]);
    run_cli(&verify.iter().map(String::as_str).collect::<Vec<_>>())?;
    let rollout = with_run(&[
        "rollout", "--manifest", &s(&manifest), "--out", &s(&groups), "--backend", "mock", "--group-size", "4", "--seed", "1",
    ]);
    run_cli(&rollout.iter().map(String::as_str).collect::<Vec<_>>())?;
    run_cli(&["score", "--groups", &s(&groups), "--out", &s(&scored)])?;
    let sweep_files: Vec<String> = ["sweep_1-2.jsonl", "sweep_1-1.jsonl", "sweep_2-1.jsonl"].iter().map(|f| s(&root.join(f))).collect();
    run_cli(&[
        "eval",
        "--manifest",
        &s(&manifest),
        "--predictions",
        &s(&traj),
        "--out",
        &s(&report),
        "--sweep",
        "1:2,1:1,2:1",
        "--sweep-predictions",
        &sweep_files.join(","),
    ])?;
    Ok(vec![
        traj,
        groups,
        scored,
        report.join("report.json"),
        report.join("metrics.csv"),
        report.join("cost_sweep.csv"),
        report.join("cost_sweep_plot.csv"),
    ])
}

fn end_to_end(root: &Path) -> Outcome {
    let started = Instant::now();
    let out_a = root.join("run_a");
    let out_b = root.join("run_b");
    let files_a = pipeline(root, &out_a)?;
    let elapsed = started.elapsed();
    let files_b = pipeline(root, &out_b)?;
    for (a, b) in files_a.iter().zip(&files_b) {
        let (x, y) = (std::fs::read(a).map_err(|e| e.to_string())?, std::fs::read(b).map_err(|e| e.to_string())?);
        check(x == y, format!("{} differs between runs", a.file_name().unwrap().to_string_lossy()))?;
    }

    let plan: Vec<PlanEntry> = std::fs::read_to_string(root.join("plan.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let count = |v: Option<Label>, l: Label| plan.iter().filter(|p| p.expected_verdict == v && p.label == l).count();
    let (tp, fp, fneg, tn) = (
        count(Some(Label::Fake), Label::Fake),
        count(Some(Label::Fake), Label::Real),
        count(Some(Label::Real), Label::Fake),
        count(Some(Label::Real), Label::Real),
    );
    let unp = count(None, Label::Fake) + count(None, Label::Real);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_a.join("report/report.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let m: Metrics = serde_json::from_value(report["metrics"].clone()).map_err(|e| e.to_string())?;
    check(
        (m.tp, m.fp, m.fn_, m.tn, m.n_unparseable) == (tp, fp, fneg, tn, unp),
        format!("confusion {:?} vs plan {:?}", (m.tp, m.fp, m.fn_, m.tn, m.n_unparseable), (tp, fp, fneg, tn, unp)),
    )?;
    let expected = Metrics::from_counts(tp, fp, fneg, tn, unp, count(None, Label::Fake));
    check(m == expected, "metrics differ from recount")?;
    check(elapsed < Duration::from_secs(60), format!("pipeline took {elapsed:?}"))?;
    Ok(format!(
        "{} items, tp={tp} fp={fp} fn={fneg} tn={tn} unparseable={unp}, acc={:.3}, {elapsed:.1?}, byte-identical rerun",
        plan.len(),
        m.accuracy
    ))
}

fn clip_item(id: &str, video: &Path, duration: f64) -> NewsItem {
    NewsItem {
        id: id.into(),
        video_path: s(video),
        video_duration_s: duration,
        audio_transcript: "t".into(),
        metadata_text: "m".into(),
        label: Label::Fake,
        published_at: chrono::DateTime::from_timestamp(0, 0).unwrap(),
        source_dataset: SourceDataset::Synthetic,
    }
}

const STAGE1: [&str; 5] = [
    r#"<think>a</think><tool_call>{"tool":"ClipScout","start_s":10,"end_s":20}</tool_call>"#,
    r#"<think>a</think><tool_call>{"tool":"ClipScout","start_s":0,"end_s":5}</tool_call><tool_call>{"tool":"ClipScout","start_s":6,"end_s":9}</tool_call>"#,
    r#"<think>a</think><tool_call>{"tool":"FactProbe","query":"q"}</tool_call>"#,
    r#"<tool_call>{"tool":"ClipScout","start_s":1,"end_s":25}</tool_call>"#,
    r#"<think>a</think><answer>real</answer>"#,
];

const STAGE2: [&str; 4] = [
    r#"<think>b</think><answer>fake</answer>"#,
    r#"<think>b</think><tool_call>{"tool":"ClipScout","start_s":2,"end_s":8}</tool_call>"#,
    r#"<think>b</think><tool_call>{"tool":"ClipScout","start_s":12,"end_s":18}</tool_call><answer>fake</answer>"#,
    r#"<tool_call>{"tool":"ClipScout","start_s":3,"end_s":4}</tool_call><think>b</think><answer>real</answer>"#,
];

fn clip_scout_geometry(root: &Path) -> Outcome {
    let (_, ts) = sample_timestamps(10.0, 20.0, 60.0).map_err(|e| e.to_string())?;
    check(ts == [11.25, 13.75, 16.25, 18.75], format!("timestamps {ts:?}"))?;

    let mut grids = 0;
    for d in [30u32, 60, 90] {
        let video = root.join(format!("videos/clip_{d}"));
        for cap in [1024, 100, 64, 33] {
            let cfg = RenderConfig {
                resolution_cap: cap,
                output_dir: root.join(format!("geometry/{cap}")),
                decoder_command: None,
            };
            let g = clip_scout(2.0, d as f64 - 1.0, &clip_item(&format!("g{d}"), &video, d as f64), &cfg)
                .map_err(|e| e.to_string())?;
            check(g.width.max(g.height) <= cap, format!("{}x{} over cap {cap}", g.width, g.height))?;
            grids += 1;
        }
    }

    let video = root.join("videos/clip_30");
    let templates = PromptTemplateSet::student();
    let config = EpisodeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut refused = 0;
    for e in 0..1000 {
        let id = format!("adv{e:04}");
        let mut script = MockScript::default();
        script.push(&id, "stage1", None, ScriptedResponse::text(STAGE1[rng.random_range(0..STAGE1.len())]));
        script.push(&id, "stage2", None, ScriptedResponse::text(STAGE2[rng.random_range(0..STAGE2.len())]));
        let backend = ScriptedBackend::new(script);
        let grid_dir = root.join(format!("adversarial/{id}"));
        let mut tools = ToolRegistry::new(
            Arc::new(StubSearchProvider::new(root.join("search"))),
            RenderConfig {
                output_dir: grid_dir.clone(),
                ..RenderConfig::default()
            },
        );
        tools.measure_latency = false;
        let ctx = EpisodeContext {
            backend: &backend,
            tools: &tools,
            templates: &templates,
            config: &config,
        };
        let t = run_episode(&clip_item(&id, &video, 30.0), &ctx, None).map_err(|e| e.to_string())?;
        let rendered = std::fs::read_dir(&grid_dir).map(|d| d.count()).unwrap_or(0);
        let ran = t.observation.iter().filter(|o| o.tool_id == ToolKind::ClipScout && o.ok).count();
        check(rendered <= 1 && ran <= 1, format!("{id}: {rendered} grids rendered"))?;
        refused += t.refused_calls.len();
    }
    Ok(format!("{grids} capped grids, 1000 adversarial episodes, {refused} second calls refused"))
}

fn parser_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    const PIECES: [&str; 8] = ["<think>", "</think>", "<tool_call>", "</tool_call>", "<answer>", "</answer>", "<", ">"];
    let mut buf = Vec::with_capacity(512);
    for i in 0..100_000 {
        buf.clear();
        let len = rng.random_range(0..256);
        while buf.len() < len {
            if i % 2 == 0 && rng.random_bool(0.2) {
                buf.extend_from_slice(PIECES[rng.random_range(0..PIECES.len())].as_bytes());
            } else {
                buf.push(rng.random());
            }
        }
        let raw = String::from_utf8_lossy(&buf);
        let caught = std::panic::catch_unwind(|| parse_turn(&raw));
        check(caught.is_ok(), format!("panic on {raw:?}"))?;
    }

    let mut checked = 0;
    for _ in 0..10_000 {
        let think: String = (0..rng.random_range(0..30)).map(|_| rng.random_range(b' '..=b'~') as char).filter(|c| *c != '<').collect();
        let action = match rng.random_range(0..3) {
            0 => format!("<answer>{}</answer>", if rng.random_bool(0.5) { "fake" } else { "Real " }),
            1 => format!(r#"<tool_call>{{"tool":"FactProbe","query":"q{}"}}</tool_call>"#, rng.random_range(0..99)),
            _ => {
                let a = rng.random_range(0..50);
                format!(r#"<tool_call>{{"tool":"ClipScout","start_s":{a},"end_s":{}}}</tool_call>"#, a + 5)
            }
        };
        let raw = format!("<think>{think}</think>\n{action}");
        let p = parse_turn(&raw);
        if !validate_turn(&p, evidentia_core::parser::StageExpectation::Stage1).well_formed {
            return Err(format!("generator produced malformed {raw:?}"));
        }
        let q = parse_turn(&render_turn(&p));
        check(
            (&q.think_text, &q.tool_call_raw, &q.answer_raw) == (&p.think_text, &p.tool_call_raw, &p.answer_raw),
            format!("round trip changed {raw:?}"),
        )?;
        checked += 1;
    }
    Ok(format!("100000 inputs without panic, {checked} round trips"))
}

fn temporal_split_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let n: usize = rng.random_range(1..400);
        let items: Vec<NewsItem> = (0..n)
            .map(|i| {
                let mut it = clip_item(&format!("x{i:04}"), Path::new("v"), 10.0);
                it.published_at = chrono::DateTime::from_timestamp(rng.random_range(0..40) * 86_400, 0).unwrap();
                it
            })
            .collect();
        let sp = temporal_split(&items, 0.15).map_err(|e| e.to_string())?;
        let want = (15 * n).div_ceil(100);
        check(sp.test.len() == want, format!("n={n}: |test|={} want {want}", sp.test.len()))?;
        let ids: BTreeSet<&str> = sp.train.iter().chain(&sp.test).map(|i| i.id.as_str()).collect();
        check(ids.len() == n, "split lost or duplicated items")?;
        let newest_train = sp.train.iter().map(|i| i.published_at).max();
        let oldest_test = sp.test.iter().map(|i| i.published_at).min().unwrap();
        check(newest_train.is_none_or(|t| t <= oldest_test), "train item newer than test item")?;
    }
    Ok("1000 random sets".into())
}

fn forge_filtering() -> Outcome {
    let part = filter_rules(forge_cases::records(), &forge_cases::flagged());
    for r in part.kept.iter().chain(&part.rejected) {
        let case = forge_cases::CASES.iter().find(|c| c.id == r.item_id).ok_or("unknown id")?;
        check(r.rejection_codes == case.expected, format!("{}: {:?} vs {:?}", r.item_id, r.rejection_codes, case.expected))?;
    }
    Ok(format!("{} kept, {} rejected, all codes match", part.kept.len(), part.rejected.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path().join("synthetic");
    let setup = run_cli(&["synth", "--out", &s(&root), "--n", "200", "--seed", "7"]);

    let criteria: Vec<Criterion> = vec![
        ("reward oracle equivalence", Box::new(reward_oracle)),
        ("advantage contract", Box::new(advantage_contract)),
        ("KL surrogate", Box::new(kl_surrogate_checks)),
        ("GRPO objective null test", Box::new(grpo_null_test)),
        ("cost-ratio direction", Box::new(cost_ratio_direction)),
        ("end-to-end mock pipeline", Box::new(|| setup.clone().and_then(|_| end_to_end(&root)))),
        ("ClipScout geometry and budget", Box::new(|| setup.clone().and_then(|_| clip_scout_geometry(&root)))),
        ("parser totality fuzz", Box::new(parser_fuzz)),
        ("temporal split", Box::new(temporal_split_checks)),
        ("forge filtering", Box::new(forge_filtering)),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
