//! Deterministic synthetic corpora for demos and end-to-end tests: a manifest,
//! a scripted model, search fixtures, fixture videos and the plan that says
//! what each item's episode should produce.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::eval::{bayes_threshold, threshold_predictions, CostRatio};
use crate::orchestrator::{MockScript, ScriptedResponse};
use crate::tools::{FixtureVideo, StubSearchProvider};
use crate::types::{Label, NewsItem, RewardConfig, SourceDataset, ToolKind};

const DURATIONS: [u32; 3] = [30, 60, 90];
const TOPICS: [&str; 8] = [
    "flooded subway station",
    "celebrity hospital visit",
    "miracle cancer cure",
    "stadium collapse",
    "wildfire evacuation",
    "election ballot dumping",
    "shark in a shopping mall",
    "new bridge opening",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Answers in the first turn.
    Direct,
    FactProbe,
    ClipScout,
    /// First turn has no tags at all.
    Untagged,
    /// First turn requests a tool with a body that is not JSON.
    BadToolJson,
    /// Uses ClipScout, then asks for it again while answering.
    RepeatTool,
}

impl Behavior {
    pub fn tool(self) -> Option<ToolKind> {
        match self {
            Behavior::FactProbe => Some(ToolKind::FactProbe),
            Behavior::ClipScout | Behavior::RepeatTool => Some(ToolKind::ClipScout),
            _ => None,
        }
    }

    /// Whether the scripted turns produce a parseable answer.
    pub fn yields_verdict(self) -> bool {
        !matches!(self, Behavior::Untagged | Behavior::BadToolJson)
    }
}

/// What one synthetic item is expected to produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub id: String,
    pub label: Label,
    /// Probability-of-Fake score driving the scripted verdict.
    pub score: f64,
    pub behavior: Behavior,
    pub expected_verdict: Option<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_items: usize,
    pub seed: u64,
    /// Rollouts that get their own scripted variant; every `flip_every`-th of
    /// them answers the opposite way.
    pub group_size: usize,
    pub flip_every: usize,
    pub sweep: Vec<CostRatio>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_items: 200,
            seed: 7,
            group_size: 4,
            flip_every: 3,
            sweep: ["1:2", "1:1", "2:1"].iter().map(|s| s.parse().expect("literal ratio")).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub items: Vec<NewsItem>,
    pub plan: Vec<PlanEntry>,
    pub script: MockScript,
    /// `(file name, JSON body)` for the stub search provider.
    pub search_fixtures: Vec<(String, serde_json::Value)>,
}

fn label_str(l: Label) -> &'static str {
    l.as_str()
}

fn answer_turn(reason: &str, v: Label) -> String {
    format!("<think>{reason}</think><answer>{}</answer>", label_str(v))
}

fn pick_behavior(u: f64) -> Behavior {
    match u {
        u if u < 0.40 => Behavior::Direct,
        u if u < 0.65 => Behavior::FactProbe,
        u if u < 0.85 => Behavior::ClipScout,
        u if u < 0.90 => Behavior::Untagged,
        u if u < 0.95 => Behavior::BadToolJson,
        _ => Behavior::RepeatTool,
    }
}

fn dataset(i: usize) -> SourceDataset {
    [SourceDataset::FakeSV, SourceDataset::FakeTT, SourceDataset::FakeVV, SourceDataset::Synthetic][i % 4]
}

pub fn video_dir(root: &Path, duration: u32) -> PathBuf {
    root.join("videos").join(format!("clip_{duration}"))
}

pub fn probe_query(id: &str, topic: &str) -> String {
    format!("{topic} video {id} fact check")
}

/// Builds the corpus in memory. Video paths point under `root`.
pub fn generate(cfg: &SynthConfig, root: &Path) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base: DateTime<Utc> = DateTime::from_timestamp(1_704_067_200, 0).expect("valid epoch");
    let threshold = bayes_threshold(&RewardConfig::default());

    let mut items = Vec::with_capacity(cfg.n_items);
    let mut plan = Vec::with_capacity(cfg.n_items);
    let mut script = MockScript::default();
    let mut search_fixtures = Vec::new();
    let mut last_ts = base;

    for i in 0..cfg.n_items {
        let id = format!("syn-{i:04}");
        let label = if rng.random_bool(0.5) { Label::Fake } else { Label::Real };
        let score: f64 = match label {
            Label::Fake => 0.25 + 0.75 * rng.random::<f64>(),
            Label::Real => 0.75 * rng.random::<f64>(),
        };
        let verdict = if score >= threshold { Label::Fake } else { Label::Real };
        let behavior = pick_behavior(rng.random());
        let topic = TOPICS[rng.random_range(0..TOPICS.len())];
        let duration = DURATIONS[rng.random_range(0..DURATIONS.len())];
        // Roughly one in ten items shares its predecessor's timestamp.
        let ts = if i > 0 && rng.random_bool(0.1) {
            last_ts
        } else {
            base + Duration::minutes(rng.random_range(0..525_600))
        };
        last_ts = ts;

        let item = NewsItem {
            id: id.clone(),
            video_path: video_dir(root, duration).to_string_lossy().into_owned(),
            video_duration_s: duration as f64,
            audio_transcript: format!("Footage shows the {topic}. People can be heard reacting in the background."),
            metadata_text: format!("{topic} caught on camera #{} #viral", topic.split(' ').next().unwrap_or("news")),
            label,
            published_at: ts,
            source_dataset: dataset(i),
        };

        let lp = -(10.0 + 20.0 * rng.random::<f64>());
        let with_lp = |text: String, shift: f64| ScriptedResponse {
            text,
            logprob: Some(lp + shift),
            reference_logprob: Some(lp + shift + 0.05),
            token_count: None,
        };
        let reason = format!("The post claims a {topic}; I weigh how plausible the footage and text are.");
        let clip = {
            let start = (rng.random::<f64>() * duration as f64 * 0.8).floor();
            (start, start + 4.0 + (rng.random::<f64>() * 8.0).floor())
        };
        let query = probe_query(&id, topic);
        let stage1 = match behavior {
            Behavior::Direct => answer_turn(&reason, verdict),
            Behavior::FactProbe => format!(
                "<think>{reason} I need an outside source.</think><tool_call>{}</tool_call>",
                json!({"tool": "FactProbe", "query": query})
            ),
            Behavior::ClipScout | Behavior::RepeatTool => format!(
                "<think>{reason} I should look at the frames.</think><tool_call>{}</tool_call>",
                json!({"tool": "ClipScout", "start_s": clip.0, "end_s": clip.1})
            ),
            Behavior::Untagged => format!("I believe this is {}.", label_str(verdict)),
            Behavior::BadToolJson => format!("<think>{reason}</think><tool_call>{{\"tool\": \"FactProbe\", query}}</tool_call>"),
        };
        let stage2 = match behavior {
            Behavior::RepeatTool => format!(
                "<think>Still unsure.</think><tool_call>{}</tool_call><answer>{}</answer>",
                json!({"tool": "ClipScout", "start_s": 0.0, "end_s": 2.0}),
                label_str(verdict)
            ),
            _ => answer_turn("The tool output settles it.", verdict),
        };
        script.push(&id, "stage1", None, with_lp(stage1.clone(), 0.0));
        script.push(&id, "stage2", None, with_lp(stage2.clone(), 0.0));

        if behavior.yields_verdict() {
            for r in 0..cfg.group_size {
                let flip = cfg.flip_every > 0 && r % cfg.flip_every == cfg.flip_every - 1;
                let v = if flip { verdict.flipped() } else { verdict };
                let shift = -0.5 * r as f64;
                if behavior.tool().is_none() {
                    script.push(&id, "stage1", Some(r), with_lp(answer_turn(&reason, v), shift));
                } else {
                    script.push(&id, "stage1", Some(r), with_lp(stage1.clone(), shift));
                    script.push(&id, "stage2", Some(r), with_lp(answer_turn("Checked.", v), shift));
                }
            }
        }

        if behavior == Behavior::FactProbe && i % 10 != 0 {
            let organic = json!({"organic": [
                {"title": format!("Fact check: {topic}"), "snippet": format!("Reporters traced the {topic} clip to its source."), "link": format!("https://factcheck.example.org/{id}"), "position": 2},
                {"title": "Viral repost", "snippet": "Shared thousands of times.", "link": format!("https://www.youtube.com/watch?v={id}"), "position": 1},
                {"title": format!("Local news on the {topic}"), "snippet": "Officials commented on the footage.", "link": format!("https://news.example.com/{id}"), "position": 3},
                {"title": "Forum thread", "snippet": "Users argue about the clip.", "link": format!("https://old.reddit.com/r/news/{id}")},
            ]});
            search_fixtures.push((format!("{}.json", StubSearchProvider::key(&query)), organic));
        }

        plan.push(PlanEntry {
            id,
            label,
            score,
            behavior,
            expected_verdict: behavior.yields_verdict().then_some(verdict),
        });
        items.push(item);
    }

    SynthCorpus {
        items,
        plan,
        script,
        search_fixtures,
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, &r).map_err(std::io::Error::other)?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf)
}

pub fn sweep_file_name(r: &CostRatio) -> String {
    format!("sweep_{}-{}.jsonl", r.alpha, r.gamma)
}

/// Writes `manifest.jsonl`, `mock_script.json`, `plan.jsonl`, `search/`,
/// `videos/`, `review.jsonl` and one threshold-policy prediction file per
/// sweep ratio into `root`.
pub fn write_corpus(corpus: &SynthCorpus, cfg: &SynthConfig, root: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(root.join("search"))?;
    write_jsonl(&root.join("manifest.jsonl"), &corpus.items)?;
    write_jsonl(&root.join("plan.jsonl"), &corpus.plan)?;
    std::fs::write(
        root.join("mock_script.json"),
        serde_json::to_vec_pretty(&corpus.script).map_err(std::io::Error::other)?,
    )?;
    for (name, body) in &corpus.search_fixtures {
        std::fs::write(root.join("search").join(name), serde_json::to_vec(body).map_err(std::io::Error::other)?)?;
    }
    for d in DURATIONS {
        let fixture = FixtureVideo {
            duration_s: d as f64,
            fps: 1.0,
            frame_count: d + 1,
        };
        fixture.write(&video_dir(root, d), |k| {
            let shade = (k * 255 / d.max(1)) as u8;
            RgbImage::from_pixel(64, 36, Rgb([shade, 255 - shade, (d as u8).wrapping_mul(2)]))
        })?;
    }
    // A reviewer flags every seventh item.
    let review = corpus
        .plan
        .iter()
        .enumerate()
        .map(|(i, p)| json!({"item_id": p.id, "flag": i % 7 == 3}));
    write_jsonl(&root.join("review.jsonl"), review)?;

    let scores: Vec<(String, f64)> = corpus.plan.iter().map(|p| (p.id.clone(), p.score)).collect();
    for r in &cfg.sweep {
        let th = bayes_threshold(&r.config(&RewardConfig::default()));
        write_jsonl(&root.join(sweep_file_name(r)), threshold_predictions(&scores, th))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            n_items: 30,
            ..Default::default()
        };
        let a = generate(&cfg, Path::new("/x"));
        let b = generate(&cfg, Path::new("/x"));
        assert_eq!(a.items, b.items);
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.script, b.script);
    }

    #[test]
    fn every_behavior_appears_in_default_corpus() {
        let c = generate(&SynthConfig::default(), Path::new("/x"));
        for b in [
            Behavior::Direct,
            Behavior::FactProbe,
            Behavior::ClipScout,
            Behavior::Untagged,
            Behavior::BadToolJson,
            Behavior::RepeatTool,
        ] {
            assert!(c.plan.iter().any(|p| p.behavior == b), "{b:?}");
        }
    }
}
