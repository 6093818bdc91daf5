//! Web-evidence retrieval: one search request, organic results only, social
//! and user-generated hosts removed, top-k snippets folded into a short report.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ToolError;

pub const NO_EVIDENCE_FOUND: &str = "NO_EVIDENCE_FOUND";
pub const DEFAULT_BLOCKLIST: &str = include_str!("../../assets/blocklist.txt");

/// One organic hit as returned by the provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganicResult {
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    pub link: String,
    #[serde(default)]
    pub position: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
struct SearchResponse {
    #[serde(default)]
    organic: Vec<OrganicResult>,
}

/// Anything that can answer a web-search query with organic results.
pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<OrganicResult>, ToolError>;
}

/// Host-suffix blocklist. `example.com` blocks `example.com` and every
/// subdomain of it, but not `notexample.com`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocklist {
    suffixes: BTreeSet<String>,
}

impl Blocklist {
    /// One suffix per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let suffixes = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim().trim_start_matches('.').to_ascii_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Self { suffixes }
    }

    pub fn empty() -> Self {
        Self {
            suffixes: BTreeSet::new(),
        }
    }

    pub fn blocks_host(&self, host: &str) -> bool {
        let host = host.trim_end_matches('.').to_ascii_lowercase();
        self.suffixes.iter().any(|s| {
            host == *s || (host.len() > s.len() && host.ends_with(s.as_str()) && host.as_bytes()[host.len() - s.len() - 1] == b'.')
        })
    }

    /// Links that do not parse to a host are treated as blocked.
    pub fn blocks_link(&self, link: &str) -> bool {
        match url::Url::parse(link).ok().and_then(|u| u.host_str().map(str::to_owned)) {
            Some(host) => self.blocks_host(&host),
            None => true,
        }
    }
}

impl Default for Blocklist {
    fn default() -> Self {
        Self::parse(DEFAULT_BLOCKLIST)
    }
}

#[derive(Debug, Clone)]
pub struct FactProbeConfig {
    pub top_k: usize,
    pub max_report_chars: usize,
    pub blocklist: Blocklist,
}

impl Default for FactProbeConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            max_report_chars: 2000,
            blocklist: Blocklist::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    pub title: String,
    pub snippet: String,
    pub url: String,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub query: String,
    pub entries: Vec<EvidenceEntry>,
    pub synthesized_text: String,
    pub sources_dropped: usize,
}

/// Runs one retrieval round for `query`.
pub fn fact_probe(query: &str, provider: &dyn SearchProvider, cfg: &FactProbeConfig) -> Result<EvidenceReport, ToolError> {
    let query = query.trim();
    if query.is_empty() {
        return Err(ToolError::BadParams("empty query".into()));
    }
    let mut organic = provider.search(query)?;
    let total = organic.len();
    // Stable: unranked results keep provider order after ranked ones.
    organic.sort_by_key(|r| r.position.unwrap_or(u32::MAX));

    let entries: Vec<EvidenceEntry> = organic
        .into_iter()
        .filter(|r| !cfg.blocklist.blocks_link(&r.link))
        .take(cfg.top_k)
        .enumerate()
        .map(|(i, r)| EvidenceEntry {
            title: r.title.trim().to_string(),
            snippet: r.snippet.trim().to_string(),
            url: r.link.trim().to_string(),
            rank: i as u32 + 1,
        })
        .collect();

    let synthesized_text = synthesize(&entries, cfg.max_report_chars);
    Ok(EvidenceReport {
        query: query.to_string(),
        sources_dropped: total - entries.len(),
        entries,
        synthesized_text,
    })
}

fn synthesize(entries: &[EvidenceEntry], max_chars: usize) -> String {
    if entries.is_empty() {
        return NO_EVIDENCE_FOUND.to_string();
    }
    let mut text = String::new();
    for (i, e) in entries.iter().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        let _ = write!(text, "[{}] {} \u{2014} {} ({})", e.rank, e.title, e.snippet, e.url);
    }
    if text.chars().count() > max_chars {
        text = text.chars().take(max_chars).collect();
    }
    text
}

/// Reads canned provider responses from a directory.
///
/// A query maps to `<key>.json` where `key` is [`StubSearchProvider::key`];
/// `default.json` is used when no keyed file exists, and an empty result set
/// when neither does. Files use the provider's own `{"organic": [...]}` shape.
#[derive(Debug, Clone)]
pub struct StubSearchProvider {
    dir: PathBuf,
}

impl StubSearchProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(query: &str) -> String {
        let digest = Sha256::digest(query.trim().as_bytes());
        hex::encode(&digest[..8])
    }
}

impl SearchProvider for StubSearchProvider {
    fn search(&self, query: &str) -> Result<Vec<OrganicResult>, ToolError> {
        let keyed = self.dir.join(format!("{}.json", Self::key(query)));
        let path = if keyed.exists() {
            keyed
        } else {
            let fallback = self.dir.join("default.json");
            if !fallback.exists() {
                return Ok(Vec::new());
            }
            fallback
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ToolError::ProviderError(format!("{}: {e}", path.display())))?;
        let resp: SearchResponse = serde_json::from_str(&text)
            .map_err(|e| ToolError::ProviderError(format!("{}: {e}", path.display())))?;
        Ok(resp.organic)
    }
}

pub const SEARCH_URL_ENV: &str = "EVIDENTIA_SEARCH_URL";
pub const SEARCH_KEY_ENV: &str = "EVIDENTIA_SEARCH_API_KEY";
const DEFAULT_SEARCH_URL: &str = "https://google.serper.dev/search";

/// Serper-style HTTP provider: `POST {"q": query}` with an `X-API-KEY` header.
#[derive(Debug, Clone)]
pub struct HttpSearchProvider {
    pub base_url: String,
    pub api_key: String,
    pub deadline: Duration,
    pub retries: u32,
    pub backoff: Duration,
    pub num_results: usize,
}

impl HttpSearchProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            deadline: Duration::from_secs(10),
            retries: 2,
            backoff: Duration::from_millis(250),
            num_results: 10,
        }
    }

    pub fn from_env() -> Result<Self, ToolError> {
        let key = std::env::var(SEARCH_KEY_ENV)
            .map_err(|_| ToolError::ProviderError(format!("{SEARCH_KEY_ENV} is not set")))?;
        let url = std::env::var(SEARCH_URL_ENV).unwrap_or_else(|_| DEFAULT_SEARCH_URL.to_string());
        Ok(Self::new(url, key))
    }

    fn attempt(&self, agent: &ureq::Agent, query: &str) -> Result<Vec<OrganicResult>, Attempt> {
        let body = serde_json::json!({ "q": query, "num": self.num_results });
        let result = agent
            .post(&self.base_url)
            .header("X-API-KEY", &self.api_key)
            .header("Content-Type", "application/json")
            .send_json(&body);
        match result {
            Ok(mut resp) => resp
                .body_mut()
                .read_json::<SearchResponse>()
                .map(|r| r.organic)
                .map_err(|e| Attempt::Fatal(ToolError::ProviderError(format!("bad response body: {e}")))),
            Err(ureq::Error::StatusCode(code)) if code >= 500 || code == 429 => {
                Attempt::retry(ToolError::ProviderError(format!("status {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => Err(Attempt::Fatal(ToolError::ProviderError(format!("status {code}")))),
            Err(ureq::Error::Timeout(_)) => Attempt::retry(ToolError::ProviderTimeout),
            Err(e) => Attempt::retry(ToolError::ProviderError(e.to_string())),
        }
    }
}

enum Attempt {
    Retry(ToolError),
    Fatal(ToolError),
}

impl Attempt {
    fn retry<T>(e: ToolError) -> Result<T, Attempt> {
        Err(Attempt::Retry(e))
    }
}

impl SearchProvider for HttpSearchProvider {
    fn search(&self, query: &str) -> Result<Vec<OrganicResult>, ToolError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.deadline))
            .build()
            .into();
        let mut last = ToolError::ProviderTimeout;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&agent, query) {
                Ok(results) => return Ok(results),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("search attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<OrganicResult>);

    impl SearchProvider for Fixed {
        fn search(&self, _: &str) -> Result<Vec<OrganicResult>, ToolError> {
            Ok(self.0.clone())
        }
    }

    fn hit(i: u32, host: &str) -> OrganicResult {
        OrganicResult {
            title: format!("Title {i}"),
            snippet: format!("Snippet {i}"),
            link: format!("https://{host}/article/{i}"),
            position: Some(i),
        }
    }

    #[test]
    fn blocklist_suffix_matching() {
        let b = Blocklist::parse("# social\nfacebook.com\n.tiktok.com  # leading dot ok\n");
        assert!(b.blocks_host("facebook.com"));
        assert!(b.blocks_host("m.facebook.com"));
        assert!(b.blocks_host("WWW.TIKTOK.COM"));
        assert!(!b.blocks_host("notfacebook.com"));
        assert!(!b.blocks_host("reuters.com"));
        assert!(b.blocks_link("not a url"));
    }

    #[test]
    fn default_blocklist_covers_major_platforms() {
        let b = Blocklist::default();
        for h in ["www.youtube.com", "x.com", "twitter.com", "www.reddit.com", "weibo.com", "www.douyin.com"] {
            assert!(b.blocks_host(h), "{h}");
        }
        assert!(!b.blocks_host("www.reuters.com"));
    }

    #[test]
    fn top_k_truncation_counts_dropped() {
        let p = Fixed((1..=10).map(|i| hit(i, "news.example.org")).collect());
        let r = fact_probe("q", &p, &FactProbeConfig::default()).unwrap();
        assert_eq!(r.entries.len(), 5);
        assert!(r.sources_dropped >= 5);
        assert!(r.entries.windows(2).all(|w| w[0].rank < w[1].rank));
    }

    #[test]
    fn all_blocklisted_yields_sentinel() {
        let p = Fixed(vec![hit(1, "www.facebook.com"), hit(2, "twitter.com")]);
        let r = fact_probe("q", &p, &FactProbeConfig::default()).unwrap();
        assert!(r.entries.is_empty());
        assert_eq!(r.synthesized_text, NO_EVIDENCE_FOUND);
        assert_eq!(r.sources_dropped, 2);
    }

    #[test]
    fn provider_rank_order_wins() {
        let p = Fixed(vec![hit(3, "c.org"), hit(1, "a.org"), hit(2, "www.reddit.com")]);
        let r = fact_probe("q", &p, &FactProbeConfig::default()).unwrap();
        let urls: Vec<_> = r.entries.iter().map(|e| e.url.as_str()).collect();
        assert_eq!(urls, ["https://a.org/article/1", "https://c.org/article/3"]);
        assert_eq!(r.entries[1].rank, 2);
    }

    #[test]
    fn report_is_capped() {
        let p = Fixed((1..=5).map(|i| hit(i, "a.org")).collect());
        let cfg = FactProbeConfig {
            max_report_chars: 40,
            ..Default::default()
        };
        let r = fact_probe("q", &p, &cfg).unwrap();
        assert_eq!(r.synthesized_text.chars().count(), 40);
    }
}
