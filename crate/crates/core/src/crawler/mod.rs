//! Breadth-first same-site crawling.
//!
//! The crawl proceeds level by level. Within a level, URLs are fetched in
//! groups of at most `max_concurrent_fetches`, and results are consumed in
//! frontier order, so the page list depends only on what the fetcher returns,
//! never on timing. Links are queued in document order.

mod html;
mod robots;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::corpus::{clean_text, segment_sentences, Corpus, SegmentConfig};

pub use html::{extract_links, extract_text, resolve_link, scan_html, ScannedHtml};
pub use robots::RobotsRules;

/// Hard ceiling on `max_depth`.
pub const MAX_DEPTH_LIMIT: usize = 10;

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("invalid crawl configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlConfig {
    pub seed_urls: Vec<String>,
    pub max_depth: usize,
    pub max_pages: usize,
    pub same_host_only: bool,
    /// Minimum spacing between two requests to the same host.
    pub delay_ms: u64,
    pub max_concurrent_fetches: usize,
    pub respect_robots: bool,
    pub user_agent: String,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig {
            seed_urls: Vec::new(),
            max_depth: 3,
            max_pages: 1000,
            same_host_only: true,
            delay_ms: 1000,
            max_concurrent_fetches: 4,
            respect_robots: true,
            user_agent: concat!("bitextmine/", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

impl CrawlConfig {
    pub fn validate(&self) -> Result<Vec<Url>, CrawlError> {
        let bad = |m: String| Err(CrawlError::Config(m));
        if self.max_pages == 0 {
            return bad("max_pages must be at least 1".into());
        }
        if self.max_depth > MAX_DEPTH_LIMIT {
            return bad(format!("max_depth must be at most {MAX_DEPTH_LIMIT}"));
        }
        if self.max_concurrent_fetches == 0 {
            return bad("max_concurrent_fetches must be at least 1".into());
        }
        self.seed_urls
            .iter()
            .map(|s| match Url::parse(s) {
                Ok(u) if matches!(u.scheme(), "http" | "https") && u.host_str().is_some() => {
                    Ok(without_fragment(u))
                }
                _ => Err(CrawlError::Config(format!("seed `{s}` is not an absolute http(s) URL"))),
            })
            .collect()
    }
}

fn without_fragment(mut u: Url) -> Url {
    u.set_fragment(None);
    u
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub url: String,
    pub depth: usize,
    pub text_blocks: Vec<String>,
}

/// Raw answer from a fetcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

/// Page-fetching capability injected into [`crawl`].
pub trait Fetcher: Send + Sync {
    /// Fetches `url`. `Err` is a transport-level failure.
    fn fetch(&self, url: &Url) -> Result<FetchResponse, String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlFailure {
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlReport {
    pub pages_fetched: usize,
    pub failures: Vec<CrawlFailure>,
    pub skipped_non_html: usize,
    pub blocked_by_robots: usize,
    pub bytes: u64,
    /// Pages kept per host.
    pub per_site: BTreeMap<String, usize>,
}

fn is_html(resp: &FetchResponse) -> bool {
    match &resp.content_type {
        Some(ct) => {
            let mime = ct.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
            mime == "text/html" || mime == "application/xhtml+xml"
        }
        None => {
            let head = &resp.body[..resp.body.len().min(512)];
            let head = String::from_utf8_lossy(head).to_ascii_lowercase();
            let t = head.trim_start();
            t.starts_with("<!doctype html") || t.starts_with("<html") || head.contains("<body")
        }
    }
}

fn declared_charset(ct: &str) -> Option<String> {
    ct.split(';').skip(1).find_map(|p| {
        let (k, v) = p.split_once('=')?;
        (k.trim().eq_ignore_ascii_case("charset"))
            .then(|| v.trim().trim_matches('"').to_ascii_lowercase())
    })
}

enum Outcome {
    Page { text: Vec<String>, hrefs: Vec<String>, bytes: u64 },
    NonHtml { bytes: u64 },
    Failed(String),
}

fn process(resp: Result<FetchResponse, String>) -> Outcome {
    let resp = match resp {
        Ok(r) => r,
        Err(e) => return Outcome::Failed(e),
    };
    let bytes = resp.body.len() as u64;
    if !(200..300).contains(&resp.status) {
        return Outcome::Failed(format!("HTTP status {}", resp.status));
    }
    if !is_html(&resp) {
        return Outcome::NonHtml { bytes };
    }
    if let Some(cs) = resp.content_type.as_deref().and_then(declared_charset) {
        if cs != "utf-8" && cs != "utf8" && cs != "us-ascii" {
            return Outcome::Failed(format!("unsupported charset {cs}"));
        }
    }
    match String::from_utf8(resp.body) {
        Ok(body) => {
            let scanned = scan_html(&body);
            Outcome::Page {
                text: scanned.blocks,
                hrefs: scanned.hrefs,
                bytes,
            }
        }
        Err(_) => Outcome::Failed("body is not valid UTF-8".into()),
    }
}

/// Spaces out requests per host across threads.
struct HostClock {
    delay: Duration,
    next: Mutex<HashMap<String, Instant>>,
}

impl HostClock {
    fn wait(&self, host: &str) {
        if self.delay.is_zero() {
            return;
        }
        let slot = {
            let mut next = self.next.lock().expect("host clock poisoned");
            let now = Instant::now();
            let slot = next.get(host).copied().filter(|&t| t > now).unwrap_or(now);
            next.insert(host.to_string(), slot + self.delay);
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

fn host_key(u: &Url) -> String {
    match u.port() {
        Some(p) => format!("{}:{p}", u.host_str().unwrap_or("")),
        None => u.host_str().unwrap_or("").to_string(),
    }
}

fn robots_path(u: &Url) -> String {
    match u.query() {
        Some(q) => format!("{}?{q}", u.path()),
        None => u.path().to_string(),
    }
}

/// Crawls breadth-first from the seeds. Every URL is fetched at most once;
/// pages deeper than `max_depth` are never fetched and at most `max_pages`
/// pages are returned. Failed fetches are recorded in the report and skipped.
pub fn crawl(config: &CrawlConfig, fetcher: &dyn Fetcher) -> Result<(Vec<Page>, CrawlReport), CrawlError> {
    let seeds = config.validate()?;
    let clock = HostClock {
        delay: Duration::from_millis(config.delay_ms),
        next: Mutex::new(HashMap::new()),
    };
    let mut robots: HashMap<String, RobotsRules> = HashMap::new();
    let mut report = CrawlReport::default();
    let mut pages = Vec::new();
    let mut visited: HashSet<Url> = HashSet::new();
    let mut frontier: Vec<Url> = Vec::new();
    for s in seeds {
        if visited.insert(s.clone()) {
            frontier.push(s);
        }
    }

    let mut depth = 0;
    while !frontier.is_empty() && pages.len() < config.max_pages {
        let mut next_level = Vec::new();
        let mut queue = frontier.into_iter().peekable();
        while queue.peek().is_some() && pages.len() < config.max_pages {
            let want = config.max_concurrent_fetches.min(config.max_pages - pages.len());
            let mut batch = Vec::with_capacity(want);
            while batch.len() < want {
                let Some(url) = queue.next() else { break };
                if config.respect_robots {
                    let host = host_key(&url);
                    let rules = robots.entry(host.clone()).or_insert_with(|| {
                        let mut robots_url = url.clone();
                        robots_url.set_path("/robots.txt");
                        robots_url.set_query(None);
                        clock.wait(&host);
                        match fetcher.fetch(&robots_url) {
                            Ok(r) if (200..300).contains(&r.status) => {
                                RobotsRules::parse(&String::from_utf8_lossy(&r.body), &config.user_agent)
                            }
                            _ => RobotsRules::allow_all(),
                        }
                    });
                    if !rules.allows(&robots_path(&url)) {
                        log::info!("robots.txt disallows {url}");
                        report.blocked_by_robots += 1;
                        continue;
                    }
                }
                batch.push(url);
            }

            let outcomes: Vec<Outcome> = thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|url| {
                        let clock = &clock;
                        s.spawn(move || {
                            clock.wait(&host_key(url));
                            process(fetcher.fetch(url))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Outcome::Failed("fetch panicked".into())))
                    .collect()
            });

            for (url, outcome) in batch.into_iter().zip(outcomes) {
                match outcome {
                    Outcome::Failed(reason) => {
                        log::warn!("fetch failed for {url}: {reason}");
                        report.failures.push(CrawlFailure {
                            url: url.to_string(),
                            reason,
                        });
                    }
                    Outcome::NonHtml { bytes } => {
                        report.bytes += bytes;
                        report.skipped_non_html += 1;
                    }
                    Outcome::Page { text, hrefs, bytes } => {
                        report.bytes += bytes;
                        if pages.len() >= config.max_pages {
                            continue;
                        }
                        if depth < config.max_depth {
                            for link in html::resolve_links(&hrefs, &url, config.same_host_only) {
                                if visited.insert(link.clone()) {
                                    next_level.push(link);
                                }
                            }
                        }
                        report.pages_fetched += 1;
                        *report.per_site.entry(host_key(&url)).or_insert(0) += 1;
                        pages.push(Page {
                            url: url.to_string(),
                            depth,
                            text_blocks: text,
                        });
                    }
                }
            }
        }
        frontier = next_level;
        depth += 1;
    }
    if pages.is_empty() {
        log::warn!("crawl produced no pages");
    }
    Ok((pages, report))
}

/// Parses a site list: one URL per line, `#` starts a comment.
pub fn parse_site_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Maps URLs matching `pattern` to `lang`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageRule {
    pub pattern: String,
    pub lang: String,
}

/// Compiled rules; the first matching rule decides a page's language.
#[derive(Debug, Clone)]
pub struct LanguageRules(Vec<(Regex, String)>);

impl LanguageRules {
    pub fn new(rules: &[LanguageRule]) -> Result<Self, CrawlError> {
        rules
            .iter()
            .map(|r| {
                Regex::new(&r.pattern)
                    .map(|re| (re, r.lang.clone()))
                    .map_err(|e| CrawlError::Config(format!("bad language pattern `{}`: {e}", r.pattern)))
            })
            .collect::<Result<_, _>>()
            .map(LanguageRules)
    }

    pub fn language_of(&self, url: &str) -> Option<&str> {
        self.0.iter().find(|(re, _)| re.is_match(url)).map(|(_, l)| l.as_str())
    }
}

/// Splits crawled pages into per-language corpora of cleaned, segmented
/// sentences. Pages matching no rule are skipped. No deduplication is done.
pub fn pages_to_corpora(
    pages: &[Page],
    rules: &LanguageRules,
    segment: &SegmentConfig,
) -> BTreeMap<String, Corpus> {
    let mut out: BTreeMap<String, Corpus> = BTreeMap::new();
    for page in pages {
        let Some(lang) = rules.language_of(&page.url) else {
            log::debug!("no language rule for {}", page.url);
            continue;
        };
        let site = Url::parse(&page.url).map(|u| host_key(&u)).unwrap_or_default();
        let corpus = out.entry(lang.to_string()).or_insert_with(|| Corpus::new(lang));
        for block in &page.text_blocks {
            for sentence in segment_sentences(&clean_text(block), segment) {
                corpus.push(sentence, &page.url, &site);
            }
        }
    }
    out
}

/// Fetches over HTTP(S) with a body size cap.
pub struct HttpFetcher {
    agent: ureq::Agent,
    max_bytes: u64,
}

impl HttpFetcher {
    pub fn new(user_agent: &str, timeout: Duration, max_bytes: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .user_agent(user_agent)
            .build()
            .into();
        HttpFetcher { agent, max_bytes }
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &Url) -> Result<FetchResponse, String> {
        let mut resp = self.agent.get(url.as_str()).call().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let content_type = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = resp
            .body_mut()
            .with_config()
            .limit(self.max_bytes)
            .read_to_vec()
            .map_err(|e| e.to_string())?;
        Ok(FetchResponse {
            status,
            content_type,
            body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Default)]
    struct Fake(HashMap<String, (u16, &'static str, String)>);

    impl Fake {
        fn page(mut self, url: &str, links: &[&str]) -> Self {
            let body: String = links.iter().map(|l| format!("<a href=\"{l}\">x</a>")).collect();
            self.0.insert(url.into(), (200, "text/html; charset=utf-8", format!("<p>{url}</p>{body}")));
            self
        }
        fn raw(mut self, url: &str, status: u16, ct: &'static str, body: &str) -> Self {
            self.0.insert(url.into(), (status, ct, body.into()));
            self
        }
    }

    impl Fetcher for Fake {
        fn fetch(&self, url: &Url) -> Result<FetchResponse, String> {
            let (status, ct, body) = self.0.get(url.as_str()).ok_or("connection refused")?;
            Ok(FetchResponse {
                status: *status,
                content_type: Some(ct.to_string()),
                body: body.clone().into_bytes(),
            })
        }
    }

    fn cfg(seeds: &[&str], depth: usize, pages: usize) -> CrawlConfig {
        CrawlConfig {
            seed_urls: seeds.iter().map(|s| s.to_string()).collect(),
            max_depth: depth,
            max_pages: pages,
            delay_ms: 0,
            ..Default::default()
        }
    }

    fn urls(pages: &[Page]) -> Vec<&str> {
        pages.iter().map(|p| p.url.as_str()).collect()
    }

    #[test]
    fn depth_zero_and_chain() {
        let f = Fake::default()
            .page("http://a.gl/", &["/b"])
            .page("http://a.gl/b", &["/c"])
            .page("http://a.gl/c", &[]);
        let (p, _) = crawl(&cfg(&["http://a.gl/"], 0, 10), &f).unwrap();
        assert_eq!(urls(&p), ["http://a.gl/"]);
        let (p, _) = crawl(&cfg(&["http://a.gl/"], 1, 10), &f).unwrap();
        assert_eq!(urls(&p), ["http://a.gl/", "http://a.gl/b"]);
        assert_eq!(p[1].depth, 1);
    }

    #[test]
    fn cycle_terminates() {
        let f = Fake::default().page("http://a.gl/a", &["/b"]).page("http://a.gl/b", &["/a"]);
        let (p, r) = crawl(&cfg(&["http://a.gl/a"], 10, 100), &f).unwrap();
        assert_eq!(urls(&p), ["http://a.gl/a", "http://a.gl/b"]);
        assert_eq!(r.per_site["a.gl"], 2);
    }

    #[test]
    fn failures_non_html_and_robots() {
        let f = Fake::default()
            .page("http://a.gl/", &["/missing", "/img.png", "/private/x", "/err", "/ok"])
            .raw("http://a.gl/img.png", 200, "image/png", "PNG")
            .raw("http://a.gl/err", 500, "text/html", "")
            .raw("http://a.gl/robots.txt", 200, "text/plain", "User-agent: *\nDisallow: /private\n")
            .page("http://a.gl/private/x", &[])
            .page("http://a.gl/ok", &[]);
        let (p, r) = crawl(&cfg(&["http://a.gl/"], 2, 100), &f).unwrap();
        assert_eq!(urls(&p), ["http://a.gl/", "http://a.gl/ok"]);
        assert_eq!(r.failures.len(), 2);
        assert_eq!(r.skipped_non_html, 1);
        assert_eq!(r.blocked_by_robots, 1);
        let no_robots = CrawlConfig { respect_robots: false, ..cfg(&["http://a.gl/"], 2, 100) };
        assert_eq!(crawl(&no_robots, &f).unwrap().0.len(), 3);
    }

    #[test]
    fn all_seeds_fail_is_not_fatal() {
        let (p, r) = crawl(&cfg(&["http://down.gl/"], 3, 5), &Fake::default()).unwrap();
        assert!(p.is_empty());
        assert_eq!(r.failures.len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(crawl(&cfg(&["http://a.gl/"], 11, 5), &Fake::default()).is_err());
        assert!(crawl(&cfg(&["http://a.gl/"], 1, 0), &Fake::default()).is_err());
        assert!(crawl(&cfg(&["ftp://a.gl/"], 1, 1), &Fake::default()).is_err());
        assert!(crawl(&cfg(&["/relative"], 1, 1), &Fake::default()).is_err());
    }

    #[test]
    fn site_list_and_language_rules() {
        assert_eq!(
            parse_site_list("# sites\nhttps://a.gl/  # main\n\n  https://b.gl/\n"),
            ["https://a.gl/", "https://b.gl/"]
        );
        let rules = LanguageRules::new(&[
            LanguageRule { pattern: "/da/".into(), lang: "da".into() },
            LanguageRule { pattern: "^https?://".into(), lang: "kl".into() },
        ])
        .unwrap();
        assert_eq!(rules.language_of("https://a.gl/da/x"), Some("da"));
        assert_eq!(rules.language_of("https://a.gl/kl/x"), Some("kl"));
        assert!(LanguageRules::new(&[LanguageRule { pattern: "(".into(), lang: "x".into() }]).is_err());

        let pages = vec![Page {
            url: "https://a.gl/da/x".into(),
            depth: 0,
            text_blocks: vec!["Det er en god dag. Ja.".into(), "Vi ses i morgen igen.".into()],
        }];
        let c = pages_to_corpora(&pages, &rules, &SegmentConfig::default());
        let da = &c["da"];
        assert_eq!(da.texts().collect::<Vec<_>>(), ["Det er en god dag.", "Vi ses i morgen igen."]);
        assert_eq!(da.records[0].site_id, "a.gl");
    }
}
