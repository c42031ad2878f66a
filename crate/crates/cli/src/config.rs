//! Pipeline configuration: a TOML file, environment overrides for provider
//! endpoints, then `--set key=value` overrides, in that order.
//!
//! Relative paths are resolved against the directory of the config file, or
//! against the working directory when no file is given.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use bitextmine::corpus::SegmentConfig;
use bitextmine::crawler::{CrawlConfig, LanguageRule, LanguageRules};
use bitextmine::mine::MiningParams;
use bitextmine::providers::mock::DEFAULT_MOCK_DIM;
use bitextmine::providers::{
    MockProvider, MockTranslate, ProviderHandle, ProviderOptions, DEFAULT_EMBED_BATCH,
    DEFAULT_TRANSLATE_BATCH,
};
use serde::{Deserialize, Serialize};

use crate::stages::Stage;

pub const ENV_EMBED_URL: &str = "BITEXTMINE_EMBED_URL";
pub const ENV_EMBED_CMD: &str = "BITEXTMINE_EMBED_CMD";
pub const ENV_TRANSLATE_URL: &str = "BITEXTMINE_TRANSLATE_URL";
pub const ENV_TRANSLATE_CMD: &str = "BITEXTMINE_TRANSLATE_CMD";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub src_lang: String,
    pub tgt_lang: String,
    /// Language the mined target side is translated into.
    pub pivot_lang: String,
    /// Reject duplicates and unknown fields when reading corpus files.
    pub strict_io: bool,
    /// Embed BPE-segmented source text instead of plain code-switched text.
    pub bpe_before_embed: bool,
    pub crawl: CrawlSection,
    pub corpus: CorpusSection,
    pub codeswitch: CodeSwitchSection,
    pub bpe: BpeSection,
    pub mining: MiningParams,
    pub providers: ProvidersSection,
    pub eval: EvalSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("bitextmine-out"),
            src_lang: "kl".into(),
            tgt_lang: "da".into(),
            pivot_lang: "en".into(),
            strict_io: false,
            bpe_before_embed: false,
            crawl: CrawlSection::default(),
            corpus: CorpusSection::default(),
            codeswitch: CodeSwitchSection::default(),
            bpe: BpeSection::default(),
            mining: MiningParams::default(),
            providers: ProvidersSection::default(),
            eval: EvalSection::default(),
            base_dir: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlSection {
    /// Site list; when unset, the clean stage reads `corpus.src`/`corpus.tgt`.
    pub sites: Option<PathBuf>,
    pub language_rules: Vec<LanguageRule>,
    pub max_depth: usize,
    pub max_pages: usize,
    pub same_host_only: bool,
    pub delay_ms: u64,
    pub max_concurrent_fetches: usize,
    pub respect_robots: bool,
    pub user_agent: String,
    pub timeout_secs: u64,
    pub max_page_bytes: u64,
}

impl Default for CrawlSection {
    fn default() -> Self {
        let c = CrawlConfig::default();
        CrawlSection {
            sites: None,
            language_rules: Vec::new(),
            max_depth: c.max_depth,
            max_pages: c.max_pages,
            same_host_only: c.same_host_only,
            delay_ms: c.delay_ms,
            max_concurrent_fetches: c.max_concurrent_fetches,
            respect_robots: c.respect_robots,
            user_agent: c.user_agent,
            timeout_secs: 30,
            max_page_bytes: 5 * 1024 * 1024,
        }
    }
}

impl CrawlSection {
    pub fn to_crawl_config(&self, seed_urls: Vec<String>) -> CrawlConfig {
        CrawlConfig {
            seed_urls,
            max_depth: self.max_depth,
            max_pages: self.max_pages,
            same_host_only: self.same_host_only,
            delay_ms: self.delay_ms,
            max_concurrent_fetches: self.max_concurrent_fetches,
            respect_robots: self.respect_robots,
            user_agent: self.user_agent.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Raw source-language text (plain lines or JSON lines).
    pub src: Option<PathBuf>,
    pub tgt: Option<PathBuf>,
    pub segment: SegmentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    pub path: PathBuf,
    pub target_lang: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeSwitchSection {
    pub enabled: bool,
    /// Looked up in order; the first hit wins.
    pub dictionaries: Vec<DictionarySpec>,
}

impl Default for CodeSwitchSection {
    fn default() -> Self {
        CodeSwitchSection {
            enabled: true,
            dictionaries: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpeSection {
    pub vocab_size: usize,
}

impl Default for BpeSection {
    fn default() -> Self {
        BpeSection { vocab_size: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Not configured; stages that need a provider refuse to run.
    #[default]
    None,
    /// Built-in deterministic mock, in process.
    Mock,
    /// Child process speaking the protocol on stdin/stdout.
    Command,
    /// HTTP endpoint accepting `POST <url>/rpc`.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub command: Vec<String>,
    pub url: Option<String>,
    pub timeout_secs: u64,
    pub batch_size: Option<usize>,
    /// Expected embedding dimension, checked on every response.
    pub dim: Option<usize>,
    pub mock_dim: usize,
    pub mock_translate: MockTranslate,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::None,
            command: Vec::new(),
            url: None,
            timeout_secs: 120,
            batch_size: None,
            dim: None,
            mock_dim: DEFAULT_MOCK_DIM,
            mock_translate: MockTranslate::default(),
        }
    }
}

impl ProviderConfig {
    fn validate(&self, name: &str) -> Result<()> {
        match self.kind {
            ProviderKind::None => bail!("providers.{name}.kind is not set (mock, command or http)"),
            ProviderKind::Command if self.command.is_empty() => {
                bail!("providers.{name}.command must not be empty")
            }
            ProviderKind::Http if self.url.as_deref().is_none_or(str::is_empty) => {
                bail!("providers.{name}.url must be set")
            }
            ProviderKind::Mock if self.mock_dim == 0 => bail!("providers.{name}.mock_dim must be positive"),
            _ => {}
        }
        if self.timeout_secs == 0 {
            bail!("providers.{name}.timeout_secs must be positive");
        }
        if self.batch_size == Some(0) {
            bail!("providers.{name}.batch_size must be at least 1");
        }
        Ok(())
    }

    pub fn connect(&self, default_batch: usize, embed: bool) -> Result<ProviderHandle> {
        let batch = self.batch_size.unwrap_or(default_batch);
        let opts = ProviderOptions {
            timeout: Duration::from_secs(self.timeout_secs),
            embed_batch: if embed { batch } else { DEFAULT_EMBED_BATCH },
            translate_batch: if embed { DEFAULT_TRANSLATE_BATCH } else { batch },
            expected_dim: self.dim,
        };
        let handle = match self.kind {
            ProviderKind::None => bail!("no provider configured"),
            ProviderKind::Mock => ProviderHandle::mock(
                MockProvider {
                    dim: self.mock_dim,
                    translate: self.mock_translate,
                    pairs: None,
                },
                opts,
            )?,
            ProviderKind::Command => ProviderHandle::spawn(&self.command, opts)?,
            ProviderKind::Http => ProviderHandle::http(self.url.as_deref().unwrap_or_default(), opts)?,
        };
        Ok(handle)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersSection {
    pub embed: ProviderConfig,
    pub translate: ProviderConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// System output, one sentence per line. BLEU runs only when both files are set.
    pub hypotheses: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub max_n: usize,
    pub smoothing: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            hypotheses: None,
            references: None,
            max_n: 4,
            smoothing: false,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `a.b.c=value` override to a TOML table. Values are parsed as
/// TOML and fall back to plain strings.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` is malformed");
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override key `{key}`: `{p}` is not a table"))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

fn env_provider(table: &mut toml::Table, name: &str, url_var: &str, cmd_var: &str) -> Result<()> {
    if let Ok(url) = std::env::var(url_var) {
        apply_override(table, &format!("providers.{name}.kind=\"http\""))?;
        table["providers"][name]
            .as_table_mut()
            .expect("just created")
            .insert("url".into(), toml::Value::String(url));
    } else if let Ok(cmd) = std::env::var(cmd_var) {
        let parts: Vec<toml::Value> = cmd.split_whitespace().map(|s| toml::Value::String(s.into())).collect();
        apply_override(table, &format!("providers.{name}.kind=\"command\""))?;
        table["providers"][name]
            .as_table_mut()
            .expect("just created")
            .insert("command".into(), toml::Value::Array(parts));
    }
    Ok(())
}

impl PipelineConfig {
    /// Loads `path` (or defaults), applies environment and `--set` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (mut table, base_dir) = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                let table: toml::Table =
                    toml::from_str(&text).with_context(|| format!("invalid TOML in {}", p.display()))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (table, dir)
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        env_provider(&mut table, "embed", ENV_EMBED_URL, ENV_EMBED_CMD)?;
        env_provider(&mut table, "translate", ENV_TRANSLATE_URL, ENV_TRANSLATE_CMD)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow!("invalid configuration: {}", e.message()))?;
        cfg.base_dir = if base_dir.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            base_dir
        };
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// The config as JSON with every default filled in.
    pub fn effective(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is serializable")
    }

    pub fn crawl_enabled(&self) -> bool {
        self.crawl.sites.is_some()
    }

    pub fn bleu_enabled(&self) -> bool {
        self.eval.hypotheses.is_some() && self.eval.references.is_some()
    }

    /// Checks everything the given stages need before any work starts.
    pub fn validate(&self, stages: &[Stage]) -> Result<()> {
        let needs = |s: Stage| stages.contains(&s);
        let lang_ok = |l: &str| !l.is_empty() && l.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        for (name, l) in [("src_lang", &self.src_lang), ("tgt_lang", &self.tgt_lang)] {
            if !lang_ok(l) {
                bail!("{name} `{l}` is not a language code");
            }
        }
        if self.src_lang == self.tgt_lang {
            bail!("src_lang and tgt_lang must differ");
        }
        let must_exist = |what: &str, p: &Path| -> Result<()> {
            let full = self.resolve(p);
            if !full.exists() {
                bail!("{what} not found: {}", full.display());
            }
            Ok(())
        };

        if needs(Stage::Crawl) {
            let sites = self.crawl.sites.as_ref().ok_or_else(|| anyhow!("crawl.sites is not set"))?;
            must_exist("site list", sites)?;
            if self.crawl.language_rules.is_empty() {
                bail!("crawl.language_rules must map URL patterns to languages");
            }
            LanguageRules::new(&self.crawl.language_rules)?;
            self.crawl.to_crawl_config(Vec::new()).validate()?;
        }
        if needs(Stage::Clean) && !self.crawl_enabled() {
            for (name, p) in [("corpus.src", &self.corpus.src), ("corpus.tgt", &self.corpus.tgt)] {
                let p = p.as_ref().ok_or_else(|| anyhow!("{name} is not set and no crawl is configured"))?;
                must_exist(name, p)?;
            }
        }
        if self.corpus.segment.max_tokens < self.corpus.segment.min_tokens {
            bail!("corpus.segment.max_tokens is below min_tokens");
        }
        if needs(Stage::Codeswitch) && self.codeswitch.enabled {
            for d in &self.codeswitch.dictionaries {
                must_exist("dictionary", &d.path)?;
                if !lang_ok(&d.target_lang) {
                    bail!("dictionary target_lang `{}` is not a language code", d.target_lang);
                }
            }
        }
        if needs(Stage::BpeTrain) && self.bpe.vocab_size < 2 {
            bail!("bpe.vocab_size must be at least 2");
        }
        if needs(Stage::Embed) {
            self.providers.embed.validate("embed")?;
        }
        if needs(Stage::Mine) {
            self.mining.validate()?;
        }
        if needs(Stage::Translate) {
            if !lang_ok(&self.pivot_lang) {
                bail!("pivot_lang `{}` is not a language code", self.pivot_lang);
            }
            self.providers.translate.validate("translate")?;
        }
        if needs(Stage::Bleu) {
            let h = self.eval.hypotheses.as_ref().ok_or_else(|| anyhow!("eval.hypotheses is not set"))?;
            let r = self.eval.references.as_ref().ok_or_else(|| anyhow!("eval.references is not set"))?;
            must_exist("eval.hypotheses", h)?;
            must_exist("eval.references", r)?;
            if self.eval.max_n == 0 {
                bail!("eval.max_n must be at least 1");
            }
        }
        let out = self.out_dir();
        fs::create_dir_all(&out).with_context(|| format!("cannot create output dir {}", out.display()))?;
        let probe = out.join(".write-test");
        fs::write(&probe, b"").with_context(|| format!("output dir {} is not writable", out.display()))?;
        fs::remove_file(&probe).ok();
        Ok(())
    }
}
