//! Pipeline stages and their on-disk artifacts.
//!
//! Every stage reads the artifacts of earlier stages from the output
//! directory and writes its own. Files are written to a temporary name and
//! renamed, so a stage whose outputs all exist has completed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bitextmine::bpe::{self, BpeModel};
use bitextmine::codeswitch::{self, BilingualDictionary};
use bitextmine::corpus::{
    self, clean_text, segment_sentences, Corpus, CorpusFormat, ReadOptions, SentenceRecord,
};
use bitextmine::crawler::{self, CrawlReport, HttpFetcher, LanguageRules, Page};
use bitextmine::eval::{self, BleuOptions, BleuReport, CorpusCounts, CoverageSummary, PipelineReport, TranslateSummary};
use bitextmine::mine::{self, MineStats};
use bitextmine::providers::{load_embeddings, EmbeddingMatrix, DEFAULT_EMBED_BATCH, DEFAULT_TRANSLATE_BATCH};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Crawl,
    Clean,
    Codeswitch,
    BpeTrain,
    BpeApply,
    Embed,
    Mine,
    Translate,
    Bleu,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Crawl,
        Stage::Clean,
        Stage::Codeswitch,
        Stage::BpeTrain,
        Stage::BpeApply,
        Stage::Embed,
        Stage::Mine,
        Stage::Translate,
        Stage::Bleu,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Crawl => "crawl",
            Stage::Clean => "clean",
            Stage::Codeswitch => "codeswitch",
            Stage::BpeTrain => "bpe-train",
            Stage::BpeApply => "bpe-apply",
            Stage::Embed => "embed",
            Stage::Mine => "mine",
            Stage::Translate => "translate",
            Stage::Bleu => "bleu",
            Stage::Report => "report",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum RunError {
    /// Invalid configuration or arguments: exit code 1.
    Config(anyhow::Error),
    /// A stage failed while running: exit code 2.
    Stage { stage: Stage, source: anyhow::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Stage { .. } => 2,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e:#}"),
            RunError::Stage { stage, source } => write!(f, "stage {stage} failed: {source:#}"),
        }
    }
}

impl std::error::Error for RunError {}

/// Artifact locations inside the output directory.
pub struct Layout {
    pub root: PathBuf,
    src: String,
    tgt: String,
    pivot: String,
}

impl Layout {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Layout {
            root: cfg.out_dir(),
            src: cfg.src_lang.clone(),
            tgt: cfg.tgt_lang.clone(),
            pivot: cfg.pivot_lang.clone(),
        }
    }

    fn at(&self, rel: String) -> PathBuf {
        self.root.join(rel)
    }

    pub fn crawl_report(&self) -> PathBuf {
        self.at("crawl/report.json".into())
    }
    pub fn crawl_pages(&self) -> PathBuf {
        self.at("crawl/pages.jsonl".into())
    }
    pub fn crawl_corpus(&self, lang: &str) -> PathBuf {
        self.at(format!("crawl/{lang}.jsonl"))
    }
    pub fn corpus(&self, lang: &str) -> PathBuf {
        self.at(format!("corpus/{lang}.jsonl"))
    }
    pub fn corpus_stats(&self) -> PathBuf {
        self.at("corpus/stats.json".into())
    }
    pub fn codeswitched(&self) -> PathBuf {
        self.at(format!("codeswitch/{}.txt", self.src))
    }
    pub fn coverage(&self) -> PathBuf {
        self.at("codeswitch/coverage.json".into())
    }
    pub fn bpe_model(&self) -> PathBuf {
        self.at(format!("bpe/{}.model", self.src))
    }
    pub fn bpe_stats(&self) -> PathBuf {
        self.at("bpe/stats.json".into())
    }
    pub fn bpe_segmented(&self) -> PathBuf {
        self.at(format!("bpe/{}.seg.txt", self.src))
    }
    pub fn embeddings(&self, lang: &str) -> PathBuf {
        self.at(format!("embed/{lang}.emb"))
    }
    pub fn embed_summary(&self) -> PathBuf {
        self.at("embed/summary.json".into())
    }
    pub fn pairs(&self) -> PathBuf {
        self.at("mine/pairs.tsv".into())
    }
    pub fn mine_summary(&self) -> PathBuf {
        self.at("mine/summary.json".into())
    }
    pub fn train_file(&self, lang: &str) -> PathBuf {
        self.at(format!("translate/train.{lang}"))
    }
    pub fn translate_summary(&self) -> PathBuf {
        self.at("translate/summary.json".into())
    }
    pub fn bleu(&self) -> PathBuf {
        self.at("eval/bleu.json".into())
    }
    pub fn report(&self) -> PathBuf {
        self.at("report.json".into())
    }
    pub fn run_log(&self) -> PathBuf {
        self.at("run.log".into())
    }

    /// Files a stage produces; the last one is written last.
    pub fn outputs(&self, stage: Stage) -> Vec<PathBuf> {
        match stage {
            Stage::Crawl => vec![
                self.crawl_pages(),
                self.crawl_corpus(&self.src),
                self.crawl_corpus(&self.tgt),
                self.crawl_report(),
            ],
            Stage::Clean => vec![self.corpus(&self.src), self.corpus(&self.tgt), self.corpus_stats()],
            Stage::Codeswitch => vec![self.codeswitched(), self.coverage()],
            Stage::BpeTrain => vec![self.bpe_model(), self.bpe_stats()],
            Stage::BpeApply => vec![self.bpe_segmented()],
            Stage::Embed => vec![
                self.embeddings(&self.src),
                self.embeddings(&self.tgt),
                self.embed_summary(),
            ],
            Stage::Mine => vec![self.pairs(), self.mine_summary()],
            Stage::Translate => vec![
                self.train_file(&self.src),
                self.train_file(&self.pivot),
                self.translate_summary(),
            ],
            Stage::Bleu => vec![self.bleu()],
            Stage::Report => vec![self.report()],
        }
    }
}

/// Timestamped, line-oriented log of stage events in `run.log`.
pub struct RunLog {
    path: PathBuf,
}

impl RunLog {
    pub fn event(&self, stage: Stage, event: &str, detail: &str) {
        let ts = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        let line = if detail.is_empty() {
            format!("{ts} {stage} {event}")
        } else {
            format!("{ts} {stage} {event} {detail}")
        };
        log::info!("{stage} {event} {detail}");
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            log::warn!("cannot write {}: {e}", self.path.display());
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn write_lines<S: AsRef<str>>(path: &Path, lines: &[S]) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(l.as_ref());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_corpus_file(path: &Path, c: &Corpus) -> Result<()> {
    let mut buf = Vec::new();
    corpus::write_corpus_to(c, &mut buf, CorpusFormat::Jsonl)?;
    write_atomic(path, &buf)
}

fn save_embeddings(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let mut buf = Vec::new();
    m.write_to(&mut buf)?;
    write_atomic(path, &buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryStats {
    pub path: String,
    pub target_lang: String,
    pub entries: usize,
    pub duplicate_keys: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageFile {
    pub tokens_total: usize,
    pub tokens_replaced: usize,
    pub coverage: f64,
    pub coverage_percent: String,
    pub dictionaries: Vec<DictionaryStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedSummary {
    pub dim: usize,
    pub src_rows: usize,
    pub tgt_rows: usize,
    pub requests: usize,
}

/// Executes stages against one configuration.
pub struct Runner<'a> {
    pub cfg: &'a PipelineConfig,
    pub layout: Layout,
    log: RunLog,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> Self {
        let layout = Layout::new(cfg);
        let log = RunLog { path: layout.run_log() };
        Runner { cfg, layout, log }
    }

    /// Stages run by `pipeline`, in order.
    pub fn planned(cfg: &PipelineConfig) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| match s {
                Stage::Crawl => cfg.crawl_enabled(),
                Stage::BpeApply => cfg.bpe_before_embed,
                Stage::Bleu => cfg.bleu_enabled(),
                _ => true,
            })
            .collect()
    }

    pub fn is_complete(&self, stage: Stage) -> bool {
        self.layout.outputs(stage).iter().all(|p| p.exists())
    }

    /// Runs `stages` in order, skipping complete ones unless `force`.
    pub fn run(&self, stages: &[Stage], force: bool) -> Result<(), RunError> {
        self.cfg.validate(stages).map_err(RunError::Config)?;
        for &stage in stages {
            if !force && self.is_complete(stage) {
                self.log.event(stage, "cached", "");
                continue;
            }
            self.log.event(stage, "start", "");
            match self.run_one(stage) {
                Ok(detail) => self.log.event(stage, "done", &detail),
                Err(source) => {
                    self.log.event(stage, "failed", &format!("{source:#}"));
                    return Err(RunError::Stage { stage, source });
                }
            }
        }
        Ok(())
    }

    fn run_one(&self, stage: Stage) -> Result<String> {
        match stage {
            Stage::Crawl => self.crawl(),
            Stage::Clean => self.clean(),
            Stage::Codeswitch => self.codeswitch(),
            Stage::BpeTrain => self.bpe_train(),
            Stage::BpeApply => self.bpe_apply(),
            Stage::Embed => self.embed(),
            Stage::Mine => self.mine(),
            Stage::Translate => self.translate(),
            Stage::Bleu => self.bleu(),
            Stage::Report => self.report(),
        }
    }

    fn langs(&self) -> [&str; 2] {
        [&self.cfg.src_lang, &self.cfg.tgt_lang]
    }

    fn read_clean_corpus(&self, lang: &str) -> Result<Corpus> {
        let opts = ReadOptions {
            strict: self.cfg.strict_io,
        };
        let path = self.layout.corpus(lang);
        corpus::read_corpus(&path, CorpusFormat::Jsonl, Some(lang), opts)
            .with_context(|| format!("reading {}", path.display()))
    }

    fn crawl(&self) -> Result<String> {
        let c = &self.cfg.crawl;
        let sites_path = self.cfg.resolve(c.sites.as_ref().ok_or_else(|| anyhow!("crawl.sites is not set"))?);
        let seeds = crawler::parse_site_list(&fs::read_to_string(&sites_path)?);
        let fetcher = HttpFetcher::new(
            &c.user_agent,
            std::time::Duration::from_secs(c.timeout_secs.max(1)),
            c.max_page_bytes,
        );
        let (pages, report) = crawler::crawl(&c.to_crawl_config(seeds), &fetcher)?;
        let rules = LanguageRules::new(&c.language_rules)?;
        let corpora = crawler::pages_to_corpora(&pages, &rules, &self.cfg.corpus.segment);
        for lang in corpora.keys().filter(|l| !self.langs().contains(&l.as_str())) {
            log::warn!("crawled pages in `{lang}` are neither source nor target and are not kept");
        }

        let mut page_lines = Vec::with_capacity(pages.len());
        for p in &pages {
            page_lines.push(serde_json::to_string::<Page>(p)?);
        }
        write_lines(&self.layout.crawl_pages(), &page_lines)?;
        for lang in self.langs() {
            let empty = Corpus::new(lang);
            write_corpus_file(&self.layout.crawl_corpus(lang), corpora.get(lang).unwrap_or(&empty))?;
        }
        write_json(&self.layout.crawl_report(), &report)?;
        Ok(format!("pages={} failures={}", report.pages_fetched, report.failures.len()))
    }

    /// Raw text units with provenance from a plain or JSON-lines file.
    fn read_units(&self, path: &Path, lang: &str) -> Result<Vec<(String, String, String)>> {
        let lines = read_lines(path)?;
        if CorpusFormat::from_path(path) == CorpusFormat::Plain {
            return Ok(lines.into_iter().map(|l| (l, String::new(), String::new())).collect());
        }
        let mut units = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: SentenceRecord = serde_json::from_str(line)
                .with_context(|| format!("{} line {}", path.display(), i + 1))?;
            if r.lang != lang {
                bail!("{} line {}: language `{}`, expected `{lang}`", path.display(), i + 1, r.lang);
            }
            units.push((r.text, r.source_url, r.site_id));
        }
        Ok(units)
    }

    fn clean(&self) -> Result<String> {
        let mut counts = Vec::new();
        for (lang, configured) in [
            (&self.cfg.src_lang, &self.cfg.corpus.src),
            (&self.cfg.tgt_lang, &self.cfg.corpus.tgt),
        ] {
            let input = if self.cfg.crawl_enabled() {
                self.layout.crawl_corpus(lang)
            } else {
                self.cfg.resolve(configured.as_ref().ok_or_else(|| anyhow!("no input for `{lang}`"))?)
            };
            let mut c = Corpus::new(lang.as_str());
            for (text, url, site) in self.read_units(&input, lang)? {
                for s in segment_sentences(&clean_text(&text), &self.cfg.corpus.segment) {
                    c.push(s, &url, &site);
                }
            }
            let before = c.len();
            let c = corpus::dedup(c);
            counts.push(CorpusCounts::new(lang, before, c.len()));
            write_corpus_file(&self.layout.corpus(lang), &c)?;
        }
        write_json(&self.layout.corpus_stats(), &counts)?;
        Ok(counts
            .iter()
            .map(|c| format!("{}={}", c.lang, c.sentences_out))
            .collect::<Vec<_>>()
            .join(" "))
    }

    fn codeswitch(&self) -> Result<String> {
        let src = self.read_clean_corpus(&self.cfg.src_lang)?;
        let mut dicts: Vec<BilingualDictionary> = Vec::new();
        let mut dict_stats = Vec::new();
        if self.cfg.codeswitch.enabled {
            for spec in &self.cfg.codeswitch.dictionaries {
                let loaded = codeswitch::load_dictionary(&self.cfg.resolve(&spec.path), &self.cfg.src_lang, &spec.target_lang)
                    .with_context(|| format!("loading dictionary {}", spec.path.display()))?;
                dict_stats.push(DictionaryStats {
                    path: spec.path.display().to_string(),
                    target_lang: spec.target_lang.clone(),
                    entries: loaded.dictionary.len(),
                    duplicate_keys: loaded.duplicate_keys,
                });
                dicts.push(loaded.dictionary);
            }
        }
        let (texts, stats) = codeswitch::code_switch_corpus(&src, &dicts)?;
        write_lines(&self.layout.codeswitched(), &texts)?;
        let coverage = CoverageFile {
            tokens_total: stats.tokens_total,
            tokens_replaced: stats.tokens_replaced,
            coverage: stats.coverage(),
            coverage_percent: format!("{:.2}%", 100.0 * stats.coverage()),
            dictionaries: dict_stats,
        };
        write_json(&self.layout.coverage(), &coverage)?;
        Ok(format!("coverage={}", coverage.coverage_percent))
    }

    fn bpe_train(&self) -> Result<String> {
        let lines = read_lines(&self.layout.codeswitched())?;
        let model = bpe::train(&lines, self.cfg.bpe.vocab_size)?;
        if !model.reached_requested_size() {
            log::warn!(
                "BPE vocabulary stopped at {} of {} requested tokens",
                model.vocab_size(),
                model.requested_size()
            );
        }
        write_atomic(&self.layout.bpe_model(), model.to_model_string().as_bytes())?;
        let stats: BTreeMap<&str, usize> = BTreeMap::from([
            ("requested_vocab_size", model.requested_size()),
            ("vocab_size", model.vocab_size()),
            ("merges", model.merges().len()),
            ("base_symbols", bpe::base_vocab_size(&lines)),
        ]);
        write_json(&self.layout.bpe_stats(), &stats)?;
        Ok(format!("vocab={}", model.vocab_size()))
    }

    fn bpe_apply(&self) -> Result<String> {
        let model = BpeModel::load(&self.layout.bpe_model())?;
        let lines = read_lines(&self.layout.codeswitched())?;
        let segmented: Vec<String> = lines.iter().map(|l| model.segment(l).join(" ")).collect();
        write_lines(&self.layout.bpe_segmented(), &segmented)?;
        Ok(format!("lines={}", segmented.len()))
    }

    fn embed(&self) -> Result<String> {
        let src_texts = read_lines(&if self.cfg.bpe_before_embed {
            self.layout.bpe_segmented()
        } else {
            self.layout.codeswitched()
        })?;
        let tgt: Vec<String> = self
            .read_clean_corpus(&self.cfg.tgt_lang)?
            .texts()
            .map(str::to_string)
            .collect();
        if src_texts.is_empty() || tgt.is_empty() {
            bail!("nothing to embed: {} source and {} target sentences", src_texts.len(), tgt.len());
        }
        let mut handle = self.cfg.providers.embed.connect(DEFAULT_EMBED_BATCH, true)?;
        handle.ping().context("embedding provider did not answer ping")?;
        let ms = handle.embed_texts(&src_texts)?;
        let mt = handle.embed_texts(&tgt)?;
        if ms.dim() != mt.dim() {
            bail!("source embeddings have dim {}, target {}", ms.dim(), mt.dim());
        }
        save_embeddings(&self.layout.embeddings(&self.cfg.src_lang), &ms)?;
        save_embeddings(&self.layout.embeddings(&self.cfg.tgt_lang), &mt)?;
        let summary = EmbedSummary {
            dim: ms.dim(),
            src_rows: ms.n(),
            tgt_rows: mt.n(),
            requests: handle.request_log().len(),
        };
        write_json(&self.layout.embed_summary(), &summary)?;
        Ok(format!("dim={} rows={}+{}", summary.dim, summary.src_rows, summary.tgt_rows))
    }

    fn mine(&self) -> Result<String> {
        let src = self.read_clean_corpus(&self.cfg.src_lang)?;
        let tgt = self.read_clean_corpus(&self.cfg.tgt_lang)?;
        let ms = load_embeddings(&self.layout.embeddings(&self.cfg.src_lang))?;
        let mt = load_embeddings(&self.layout.embeddings(&self.cfg.tgt_lang))?;
        for (lang, m, c) in [(&self.cfg.src_lang, &ms, &src), (&self.cfg.tgt_lang, &mt, &tgt)] {
            if m.n() != c.len() {
                bail!("`{lang}` has {} embeddings for {} sentences; re-run embed", m.n(), c.len());
            }
        }
        let out = mine::mine(&ms, &mt, &self.cfg.mining)?;
        let src_texts: Vec<String> = src.texts().map(str::to_string).collect();
        let tgt_texts: Vec<String> = tgt.texts().map(str::to_string).collect();
        let mut buf = Vec::new();
        mine::write_pairs_tsv(&mut buf, &out.pairs, &src_texts, &tgt_texts)?;
        write_atomic(&self.layout.pairs(), &buf)?;
        write_json(&self.layout.mine_summary(), &out.stats)?;
        Ok(format!("pairs={}", out.pairs.len()))
    }

    fn translate(&self) -> Result<String> {
        let rows = mine::read_pairs_tsv(fs::File::open(self.layout.pairs())?)?;
        let tgt: Vec<String> = rows.iter().map(|r| r.tgt_text.clone()).collect();
        let mut handle = self.cfg.providers.translate.connect(DEFAULT_TRANSLATE_BATCH, false)?;
        if !tgt.is_empty() {
            handle.ping().context("translation provider did not answer ping")?;
        }
        let translated: Vec<String> = handle
            .translate_texts(&tgt, &self.cfg.tgt_lang, &self.cfg.pivot_lang)?
            .into_iter()
            .map(|t| t.split_whitespace().collect::<Vec<_>>().join(" "))
            .collect();
        let src: Vec<&str> = rows.iter().map(|r| r.src_text.as_str()).collect();
        write_lines(&self.layout.train_file(&self.cfg.src_lang), &src)?;
        write_lines(&self.layout.train_file(&self.cfg.pivot_lang), &translated)?;
        let summary = TranslateSummary {
            sentences: translated.len(),
            src_lang: self.cfg.tgt_lang.clone(),
            tgt_lang: self.cfg.pivot_lang.clone(),
        };
        write_json(&self.layout.translate_summary(), &summary)?;
        Ok(format!("sentences={}", summary.sentences))
    }

    fn bleu(&self) -> Result<String> {
        let e = &self.cfg.eval;
        let hyp = read_lines(&self.cfg.resolve(e.hypotheses.as_ref().ok_or_else(|| anyhow!("eval.hypotheses is not set"))?))?;
        let refs = read_lines(&self.cfg.resolve(e.references.as_ref().ok_or_else(|| anyhow!("eval.references is not set"))?))?;
        let report = eval::bleu(&hyp, &refs, BleuOptions { max_n: e.max_n, smoothing: e.smoothing })?;
        write_json(&self.layout.bleu(), &report)?;
        Ok(format!("bleu={:.2}", report.bleu))
    }

    fn optional<T: DeserializeOwned>(&self, path: PathBuf) -> Result<Option<T>> {
        if path.exists() {
            read_json(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    fn report(&self) -> Result<String> {
        let coverage: Option<CoverageFile> = self.optional(self.layout.coverage())?;
        let report = PipelineReport {
            config: self.cfg.effective(),
            stages: Runner::planned(self.cfg).iter().map(|s| s.name().to_string()).collect(),
            crawl: self.optional::<CrawlReport>(self.layout.crawl_report())?,
            corpora: self.optional::<Vec<CorpusCounts>>(self.layout.corpus_stats())?.unwrap_or_default(),
            coverage: coverage.map(|c| CoverageSummary {
                tokens_total: c.tokens_total,
                tokens_replaced: c.tokens_replaced,
                coverage: c.coverage,
            }),
            bpe: self.optional::<BTreeMap<String, usize>>(self.layout.bpe_stats())?,
            mining: self.optional::<MineStats>(self.layout.mine_summary())?,
            translate: self.optional::<TranslateSummary>(self.layout.translate_summary())?,
            bleu: self.optional::<BleuReport>(self.layout.bleu())?,
        };
        write_atomic(&self.layout.report(), eval::pipeline_report(&report).as_bytes())?;
        Ok(String::new())
    }
}

/// Runs the full pipeline.
pub fn run_pipeline(cfg: &PipelineConfig, force: bool) -> Result<(), RunError> {
    let runner = Runner::new(cfg);
    runner.run(&Runner::planned(cfg), force)
}

/// Runs a single stage.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, force: bool) -> Result<(), RunError> {
    Runner::new(cfg).run(&[stage], force)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(Stage::from_name(s.name()), Some(s));
        }
        assert_eq!(Stage::from_name("frobnicate"), None);
    }

    #[test]
    fn planned_order_follows_config() {
        let mut cfg = PipelineConfig::default();
        let names = |c: &PipelineConfig| Runner::planned(c).iter().map(|s| s.name()).collect::<Vec<_>>();
        assert_eq!(
            names(&cfg),
            ["clean", "codeswitch", "bpe-train", "embed", "mine", "translate", "report"]
        );
        cfg.crawl.sites = Some("sites.txt".into());
        cfg.bpe_before_embed = true;
        cfg.eval.hypotheses = Some("h".into());
        cfg.eval.references = Some("r".into());
        assert_eq!(names(&cfg), Stage::ALL.map(|s| s.name()));
    }
}
