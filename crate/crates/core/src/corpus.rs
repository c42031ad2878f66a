//! Sentence records, text cleaning, segmentation, deduplication and corpus files.
//!
//! Two on-disk formats are supported: a plain file with one sentence per line,
//! and a JSON-lines file carrying per-sentence metadata. Reading always checks
//! the corpus invariants (sequential ids, cleaned non-empty text, consistent
//! language) and reports the 1-based line number of the first violation.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: invalid UTF-8")]
    Decode { line: usize },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate text (first seen on line {first})")]
    Duplicate { line: usize, first: usize },
    #[error("line {line}: bad metadata field `{field}`: {reason}")]
    BadField {
        line: usize,
        field: String,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// One cleaned sentence with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: usize,
    pub text: String,
    pub lang: String,
    #[serde(default)]
    pub source_url: String,
    #[serde(default)]
    pub site_id: String,
}

/// A monolingual, deduplicated list of sentences with ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub lang: String,
    pub records: Vec<SentenceRecord>,
}

impl Corpus {
    pub fn new(lang: impl Into<String>) -> Self {
        Corpus {
            lang: lang.into(),
            records: Vec::new(),
        }
    }

    /// Builds a corpus from already-cleaned texts with empty metadata.
    pub fn from_texts<I, S>(lang: impl Into<String>, texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut corpus = Corpus::new(lang);
        for text in texts {
            corpus.push(text, "", "");
        }
        corpus
    }

    /// Appends a record, assigning the next id. No duplicate check is made here.
    pub fn push(&mut self, text: impl Into<String>, source_url: &str, site_id: &str) {
        let id = self.records.len();
        self.records.push(SentenceRecord {
            id,
            text: text.into(),
            lang: self.lang.clone(),
            source_url: source_url.to_string(),
            site_id: site_id.to_string(),
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.text.as_str())
    }
}

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

static URL_OR_EMAIL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(?:https?://|ftp://|www\.)\S+|[\w.+-]+@[\w-]+(?:\.[\w-]+)+",
    )
    .unwrap()
});

fn is_zero_width(c: char) -> bool {
    matches!(
        c,
        '\u{00AD}' | '\u{200B}' | '\u{200C}' | '\u{200D}' | '\u{2060}' | '\u{FEFF}'
    )
}

/// Normalizes raw text: NFC, control and zero-width characters removed,
/// URLs and e-mail addresses deleted, whitespace runs collapsed to one space,
/// ends trimmed. Case is preserved. Returns an empty string if nothing is left.
pub fn clean_text(raw: &str) -> String {
    let stripped: String = raw
        .nfc()
        .filter(|&c| !is_zero_width(c) && (!c.is_control() || c.is_whitespace()))
        .collect();

    // Removing one match can expose another (e.g. a URL glued to an address).
    let mut text = stripped;
    loop {
        let next = URL_OR_EMAIL.replace_all(&text, " ");
        if next == text {
            break;
        }
        text = next.into_owned();
    }

    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.nfc().collect()
}

/// Like [`clean_text`] but for raw bytes, failing on invalid UTF-8.
pub fn clean_bytes(raw: &[u8]) -> Result<String> {
    let s = std::str::from_utf8(raw).map_err(|_| CorpusError::Decode { line: 0 })?;
    Ok(clean_text(s))
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

/// Filters applied to segmented sentences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Minimum share of alphabetic characters among non-whitespace characters.
    pub min_alpha_ratio: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            min_tokens: 3,
            max_tokens: 200,
            min_alpha_ratio: 0.25,
        }
    }
}

impl SegmentConfig {
    pub fn accepts(&self, sentence: &str) -> bool {
        let tokens = sentence.split_whitespace().count();
        if tokens < self.min_tokens || tokens > self.max_tokens {
            return false;
        }
        let (alpha, visible) = sentence
            .chars()
            .filter(|c| !c.is_whitespace())
            .fold((0usize, 0usize), |(a, v), c| {
                (a + usize::from(c.is_alphabetic()), v + 1)
            });
        visible > 0 && (alpha as f64) >= self.min_alpha_ratio * visible as f64
    }
}

/// Splits after every '.', '!' or '?' that is followed by whitespace or the
/// end of the text. The terminator stays with the left segment. No filtering.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if at_boundary {
                let end = i + c.len_utf8();
                push_segment(&mut out, &text[start..end]);
                start = end;
            }
        }
    }
    push_segment(&mut out, &text[start..]);
    out
}

fn push_segment(out: &mut Vec<String>, seg: &str) {
    let seg = seg.trim();
    if !seg.is_empty() {
        out.push(seg.to_string());
    }
}

/// [`split_sentences`] followed by the length and alphabetic-ratio filters.
pub fn segment_sentences(text: &str, config: &SegmentConfig) -> Vec<String> {
    split_sentences(text)
        .into_iter()
        .filter(|s| config.accepts(s))
        .collect()
}

// ---------------------------------------------------------------------------
// Dedup
// ---------------------------------------------------------------------------

/// Keeps the first occurrence of each exact text and renumbers ids.
pub fn dedup(corpus: Corpus) -> Corpus {
    let mut seen = HashSet::with_capacity(corpus.records.len());
    let mut records = Vec::with_capacity(corpus.records.len());
    for mut record in corpus.records {
        if seen.insert(record.text.clone()) {
            record.id = records.len();
            records.push(record);
        }
    }
    Corpus {
        lang: corpus.lang,
        records,
    }
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// One sentence per line.
    Plain,
    /// One JSON object per line with id, text, lang, source_url, site_id.
    Jsonl,
}

impl CorpusFormat {
    /// Guesses the format from the file extension (`.jsonl` / `.json`).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Plain,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Reject duplicate texts and unknown JSON fields instead of skipping them.
    pub strict: bool,
}

const KNOWN_FIELDS: [&str; 5] = ["id", "text", "lang", "source_url", "site_id"];

fn check_text(text: &str, line: usize) -> Result<()> {
    if text.is_empty() {
        return Err(CorpusError::Malformed {
            line,
            reason: "empty sentence".into(),
        });
    }
    if clean_text(text) != text {
        return Err(CorpusError::Malformed {
            line,
            reason: "text is not in cleaned form".into(),
        });
    }
    Ok(())
}

/// Reads a corpus file.
///
/// For plain files `lang` is required. For JSON-lines files it is optional;
/// when omitted the language of the first record is used. In non-strict mode
/// duplicate texts are dropped (and ids renumbered) rather than rejected.
pub fn read_corpus(
    path: &Path,
    format: CorpusFormat,
    lang: Option<&str>,
    opts: ReadOptions,
) -> Result<Corpus> {
    let reader = BufReader::new(File::open(path)?);
    read_corpus_from(reader, format, lang, opts)
}

pub fn read_corpus_from<R: BufRead>(
    mut reader: R,
    format: CorpusFormat,
    lang: Option<&str>,
    opts: ReadOptions,
) -> Result<Corpus> {
    let mut corpus_lang = lang.map(str::to_string);
    let mut records: Vec<SentenceRecord> = Vec::new();
    let mut first_seen: std::collections::HashMap<String, usize> = Default::default();
    let mut buf = Vec::new();
    let mut line_no = 0;

    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        let line = std::str::from_utf8(&buf).map_err(|_| CorpusError::Decode { line: line_no })?;

        let mut record = match format {
            CorpusFormat::Plain => {
                let Some(lang) = corpus_lang.as_deref() else {
                    return Err(CorpusError::Malformed {
                        line: line_no,
                        reason: "plain corpus files need an explicit language".into(),
                    });
                };
                SentenceRecord {
                    id: records.len(),
                    text: line.to_string(),
                    lang: lang.to_string(),
                    source_url: String::new(),
                    site_id: String::new(),
                }
            }
            CorpusFormat::Jsonl => parse_json_record(line, line_no, opts)?,
        };
        check_text(&record.text, line_no)?;

        match corpus_lang.as_deref() {
            None => corpus_lang = Some(record.lang.clone()),
            Some(l) if l != record.lang => {
                return Err(CorpusError::BadField {
                    line: line_no,
                    field: "lang".into(),
                    reason: format!("expected `{l}`, found `{}`", record.lang),
                })
            }
            _ => {}
        }

        if let Some(&first) = first_seen.get(&record.text) {
            if opts.strict {
                return Err(CorpusError::Duplicate {
                    line: line_no,
                    first,
                });
            }
            continue;
        }
        first_seen.insert(record.text.clone(), line_no);

        if format == CorpusFormat::Jsonl && opts.strict && record.id != records.len() {
            return Err(CorpusError::BadField {
                line: line_no,
                field: "id".into(),
                reason: format!("expected {}, found {}", records.len(), record.id),
            });
        }
        record.id = records.len();
        records.push(record);
    }

    Ok(Corpus {
        lang: corpus_lang.unwrap_or_default(),
        records,
    })
}

fn parse_json_record(line: &str, line_no: usize, opts: ReadOptions) -> Result<SentenceRecord> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            reason: format!("invalid JSON: {e}"),
        })?;
    let obj = value.as_object().ok_or_else(|| CorpusError::Malformed {
        line: line_no,
        reason: "expected a JSON object".into(),
    })?;
    if opts.strict {
        if let Some(unknown) = obj.keys().find(|k| !KNOWN_FIELDS.contains(&k.as_str())) {
            return Err(CorpusError::BadField {
                line: line_no,
                field: unknown.clone(),
                reason: "unknown field".into(),
            });
        }
    }
    for field in ["id", "text", "lang"] {
        if !obj.contains_key(field) {
            return Err(CorpusError::BadField {
                line: line_no,
                field: field.into(),
                reason: "missing".into(),
            });
        }
    }
    let get_str = |field: &str| -> Result<String> {
        match obj.get(field) {
            None => Ok(String::new()),
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(CorpusError::BadField {
                line: line_no,
                field: field.into(),
                reason: "expected a string".into(),
            }),
        }
    };
    let id = obj["id"].as_u64().ok_or_else(|| CorpusError::BadField {
        line: line_no,
        field: "id".into(),
        reason: "expected a non-negative integer".into(),
    })? as usize;
    let lang = get_str("lang")?;
    if lang.is_empty() {
        return Err(CorpusError::BadField {
            line: line_no,
            field: "lang".into(),
            reason: "empty language code".into(),
        });
    }
    Ok(SentenceRecord {
        id,
        text: get_str("text")?,
        lang,
        source_url: get_str("source_url")?,
        site_id: get_str("site_id")?,
    })
}

pub fn write_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus_to(corpus, &mut w, format)?;
    w.flush()?;
    Ok(())
}

pub fn write_corpus_to<W: Write>(corpus: &Corpus, w: &mut W, format: CorpusFormat) -> Result<()> {
    for record in &corpus.records {
        match format {
            CorpusFormat::Plain => writeln!(w, "{}", record.text)?,
            CorpusFormat::Jsonl => {
                serde_json::to_writer(&mut *w, record).map_err(io::Error::from)?;
                w.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}
