//! Dictionary-based partial translation ("code-switching").
//!
//! Source tokens found in a bilingual dictionary are replaced by their
//! translation so that a cross-lingual encoder that never saw the source
//! language has some anchor words to work with.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum CodeSwitchError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("dictionary line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("dictionaries disagree on the source language: `{expected}` vs `{found}`")]
    SourceLangMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BilingualDictionary {
    pub source_lang: String,
    pub target_lang: String,
    entries: HashMap<String, String>,
}

impl BilingualDictionary {
    pub fn new(source_lang: impl Into<String>, target_lang: impl Into<String>) -> Self {
        BilingualDictionary {
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            entries: HashMap::new(),
        }
    }

    /// Inserts an entry unless the case-folded key exists. Returns whether it
    /// was inserted.
    pub fn insert(&mut self, source: &str, target: &str) -> bool {
        let key = source.to_lowercase();
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, target.to_string());
        true
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.entries.get(&word.to_lowercase()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedDictionary {
    pub dictionary: BilingualDictionary,
    /// Entries skipped because their key was already present.
    pub duplicate_keys: usize,
}

/// Loads a `source<TAB>target` file. Blank lines are skipped; duplicate keys
/// keep the first entry.
pub fn load_dictionary(
    path: &Path,
    source_lang: &str,
    target_lang: &str,
) -> Result<LoadedDictionary, CodeSwitchError> {
    parse_dictionary(BufReader::new(File::open(path)?), source_lang, target_lang)
}

pub fn parse_dictionary<R: BufRead>(
    reader: R,
    source_lang: &str,
    target_lang: &str,
) -> Result<LoadedDictionary, CodeSwitchError> {
    let mut dictionary = BilingualDictionary::new(source_lang, target_lang);
    let mut duplicate_keys = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| match e.kind() {
            io::ErrorKind::InvalidData => CodeSwitchError::Malformed {
                line: line_no,
                reason: "invalid UTF-8".into(),
            },
            _ => CodeSwitchError::Io(e),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: &str| CodeSwitchError::Malformed {
            line: line_no,
            reason: reason.into(),
        };
        let (source, target) = line
            .split_once('\t')
            .ok_or_else(|| malformed("expected `source<TAB>target`"))?;
        let (source, target) = (source.trim(), target.trim());
        if source.is_empty() || target.is_empty() {
            return Err(malformed("empty source or target"));
        }
        if source.split_whitespace().count() != 1 {
            return Err(malformed("source must be a single token"));
        }
        if !dictionary.insert(source, target) {
            duplicate_keys += 1;
        }
    }
    if duplicate_keys > 0 {
        log::warn!("dictionary {source_lang}-{target_lang}: {duplicate_keys} duplicate keys ignored");
    }
    Ok(LoadedDictionary {
        dictionary,
        duplicate_keys,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeSwitchResult {
    pub text: String,
    pub tokens_total: usize,
    pub tokens_replaced: usize,
}

impl CodeSwitchResult {
    pub fn coverage(&self) -> f64 {
        ratio(self.tokens_replaced, self.tokens_total)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_sources(dicts: &[BilingualDictionary]) -> Result<(), CodeSwitchError> {
    if let Some(first) = dicts.first() {
        if let Some(other) = dicts.iter().find(|d| d.source_lang != first.source_lang) {
            return Err(CodeSwitchError::SourceLangMismatch {
                expected: first.source_lang.clone(),
                found: other.source_lang.clone(),
            });
        }
    }
    Ok(())
}

/// Splits a token into (leading punctuation, core, trailing punctuation).
fn split_punct(token: &str) -> (&str, &str, &str) {
    let is_punct = |c: char| !c.is_alphanumeric();
    let core_start = token.find(|c: char| !is_punct(c)).unwrap_or(token.len());
    let core_end = token
        .rfind(|c: char| !is_punct(c))
        .map(|i| i + token[i..].chars().next().map_or(0, char::len_utf8))
        .unwrap_or(core_start);
    (&token[..core_start], &token[core_start..core_end], &token[core_end..])
}

/// Replaces each whitespace token whose punctuation-stripped, case-folded
/// core is found in one of `dicts` (first hit wins). Tokens are re-joined
/// with single spaces.
pub fn code_switch(
    text: &str,
    dicts: &[BilingualDictionary],
) -> Result<CodeSwitchResult, CodeSwitchError> {
    check_sources(dicts)?;
    Ok(switch_unchecked(text, dicts))
}

fn switch_unchecked(text: &str, dicts: &[BilingualDictionary]) -> CodeSwitchResult {
    let mut out = Vec::new();
    let mut tokens_replaced = 0;
    for token in text.split_whitespace() {
        let (lead, core, trail) = split_punct(token);
        let hit = if core.is_empty() {
            None
        } else {
            dicts.iter().find_map(|d| d.get(core))
        };
        match hit {
            Some(target) => {
                tokens_replaced += 1;
                out.push(format!("{lead}{target}{trail}"));
            }
            None => out.push(token.to_string()),
        }
    }
    CodeSwitchResult {
        tokens_total: out.len(),
        tokens_replaced,
        text: out.join(" "),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoverageStats {
    pub tokens_total: usize,
    pub tokens_replaced: usize,
}

impl CoverageStats {
    pub fn coverage(&self) -> f64 {
        ratio(self.tokens_replaced, self.tokens_total)
    }
}

/// Code-switches every sentence of `corpus`, returning the new texts in id
/// order plus token-weighted coverage.
pub fn code_switch_corpus(
    corpus: &Corpus,
    dicts: &[BilingualDictionary],
) -> Result<(Vec<String>, CoverageStats), CodeSwitchError> {
    check_sources(dicts)?;
    let mut stats = CoverageStats::default();
    let texts = corpus
        .texts()
        .map(|t| {
            let r = switch_unchecked(t, dicts);
            stats.tokens_total += r.tokens_total;
            stats.tokens_replaced += r.tokens_replaced;
            r.text
        })
        .collect();
    if corpus.is_empty() {
        log::warn!("coverage requested for an empty corpus");
    }
    Ok((texts, stats))
}

/// Token-weighted share of corpus tokens that a dictionary lookup replaces.
pub fn corpus_coverage(
    corpus: &Corpus,
    dicts: &[BilingualDictionary],
) -> Result<f64, CodeSwitchError> {
    Ok(code_switch_corpus(corpus, dicts)?.1.coverage())
}
