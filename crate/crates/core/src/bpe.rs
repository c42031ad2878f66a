//! Byte-pair encoding over whitespace-delimited words.
//!
//! Each word is split into characters and prefixed with a begin-of-word
//! marker symbol. Training greedily merges the most frequent adjacent pair,
//! breaking count ties by the lexicographic order of `(left, right)`, until
//! the vocabulary reaches the requested size or no pair is left.
//!
//! Vocabulary layout: id 0 is the unknown token, followed by the base symbols
//! (marker included) in code point order, followed by merged tokens in the
//! order they were first created.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_ID: u32 = 0;
pub const WORD_MARKER: char = '\u{2581}';

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("training corpus has no words")]
    EmptyCorpus,
    #[error("vocabulary size {requested} must exceed the base alphabet size {base}")]
    VocabTooSmall { requested: usize, base: usize },
    #[error("token id {id} out of range (vocabulary has {len} entries)")]
    IdOutOfRange { id: u32, len: usize },
    #[error("model file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    vocab: Vec<String>,
    merges: Vec<(String, String)>,
    requested_size: usize,
    token_ids: HashMap<String, u32>,
    merge_ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl BpeModel {
    fn from_parts(vocab: Vec<String>, merges: Vec<(String, String)>, requested_size: usize) -> Self {
        let mut token_ids = HashMap::with_capacity(vocab.len());
        for (id, tok) in vocab.iter().enumerate().skip(1) {
            token_ids.entry(tok.clone()).or_insert(id as u32);
        }
        let mut merge_ranks = HashMap::with_capacity(merges.len());
        for (rank, (l, r)) in merges.iter().enumerate() {
            let (Some(&li), Some(&ri), Some(&mi)) = (
                token_ids.get(l),
                token_ids.get(r),
                token_ids.get(&format!("{l}{r}")),
            ) else {
                continue;
            };
            merge_ranks.entry((li, ri)).or_insert((rank, mi));
        }
        BpeModel {
            vocab,
            merges,
            requested_size,
            token_ids,
            merge_ranks,
        }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// The size asked for at training time.
    pub fn requested_size(&self) -> usize {
        self.requested_size
    }

    /// False when the corpus ran out of pairs before the requested size.
    pub fn reached_requested_size(&self) -> bool {
        self.vocab.len() == self.requested_size
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        if token == UNK_TOKEN {
            return Some(UNK_ID);
        }
        self.token_ids.get(token).copied()
    }

    fn word_symbols(&self, word: &str) -> Vec<u32> {
        let marker = self.token_ids[&WORD_MARKER.to_string()];
        let mut syms = Vec::with_capacity(word.chars().count() + 1);
        syms.push(marker);
        let mut buf = [0u8; 4];
        for c in word.chars() {
            let id = if c == WORD_MARKER {
                UNK_ID
            } else {
                self.token_ids
                    .get(c.encode_utf8(&mut buf) as &str)
                    .copied()
                    .unwrap_or(UNK_ID)
            };
            syms.push(id);
        }
        syms
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let mut syms = self.word_symbols(word);
        // Replay merges in training order, skipping those with no occurrence.
        let mut last_rank: Option<usize> = None;
        loop {
            let next = syms
                .windows(2)
                .filter_map(|w| self.merge_ranks.get(&(w[0], w[1])).map(|&(rank, id)| (rank, w[0], w[1], id)))
                .filter(|&(rank, ..)| last_rank.is_none_or(|l| rank > l))
                .min_by_key(|&(rank, ..)| rank);
            let Some((rank, left, right, merged)) = next else {
                break;
            };
            syms = merge_symbols(&syms, (left, right), merged);
            last_rank = Some(rank);
        }
        out.extend_from_slice(&syms);
    }

    /// Encodes text word by word. Characters outside the training alphabet
    /// (and a literal marker character) become [`UNK_ID`].
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            self.encode_word(word, &mut out);
        }
        out
    }

    /// Token strings for `text`, marker symbols included.
    pub fn segment(&self, text: &str) -> Vec<&str> {
        self.encode(text)
            .into_iter()
            .map(|id| self.vocab[id as usize].as_str())
            .collect()
    }

    /// Concatenates tokens and turns begin-of-word markers back into single
    /// spaces. Unknown ids render as `<unk>`.
    pub fn decode(&self, ids: &[u32]) -> Result<String, BpeError> {
        let mut s = String::new();
        for &id in ids {
            let tok = self.vocab.get(id as usize).ok_or(BpeError::IdOutOfRange {
                id,
                len: self.vocab.len(),
            })?;
            s.push_str(tok);
        }
        let s = s.replace(WORD_MARKER, " ");
        Ok(s.strip_prefix(' ').map(str::to_string).unwrap_or(s))
    }

    pub fn save(&self, path: &Path) -> Result<(), BpeError> {
        fs::write(path, self.to_model_string())?;
        Ok(())
    }

    pub fn to_model_string(&self) -> String {
        let mut s = format!("bpe v1 {}\n", self.vocab.len());
        for tok in &self.vocab {
            s.push_str(&escape(tok));
            s.push('\n');
        }
        s.push_str("#merges\n");
        for (l, r) in &self.merges {
            s.push_str(&escape(l));
            s.push('\t');
            s.push_str(&escape(r));
            s.push('\n');
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self, BpeError> {
        Self::from_model_str(&fs::read_to_string(path)?)
    }

    pub fn from_model_str(data: &str) -> Result<Self, BpeError> {
        let fmt_err = |line: usize, reason: &str| BpeError::Format {
            line,
            reason: reason.to_string(),
        };
        let mut lines = data.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| fmt_err(1, "missing header"))?;
        let size: usize = header
            .strip_prefix("bpe v1 ")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| fmt_err(1, "expected `bpe v1 <vocab_size>`"))?;

        let mut vocab = Vec::with_capacity(size);
        for _ in 0..size {
            let (n, line) = lines.next().ok_or_else(|| fmt_err(size + 1, "truncated vocabulary"))?;
            vocab.push(unescape(line).ok_or_else(|| fmt_err(n, "bad escape"))?);
        }
        match lines.next() {
            Some((_, "#merges")) => {}
            Some((n, _)) => return Err(fmt_err(n, "expected `#merges`")),
            None => return Err(fmt_err(size + 2, "missing `#merges`")),
        }
        if vocab.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(fmt_err(2, "first vocabulary entry must be <unk>"));
        }
        if !vocab.iter().any(|t| t == &WORD_MARKER.to_string()) {
            return Err(fmt_err(2, "vocabulary lacks the word marker"));
        }
        let known: HashSet<&str> = vocab.iter().map(String::as_str).collect();

        let mut merges = Vec::new();
        for (n, line) in lines {
            let (l, r) = line.split_once('\t').ok_or_else(|| fmt_err(n, "expected `left<TAB>right`"))?;
            let l = unescape(l).ok_or_else(|| fmt_err(n, "bad escape"))?;
            let r = unescape(r).ok_or_else(|| fmt_err(n, "bad escape"))?;
            if !known.contains(l.as_str())
                || !known.contains(r.as_str())
                || !known.contains(format!("{l}{r}").as_str())
            {
                return Err(fmt_err(n, "merge refers to a token missing from the vocabulary"));
            }
            merges.push((l, r));
        }
        Ok(BpeModel::from_parts(vocab, merges, size))
    }
}

fn escape(tok: &str) -> String {
    let mut s = String::with_capacity(tok.len());
    for c in tok.chars() {
        match c {
            '\\' => s.push_str("\\\\"),
            '\t' => s.push_str("\\t"),
            '\n' => s.push_str("\\n"),
            '\r' => s.push_str("\\r"),
            c => s.push(c),
        }
    }
    s
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

fn merge_symbols(syms: &[u32], pair: (u32, u32), merged: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == pair.0 && syms[i + 1] == pair.1 {
            out.push(merged);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    out
}

/// Heap entry: highest count first, then smallest `(left, right)`.
#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    key: Reverse<(String, String)>,
    pair: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| self.key.cmp(&other.key))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Number of entries in the vocabulary before any merge: the unknown token,
/// the word marker and every distinct character of the corpus.
pub fn base_vocab_size<S: AsRef<str>>(lines: &[S]) -> usize {
    base_alphabet(lines).len() + 1
}

fn base_alphabet<S: AsRef<str>>(lines: &[S]) -> BTreeSet<char> {
    let mut alphabet: BTreeSet<char> = lines
        .iter()
        .flat_map(|l| l.as_ref().chars())
        .filter(|c| !c.is_whitespace() && *c != WORD_MARKER)
        .collect();
    alphabet.insert(WORD_MARKER);
    alphabet
}

/// Trains a model on `lines`. Deterministic for a fixed input.
pub fn train<S: AsRef<str>>(lines: &[S], vocab_size: usize) -> Result<BpeModel, BpeError> {
    let mut word_freqs: HashMap<&str, u64> = HashMap::new();
    for line in lines {
        for w in line.as_ref().split_whitespace() {
            *word_freqs.entry(w).or_default() += 1;
        }
    }
    if word_freqs.is_empty() {
        return Err(BpeError::EmptyCorpus);
    }
    let alphabet = base_alphabet(lines);
    let base = alphabet.len() + 1;
    if vocab_size <= base {
        return Err(BpeError::VocabTooSmall {
            requested: vocab_size,
            base,
        });
    }

    let mut vocab: Vec<String> = std::iter::once(UNK_TOKEN.to_string())
        .chain(alphabet.iter().map(|c| c.to_string()))
        .collect();
    let mut ids: HashMap<String, u32> = vocab
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    let marker = ids[&WORD_MARKER.to_string()];

    let mut sorted_words: Vec<(&str, u64)> = word_freqs.into_iter().collect();
    sorted_words.sort_unstable();
    let freqs: Vec<u64> = sorted_words.iter().map(|&(_, f)| f).collect();
    let mut words: Vec<Vec<u32>> = sorted_words
        .iter()
        .map(|&(w, _)| {
            std::iter::once(marker)
                .chain(w.chars().map(|c| if c == WORD_MARKER { UNK_ID } else { ids[&c.to_string()] }))
                .collect()
        })
        .collect();

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, syms) in words.iter().enumerate() {
        for p in syms.windows(2) {
            if p[0] == UNK_ID || p[1] == UNK_ID {
                continue;
            }
            *pair_counts.entry((p[0], p[1])).or_default() += freqs[wi];
            pair_words.entry((p[0], p[1])).or_default().insert(wi);
        }
    }

    let candidate = |vocab: &[String], pair: (u32, u32), count: u64| Candidate {
        count,
        key: Reverse((vocab[pair.0 as usize].clone(), vocab[pair.1 as usize].clone())),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .map(|(&pair, &count)| candidate(&vocab, pair, count))
        .collect();

    let mut merges = Vec::new();
    while vocab.len() < vocab_size {
        let Some(best) = heap.pop() else { break };
        if pair_counts.get(&best.pair) != Some(&best.count) {
            continue; // stale
        }
        let (l, r) = best.pair;
        let merged_str = format!("{}{}", vocab[l as usize], vocab[r as usize]);
        let merged = match ids.get(&merged_str) {
            Some(&id) => id,
            None => {
                let id = vocab.len() as u32;
                vocab.push(merged_str.clone());
                ids.insert(merged_str, id);
                id
            }
        };
        merges.push((vocab[l as usize].clone(), vocab[r as usize].clone()));

        let mut touched: HashSet<(u32, u32)> = HashSet::new();
        let affected = pair_words.remove(&best.pair).unwrap_or_default();
        let mut affected: Vec<usize> = affected.into_iter().collect();
        affected.sort_unstable();
        for wi in affected {
            let new_syms = merge_symbols(&words[wi], best.pair, merged);
            if new_syms.len() == words[wi].len() {
                continue;
            }
            let f = freqs[wi];
            for p in words[wi].windows(2) {
                let key = (p[0], p[1]);
                if let Some(c) = pair_counts.get_mut(&key) {
                    *c -= f;
                    touched.insert(key);
                }
            }
            for p in new_syms.windows(2) {
                if p[0] == UNK_ID || p[1] == UNK_ID {
                    continue;
                }
                let key = (p[0], p[1]);
                *pair_counts.entry(key).or_default() += f;
                pair_words.entry(key).or_default().insert(wi);
                touched.insert(key);
            }
            words[wi] = new_syms;
        }
        pair_counts.remove(&best.pair);
        for key in touched {
            match pair_counts.get(&key) {
                Some(&0) => {
                    pair_counts.remove(&key);
                    pair_words.remove(&key);
                }
                Some(&count) => heap.push(candidate(&vocab, key, count)),
                None => {}
            }
        }
    }

    if vocab.len() < vocab_size {
        log::warn!(
            "bpe: corpus supports only {} vocabulary entries ({} requested)",
            vocab.len(),
            vocab_size
        );
    }
    Ok(BpeModel::from_parts(vocab, merges, vocab_size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_merge_prefers_most_frequent_pair() {
        let lines = ["aaab", "aaab"];
        let base = base_vocab_size(&lines);
        let model = train(&lines, base + 1).unwrap();
        assert_eq!(model.merges(), &[("a".to_string(), "a".to_string())]);
        assert_eq!(model.vocab_size(), base + 1);
    }

    #[test]
    fn single_candidate_tie_breaks_lexicographically() {
        // (▁,a) and (a,b) both occur once; "a" < "▁".
        let lines = ["ab"];
        let model = train(&lines, base_vocab_size(&lines) + 1).unwrap();
        assert_eq!(model.merges(), &[("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn encode_replays_merges() {
        let lines = ["aaab", "aaab"];
        let base = base_vocab_size(&lines);
        let model = train(&lines, base + 1).unwrap();
        // ▁ a a a b → ▁ aa a b
        assert_eq!(model.segment("aaab"), ["▁", "aa", "a", "b"]);
        let full = train(&lines, 100).unwrap();
        assert!(!full.reached_requested_size());
        assert_eq!(full.segment("aaab"), ["▁aaab"]);
    }

    #[test]
    fn vocab_too_small_is_rejected() {
        let lines = ["ab"];
        let base = base_vocab_size(&lines);
        assert!(matches!(
            train(&lines, base),
            Err(BpeError::VocabTooSmall { .. })
        ));
        assert!(matches!(train(&[" "], 10), Err(BpeError::EmptyCorpus)));
    }

    #[test]
    fn unknown_characters() {
        let model = train(&["aluu ilaa"], 12).unwrap();
        let ids = model.encode("aluu qilaa");
        assert!(ids.contains(&UNK_ID));
        assert_eq!(model.decode(&ids).unwrap(), "aluu <unk>ilaa");
        assert_eq!(model.decode(&[]).unwrap(), "");
        assert!(matches!(
            model.decode(&[9999]),
            Err(BpeError::IdOutOfRange { id: 9999, .. })
        ));
    }

    #[test]
    fn round_trip_simple() {
        let model = train(&["aluu ilaa", "aluu"], 15).unwrap();
        assert_eq!(model.decode(&model.encode("aluu ilaa")).unwrap(), "aluu ilaa");
    }

    #[test]
    fn model_file_round_trip() {
        let model = train(&["a\\b tab", "a\\b"], 14).unwrap();
        let text = model.to_model_string();
        assert!(text.starts_with(&format!("bpe v1 {}\n", model.vocab_size())));
        let back = BpeModel::from_model_str(&text).unwrap();
        assert_eq!(back.vocab(), model.vocab());
        assert_eq!(back.merges(), model.merges());
        assert_eq!(back.encode("a\\b tab"), model.encode("a\\b tab"));
    }

    #[test]
    fn model_file_errors() {
        assert!(matches!(
            BpeModel::from_model_str("bpe v2 3\n"),
            Err(BpeError::Format { line: 1, .. })
        ));
        assert!(matches!(
            BpeModel::from_model_str("bpe v1 3\n<unk>\n▁\n"),
            Err(BpeError::Format { .. })
        ));
        assert!(matches!(
            BpeModel::from_model_str("bpe v1 3\n<unk>\n▁\na\n#merges\na\tz\n"),
            Err(BpeError::Format { line: 6, .. })
        ));
    }

    /// Replaying the merge list over the base vocabulary yields every vocab entry.
    fn replay_vocab(model: &BpeModel) -> Vec<String> {
        let base: Vec<String> = model
            .vocab()
            .iter()
            .take_while(|t| {
                *t == UNK_TOKEN || t.chars().count() == 1
            })
            .cloned()
            .collect();
        let mut vocab = base;
        for (l, r) in model.merges() {
            let m = format!("{l}{r}");
            if !vocab.contains(&m) {
                vocab.push(m);
            }
        }
        vocab
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn training_corpus_round_trips(
            lines in prop::collection::vec("[abcæø]{1,6}( [abcæø]{1,6}){0,4}", 1..12),
            extra in 1usize..40,
        ) {
            let size = base_vocab_size(&lines) + extra;
            let model = train(&lines, size).unwrap();
            prop_assert!(model.vocab_size() <= size);
            prop_assert_eq!(replay_vocab(&model), model.vocab().to_vec());
            for line in &lines {
                let ids = model.encode(line);
                prop_assert!(!ids.contains(&UNK_ID));
                let words = line.split_whitespace().count();
                prop_assert!(ids.len() <= line.split_whitespace().map(|w| w.chars().count()).sum::<usize>() + words);
                prop_assert_eq!(&model.decode(&ids).unwrap(), line);
            }
            prop_assert_eq!(train(&lines, size).unwrap(), model);
        }
    }
}
