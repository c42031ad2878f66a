//! Corpus-level BLEU and the pipeline summary report.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crawler::CrawlReport;
use crate::mine::MineStats;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("cannot score an empty corpus")]
    Empty,
    #[error("max_n must be at least 1")]
    BadOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuOptions {
    pub max_n: usize,
    /// Add-one smoothing of the precisions of order 2 and above.
    pub smoothing: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        BleuOptions {
            max_n: 4,
            smoothing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// Score in [0, 100].
    pub bleu: f64,
    /// Modified n-gram precision for orders 1..=max_n.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<'t>(tokens: &'t [&str], n: usize) -> HashMap<&'t [&'t str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU over whitespace tokens with clipped n-gram counts.
pub fn bleu<H: AsRef<str>, R: AsRef<str>>(
    hypotheses: &[H],
    references: &[R],
    opts: BleuOptions,
) -> Result<BleuReport, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            hyps: hypotheses.len(),
            refs: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::Empty);
    }
    if opts.max_n == 0 {
        return Err(EvalError::BadOrder);
    }
    let mut matched = vec![0usize; opts.max_n];
    let mut total = vec![0usize; opts.max_n];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        let ht: Vec<&str> = h.as_ref().split_whitespace().collect();
        let rt: Vec<&str> = r.as_ref().split_whitespace().collect();
        hyp_len += ht.len();
        ref_len += rt.len();
        for n in 1..=opts.max_n {
            let hc = ngram_counts(&ht, n);
            let rc = ngram_counts(&rt, n);
            for (g, &c) in &hc {
                matched[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }

    let precisions: Vec<f64> = (0..opts.max_n)
        .map(|i| {
            if opts.smoothing && i > 0 {
                (matched[i] + 1) as f64 / (total[i] + 1) as f64
            } else if total[i] == 0 {
                0.0
            } else {
                matched[i] as f64 / total[i] as f64
            }
        })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp().min(1.0)
    };
    let bleu = if precisions.iter().all(|&p| p > 0.0) {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / opts.max_n as f64;
        (100.0 * brevity_penalty * log_mean.exp()).clamp(0.0, 100.0)
    } else {
        0.0
    };
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

/// Sentence counts for one language before and after deduplication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub lang: String,
    pub sentences_in: usize,
    pub sentences_out: usize,
    pub duplicates_removed: usize,
    /// Share of input sentences removed as duplicates.
    pub dedup_ratio: f64,
}

impl CorpusCounts {
    pub fn new(lang: &str, sentences_in: usize, sentences_out: usize) -> Self {
        let removed = sentences_in.saturating_sub(sentences_out);
        CorpusCounts {
            lang: lang.to_string(),
            sentences_in,
            sentences_out,
            duplicates_removed: removed,
            dedup_ratio: if sentences_in == 0 {
                0.0
            } else {
                removed as f64 / sentences_in as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub tokens_total: usize,
    pub tokens_replaced: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateSummary {
    pub sentences: usize,
    pub src_lang: String,
    pub tgt_lang: String,
}

/// Machine-readable summary of a run. Holds no timestamps, so identical
/// inputs give byte-identical reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// The effective configuration, defaults expanded.
    pub config: serde_json::Value,
    /// Stages in the order they were run or found complete.
    pub stages: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crawl: Option<CrawlReport>,
    pub corpora: Vec<CorpusCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bpe: Option<BTreeMap<String, usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mining: Option<MineStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub translate: Option<TranslateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<BleuReport>,
}

/// Serializes a report as pretty JSON with a trailing newline.
pub fn pipeline_report(report: &PipelineReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report is always serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two(n: usize) -> BleuOptions {
        BleuOptions { max_n: n, smoothing: false }
    }

    #[test]
    fn perfect_match_is_100() {
        let s = ["the cat sat on the mat", "a dog barked loudly today"];
        let r = bleu(&s, &s, BleuOptions::default()).unwrap();
        assert_eq!(r.bleu, 100.0);
        assert_eq!(r.brevity_penalty, 1.0);
    }

    #[test]
    fn clipped_unigrams() {
        let r = bleu(&["the the the the"], &["the cat is here"], BleuOptions::default()).unwrap();
        assert_eq!(r.precisions[0], 0.25);
        assert_eq!(r.precisions[1], 0.0);
        assert_eq!(r.bleu, 0.0);
    }

    #[test]
    fn brevity_penalty_case() {
        let r = bleu(&["the cat"], &["the cat sat"], two(2)).unwrap();
        assert_eq!(r.precisions, vec![1.0, 1.0]);
        assert!((r.brevity_penalty - (-0.5f64).exp()).abs() < 1e-12);
        assert!((r.bleu - 60.653).abs() < 1e-3);
    }

    #[test]
    fn errors_and_empty_hypotheses() {
        assert_eq!(bleu::<&str, &str>(&[], &[], BleuOptions::default()), Err(EvalError::Empty));
        assert!(matches!(bleu(&["a"], &["a", "b"], BleuOptions::default()), Err(EvalError::LengthMismatch { .. })));
        assert_eq!(bleu(&["a"], &["a"], two(0)), Err(EvalError::BadOrder));
        let r = bleu(&[""], &["a b"], BleuOptions::default()).unwrap();
        assert_eq!((r.bleu, r.brevity_penalty), (0.0, 0.0));
    }

    #[test]
    fn smoothing_rescues_short_corpora() {
        let opts = BleuOptions { max_n: 4, smoothing: true };
        let r = bleu(&["the cat sat"], &["the cat ran"], opts).unwrap();
        assert!(r.bleu > 0.0 && r.bleu < 100.0);
        assert_eq!(r.precisions[1], 2.0 / 3.0);
        assert_eq!(r.precisions[2], 0.5);
        assert_eq!(bleu(&["the cat sat"], &["the cat ran"], BleuOptions::default()).unwrap().bleu, 0.0);
    }

    #[test]
    fn report_has_no_nondeterministic_fields() {
        let report = PipelineReport {
            corpora: vec![CorpusCounts::new("kl", 10, 8)],
            ..Default::default()
        };
        let s = pipeline_report(&report);
        assert_eq!(s, pipeline_report(&report));
        assert!(s.contains("\"dedup_ratio\": 0.2"));
    }

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..8)
            .prop_map(|v| v.join(" "))
    }

    proptest! {
        #[test]
        fn bounded_and_permutation_invariant(
            pairs in prop::collection::vec((sentence(), sentence()), 1..10),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let (h, r): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
            let a = bleu(&h, &r, BleuOptions::default()).unwrap();
            prop_assert!((0.0..=100.0).contains(&a.bleu));
            let mut idx: Vec<usize> = (0..h.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let hp: Vec<&String> = idx.iter().map(|&i| &h[i]).collect();
            let rp: Vec<&String> = idx.iter().map(|&i| &r[i]).collect();
            let b = bleu(&hp, &rp, BleuOptions::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
