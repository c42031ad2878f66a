//! Margin-based bitext mining.
//!
//! Both corpora are searched against each other (source→target and
//! target→source). Every query's candidate partner is scored with the ratio
//! margin
//!
//! ```text
//! margin(x, y) = 2k·cos(x, y) / (Σ_{z ∈ NN_k(x)} cos(x, z) + Σ_{z ∈ NN_k(y)} cos(y, z))
//! ```
//!
//! where `NN_k(x)` are x's k nearest neighbors in the other corpus. The two
//! candidate sets are merged, thresholded and sorted.

mod ivf;
mod knn;
mod pairs;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::EmbeddingMatrix;

pub use ivf::{default_nlist, IvfIndex, DEFAULT_IVF_SEED, KMEANS_ITERATIONS};
pub use knn::{dot, knn_exact};
pub use pairs::{read_pairs_tsv, save_pairs_tsv, write_pairs_tsv, PairRow, PAIRS_HEADER};

/// Corpora at least this large are searched approximately in `auto` mode.
pub const AUTO_APPROX_ROWS: usize = 50_000;

#[derive(Debug, Error)]
pub enum MineError {
    #[error("dimension mismatch: queries have {queries}, database has {db}")]
    DimensionMismatch { queries: usize, db: usize },
    #[error("invalid mining parameters: {0}")]
    InvalidParams(String),
    #[error("pairs file line {line}: {reason}")]
    PairsFormat { line: usize, reason: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exact,
    Approximate,
    /// Exact below [`AUTO_APPROX_ROWS`] rows, approximate above.
    Auto,
}

/// Which neighbor of a query becomes its candidate partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateRule {
    /// The nearest neighbor by cosine.
    BestNeighbor,
    /// The neighbor among the k with the highest margin.
    BestMargin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningParams {
    pub k: usize,
    pub threshold: f64,
    pub batch_size: usize,
    pub mode: SearchMode,
    pub nprobe: usize,
    /// IVF list count; ⌈√n⌉ when unset.
    pub nlist: Option<usize>,
    pub candidates: CandidateRule,
    /// Keep only each sentence's best pair (greedy, by margin).
    pub unique_pairs: bool,
    pub seed: u64,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            k: 4,
            threshold: 1.04,
            batch_size: 100,
            mode: SearchMode::Auto,
            nprobe: 8,
            nlist: None,
            candidates: CandidateRule::BestNeighbor,
            unique_pairs: false,
            seed: DEFAULT_IVF_SEED,
        }
    }
}

impl MiningParams {
    pub fn validate(&self) -> Result<(), MineError> {
        let bad = |m: &str| Err(MineError::InvalidParams(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !self.threshold.is_finite() || self.threshold <= 0.0 {
            return bad("threshold must be a positive number");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.nprobe == 0 {
            return bad("nprobe must be at least 1");
        }
        if self.nlist == Some(0) {
            return bad("nlist must be at least 1");
        }
        Ok(())
    }
}

/// The k nearest database rows of one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub query_id: usize,
    pub ids: Vec<usize>,
    pub cosines: Vec<f32>,
}

impl NeighborList {
    /// Sum of the neighbor cosines, accumulated in f64 in list order.
    pub fn cosine_sum(&self) -> f64 {
        self.cosines.iter().map(|&c| f64::from(c)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "forward" => Some(Direction::Forward),
            "backward" => Some(Direction::Backward),
            "both" => Some(Direction::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePair {
    pub src_id: usize,
    pub tgt_id: usize,
    pub margin: f64,
    pub direction: Direction,
}

/// Margin score, or `None` when the neighborhood sum is not positive.
pub fn try_margin(cos_xy: f64, sum_nn_x: f64, sum_nn_y: f64, k: usize) -> Option<f64> {
    let denom = sum_nn_x + sum_nn_y;
    if denom <= 0.0 {
        None
    } else {
        Some(2.0 * k as f64 * cos_xy / denom)
    }
}

/// Ratio margin `2k·cos_xy / (sum_nn_x + sum_nn_y)`; 0 for a degenerate
/// (non-positive) denominator.
pub fn margin_score(cos_xy: f64, sum_nn_x: f64, sum_nn_y: f64, k: usize) -> f64 {
    try_margin(cos_xy, sum_nn_x, sum_nn_y, k).unwrap_or(0.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MineStats {
    pub src_rows: usize,
    pub tgt_rows: usize,
    /// k after clipping to the smaller corpus.
    pub k: usize,
    pub threshold: f64,
    pub mode: String,
    pub candidates: usize,
    pub discarded_degenerate: usize,
    pub below_threshold: usize,
    pub dropped_non_unique: usize,
    pub forward: usize,
    pub backward: usize,
    pub both: usize,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MineOutput {
    pub pairs: Vec<CandidatePair>,
    pub stats: MineStats,
}

fn search(
    queries: &EmbeddingMatrix,
    db: &EmbeddingMatrix,
    k: usize,
    params: &MiningParams,
    approximate: bool,
) -> Result<Vec<NeighborList>, MineError> {
    if !approximate {
        return knn_exact(queries, db, k, params.batch_size);
    }
    let nlist = params.nlist.unwrap_or_else(|| default_nlist(db.n())).min(db.n());
    let index = IvfIndex::build(db, nlist, params.seed)?;
    index.search(queries, k, params.nprobe.min(nlist), params.batch_size)
}

fn pick_candidate(
    list: &NeighborList,
    own_sum: f64,
    other_sums: &[f64],
    k: usize,
    rule: CandidateRule,
) -> Option<(usize, f64)> {
    match rule {
        CandidateRule::BestNeighbor => {
            let (&other, &cos) = list.ids.first().zip(list.cosines.first())?;
            try_margin(f64::from(cos), own_sum, other_sums[other], k).map(|m| (other, m))
        }
        CandidateRule::BestMargin => list
            .ids
            .iter()
            .zip(&list.cosines)
            .filter_map(|(&other, &cos)| {
                try_margin(f64::from(cos), own_sum, other_sums[other], k).map(|m| (other, m))
            })
            .fold(None, |best: Option<(usize, f64)>, cand| match best {
                Some(b) if b.1 >= cand.1 => Some(b),
                _ => Some(cand),
            }),
    }
}

/// Orders pairs by margin (descending), then source id, then target id.
pub fn sort_pairs(pairs: &mut [CandidatePair]) {
    pairs.sort_by(|a, b| {
        b.margin
            .total_cmp(&a.margin)
            .then(a.src_id.cmp(&b.src_id))
            .then(a.tgt_id.cmp(&b.tgt_id))
    });
}

/// Mines candidate pairs between `src` and `tgt`.
pub fn mine(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    params: &MiningParams,
) -> Result<MineOutput, MineError> {
    params.validate()?;
    let approximate = match params.mode {
        SearchMode::Exact => false,
        SearchMode::Approximate => true,
        SearchMode::Auto => src.n().max(tgt.n()) >= AUTO_APPROX_ROWS,
    };
    let mut stats = MineStats {
        src_rows: src.n(),
        tgt_rows: tgt.n(),
        threshold: params.threshold,
        mode: if approximate { "approximate" } else { "exact" }.to_string(),
        ..Default::default()
    };
    if src.is_empty() || tgt.is_empty() {
        return Ok(MineOutput {
            pairs: Vec::new(),
            stats,
        });
    }
    if src.dim() != tgt.dim() {
        return Err(MineError::DimensionMismatch {
            queries: src.dim(),
            db: tgt.dim(),
        });
    }
    let k = params.k.min(src.n()).min(tgt.n());
    if k < params.k {
        log::warn!("k={} clipped to {k} (smaller corpus has {k} rows)", params.k);
    }
    stats.k = k;

    let forward = search(src, tgt, k, params, approximate)?;
    let backward = search(tgt, src, k, params, approximate)?;
    let src_sums: Vec<f64> = forward.iter().map(NeighborList::cosine_sum).collect();
    let tgt_sums: Vec<f64> = backward.iter().map(NeighborList::cosine_sum).collect();

    let mut merged: BTreeMap<(usize, usize), (f64, Direction)> = BTreeMap::new();
    for list in &forward {
        stats.candidates += 1;
        match pick_candidate(list, src_sums[list.query_id], &tgt_sums, k, params.candidates) {
            Some((y, m)) => {
                merged.insert((list.query_id, y), (m, Direction::Forward));
            }
            None => stats.discarded_degenerate += 1,
        }
    }
    for list in &backward {
        stats.candidates += 1;
        match pick_candidate(list, tgt_sums[list.query_id], &src_sums, k, params.candidates) {
            Some((x, m)) => {
                merged
                    .entry((x, list.query_id))
                    .and_modify(|e| e.1 = Direction::Both)
                    .or_insert((m, Direction::Backward));
            }
            None => stats.discarded_degenerate += 1,
        }
    }

    let mut pairs: Vec<CandidatePair> = Vec::with_capacity(merged.len());
    for ((src_id, tgt_id), (margin, direction)) in merged {
        if margin >= params.threshold {
            pairs.push(CandidatePair {
                src_id,
                tgt_id,
                margin,
                direction,
            });
        } else {
            stats.below_threshold += 1;
        }
    }
    sort_pairs(&mut pairs);

    if params.unique_pairs {
        let before = pairs.len();
        pairs = unique_best_pairs(pairs);
        stats.dropped_non_unique = before - pairs.len();
    }

    for p in &pairs {
        match p.direction {
            Direction::Forward => stats.forward += 1,
            Direction::Backward => stats.backward += 1,
            Direction::Both => stats.both += 1,
        }
    }
    stats.retained = pairs.len();
    Ok(MineOutput { pairs, stats })
}

/// Greedy one-to-one filter over pairs already sorted best-first.
pub fn unique_best_pairs(pairs: Vec<CandidatePair>) -> Vec<CandidatePair> {
    let mut used_src = HashSet::new();
    let mut used_tgt = HashSet::new();
    pairs
        .into_iter()
        .filter(|p| {
            if used_src.contains(&p.src_id) || used_tgt.contains(&p.tgt_id) {
                return false;
            }
            used_src.insert(p.src_id);
            used_tgt.insert(p.tgt_id);
            true
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> EmbeddingMatrix {
        let data: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        EmbeddingMatrix::from_flat(data, dim).unwrap()
    }

    #[test]
    fn margin_hand_cases() {
        assert_eq!(margin_score(1.0, 1.0, 1.0, 1), 1.0);
        assert!((margin_score(0.9, 1.7, 1.6, 2) - 3.6 / 3.3).abs() < 1e-9);
        assert_eq!(margin_score(0.0, 0.8, 0.9, 4), 0.0);
        assert_eq!(margin_score(0.5, -0.3, 0.2, 4), 0.0);
        assert_eq!(try_margin(0.5, -0.3, 0.2, 4), None);
    }

    #[test]
    fn planted_identity_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(30, 256, &mut rng);
        let params = MiningParams {
            threshold: 1e-9,
            ..Default::default()
        };
        let out = mine(&m, &m, &params).unwrap();
        for i in 0..30 {
            let own = out
                .pairs
                .iter()
                .find(|p| p.src_id == i && p.tgt_id == i)
                .expect("diagonal pair retained");
            assert_eq!(own.direction, Direction::Both);
            for p in out.pairs.iter().filter(|p| p.src_id == i && p.tgt_id != i) {
                assert!(own.margin > p.margin);
            }
        }
        let keys: HashSet<_> = out.pairs.iter().map(|p| (p.src_id, p.tgt_id)).collect();
        assert_eq!(keys.len(), out.pairs.len());
    }

    #[test]
    fn unique_filter_is_one_to_one() {
        let pairs = vec![
            CandidatePair { src_id: 0, tgt_id: 0, margin: 1.3, direction: Direction::Both },
            CandidatePair { src_id: 0, tgt_id: 1, margin: 1.2, direction: Direction::Forward },
            CandidatePair { src_id: 1, tgt_id: 0, margin: 1.1, direction: Direction::Backward },
            CandidatePair { src_id: 2, tgt_id: 2, margin: 1.05, direction: Direction::Both },
        ];
        let kept: Vec<_> = unique_best_pairs(pairs).iter().map(|p| (p.src_id, p.tgt_id)).collect();
        assert_eq!(kept, vec![(0, 0), (2, 2)]);
    }

    #[test]
    fn small_corpus_clips_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_matrix(2, 8, &mut rng);
        let tgt = random_matrix(9, 8, &mut rng);
        let out = mine(&src, &tgt, &MiningParams { threshold: 1e-9, ..Default::default() }).unwrap();
        assert_eq!(out.stats.k, 2);
        let empty = EmbeddingMatrix::empty(8);
        assert!(mine(&empty, &tgt, &MiningParams::default()).unwrap().pairs.is_empty());
    }

    #[test]
    fn rejects_bad_params_and_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(4, 8, &mut rng);
        let b = random_matrix(4, 6, &mut rng);
        assert!(matches!(mine(&a, &b, &MiningParams::default()), Err(MineError::DimensionMismatch { .. })));
        for params in [
            MiningParams { k: 0, ..Default::default() },
            MiningParams { threshold: 0.0, ..Default::default() },
            MiningParams { threshold: f64::NAN, ..Default::default() },
            MiningParams { batch_size: 0, ..Default::default() },
        ] {
            assert!(matches!(mine(&a, &a, &params), Err(MineError::InvalidParams(_))));
        }
    }

    #[test]
    fn anti_correlated_neighborhoods_are_discarded() {
        // Every cross cosine is negative, so every denominator is negative.
        let src = EmbeddingMatrix::from_rows(&[vec![1.0, 0.1], vec![1.0, -0.1]]).unwrap();
        let tgt = EmbeddingMatrix::from_rows(&[vec![-1.0, 0.05], vec![-1.0, -0.05]]).unwrap();
        let out = mine(&src, &tgt, &MiningParams { k: 1, threshold: 1e-9, ..Default::default() }).unwrap();
        assert!(out.pairs.is_empty());
        assert_eq!(out.stats.discarded_degenerate, 4);
    }

    #[test]
    fn best_margin_rule_never_scores_lower() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let src = random_matrix(40, 16, &mut rng);
        let tgt = random_matrix(50, 16, &mut rng);
        let base = MiningParams { threshold: 1e-9, ..Default::default() };
        let nn = mine(&src, &tgt, &base).unwrap();
        let bm = mine(&src, &tgt, &MiningParams { candidates: CandidateRule::BestMargin, ..base }).unwrap();
        let best = |out: &MineOutput, i: usize| {
            out.pairs
                .iter()
                .filter(|p| p.src_id == i && p.direction != Direction::Backward)
                .map(|p| p.margin)
                .fold(f64::MIN, f64::max)
        };
        for i in 0..40 {
            assert!(best(&bm, i) >= best(&nn, i));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn margin_denominator_symmetry(c in -1.0f64..1.0, s1 in -4.0f64..4.0, s2 in -4.0f64..4.0, k in 1usize..10) {
            prop_assert_eq!(margin_score(c, s1, s2, k), margin_score(c, s2, s1, k));
        }

        #[test]
        fn output_sorted_unique_and_thresholded(seed in 0u64..1000, ns in 1usize..25, nt in 1usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let src = random_matrix(ns, 8, &mut rng);
            let tgt = random_matrix(nt, 8, &mut rng);
            let low = mine(&src, &tgt, &MiningParams { threshold: 1.04, ..Default::default() }).unwrap();
            let high = mine(&src, &tgt, &MiningParams { threshold: 1.06, ..Default::default() }).unwrap();
            let keys: HashSet<_> = low.pairs.iter().map(|p| (p.src_id, p.tgt_id)).collect();
            prop_assert_eq!(keys.len(), low.pairs.len());
            for w in low.pairs.windows(2) {
                prop_assert!(w[0].margin > w[1].margin
                    || (w[0].margin == w[1].margin && (w[0].src_id, w[0].tgt_id) < (w[1].src_id, w[1].tgt_id)));
            }
            prop_assert!(low.pairs.iter().all(|p| p.margin >= 1.04));
            for p in &high.pairs {
                prop_assert!(low.pairs.contains(p));
            }
        }

        #[test]
        fn forward_candidates_are_nearest_neighbors(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let src = random_matrix(12, 8, &mut rng);
            let tgt = random_matrix(15, 8, &mut rng);
            let params = MiningParams { threshold: 1e-9, ..Default::default() };
            let out = mine(&src, &tgt, &params).unwrap();
            let fwd = knn_exact(&src, &tgt, 4, 100).unwrap();
            for p in out.pairs.iter().filter(|p| p.direction != Direction::Backward) {
                prop_assert_eq!(fwd[p.src_id].ids[0], p.tgt_id);
            }
        }
    }
}
