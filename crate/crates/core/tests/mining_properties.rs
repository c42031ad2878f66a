//! Search and mining properties on random unit vectors.

use bitextmine::mine::{self, knn_exact, CandidateRule, Direction, MiningParams, SearchMode};
use bitextmine::providers::EmbeddingMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn raw(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// Exhaustive scan: all cosines sorted by (desc, id asc), first k kept.
fn brute_force(q: &EmbeddingMatrix, db: &EmbeddingMatrix, k: usize) -> Vec<Vec<usize>> {
    q.rows()
        .map(|row| {
            let mut all: Vec<(f32, usize)> = db.rows().enumerate().map(|(j, r)| (mine::dot(row, r), j)).collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            all.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

#[test]
fn knn_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let q = EmbeddingMatrix::from_flat(raw(50, 32, &mut rng), 32).unwrap();
    let db = EmbeddingMatrix::from_flat(raw(200, 32, &mut rng), 32).unwrap();
    let got: Vec<Vec<usize>> = knn_exact(&q, &db, 4, 100).unwrap().into_iter().map(|l| l.ids).collect();
    assert_eq!(got, brute_force(&q, &db, 4));
}

#[test]
fn duplicate_rows_tie_break_by_id() {
    let db = EmbeddingMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let q = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
    assert_eq!(knn_exact(&q, &db, 3, 1).unwrap()[0].ids, vec![1, 2, 3]);
}

#[test]
fn auto_mode_uses_exact_on_small_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = EmbeddingMatrix::from_flat(raw(30, 8, &mut rng), 8).unwrap();
    let b = EmbeddingMatrix::from_flat(raw(40, 8, &mut rng), 8).unwrap();
    let auto = mine::mine(&a, &b, &MiningParams::default()).unwrap();
    let exact = mine::mine(&a, &b, &MiningParams { mode: SearchMode::Exact, ..Default::default() }).unwrap();
    assert_eq!(auto.pairs, exact.pairs);
    assert_eq!(auto.stats.mode, "exact");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn positive_scaling_changes_nothing(seed in 0u64..10_000, scale in 0.01f32..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, t) = (raw(15, 8, &mut rng), raw(18, 8, &mut rng));
        let scaled = |v: &[f32]| v.iter().map(|x| x * scale).collect::<Vec<_>>();
        let a = EmbeddingMatrix::from_flat(s.clone(), 8).unwrap();
        let b = EmbeddingMatrix::from_flat(t.clone(), 8).unwrap();
        let a2 = EmbeddingMatrix::from_flat(scaled(&s), 8).unwrap();
        let b2 = EmbeddingMatrix::from_flat(scaled(&t), 8).unwrap();
        let ids = |x: &EmbeddingMatrix, y: &EmbeddingMatrix| -> Vec<Vec<usize>> {
            knn_exact(x, y, 4, 100).unwrap().into_iter().map(|l| l.ids).collect()
        };
        prop_assert_eq!(ids(&a, &b), ids(&a2, &b2));
        let p = MiningParams { threshold: 1e-6, ..Default::default() };
        let m1 = mine::mine(&a, &b, &p).unwrap();
        let m2 = mine::mine(&a2, &b2, &p).unwrap();
        prop_assert_eq!(m1.pairs.len(), m2.pairs.len());
        for (x, y) in m1.pairs.iter().zip(&m2.pairs) {
            prop_assert_eq!((x.src_id, x.tgt_id, x.direction), (y.src_id, y.tgt_id, y.direction));
            prop_assert!((x.margin - y.margin).abs() < 1e-5);
        }
    }

    #[test]
    fn forward_numerator_is_first_neighbor(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = EmbeddingMatrix::from_flat(raw(12, 6, &mut rng), 6).unwrap();
        let b = EmbeddingMatrix::from_flat(raw(14, 6, &mut rng), 6).unwrap();
        let fwd = knn_exact(&a, &b, 4, 100).unwrap();
        let bwd = knn_exact(&b, &a, 4, 100).unwrap();
        let out = mine::mine(&a, &b, &MiningParams { threshold: 1e-9, ..Default::default() }).unwrap();
        for p in out.pairs.iter().filter(|p| p.direction != Direction::Backward) {
            let l = &fwd[p.src_id];
            prop_assert_eq!(l.ids[0], p.tgt_id);
            let expect = mine::margin_score(
                f64::from(l.cosines[0]),
                l.cosine_sum(),
                bwd[p.tgt_id].cosine_sum(),
                4,
            );
            prop_assert_eq!(p.margin, expect);
        }
    }

    #[test]
    fn unique_output_is_one_to_one_subset(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = EmbeddingMatrix::from_flat(raw(20, 6, &mut rng), 6).unwrap();
        let b = EmbeddingMatrix::from_flat(raw(20, 6, &mut rng), 6).unwrap();
        for rule in [CandidateRule::BestNeighbor, CandidateRule::BestMargin] {
            let base = MiningParams { threshold: 1e-9, candidates: rule, ..Default::default() };
            let all = mine::mine(&a, &b, &base).unwrap();
            let uniq = mine::mine(&a, &b, &MiningParams { unique_pairs: true, ..base }).unwrap();
            let mut srcs: Vec<_> = uniq.pairs.iter().map(|p| p.src_id).collect();
            let mut tgts: Vec<_> = uniq.pairs.iter().map(|p| p.tgt_id).collect();
            srcs.sort_unstable();
            srcs.dedup();
            tgts.sort_unstable();
            tgts.dedup();
            prop_assert_eq!(srcs.len(), uniq.pairs.len());
            prop_assert_eq!(tgts.len(), uniq.pairs.len());
            prop_assert!(uniq.pairs.iter().all(|p| all.pairs.contains(p)));
            prop_assert_eq!(uniq.stats.dropped_non_unique + uniq.pairs.len(), all.pairs.len());
        }
    }
}
