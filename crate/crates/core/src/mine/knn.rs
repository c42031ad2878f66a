use rayon::prelude::*;

use super::{MineError, NeighborList};
use crate::providers::EmbeddingMatrix;

/// Inner product with eight interleaved partial sums.
///
/// The summation order is fixed, so the result is bit-identical across calls
/// and symmetric in its arguments. Exact and approximate search both score
/// through this function, which is what makes their outputs comparable
/// value-for-value.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Bounded best-k buffer ordered by (score desc, id asc).
pub(crate) struct TopK {
    k: usize,
    items: Vec<(f32, usize)>,
}

#[inline]
fn better(a: (f32, usize), b: (f32, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, score: f32, id: usize) {
        if self.k == 0 {
            return;
        }
        if self.items.len() == self.k && !better((score, id), self.items[self.k - 1]) {
            return;
        }
        let pos = self.items.partition_point(|&it| better(it, (score, id)));
        self.items.insert(pos, (score, id));
        self.items.truncate(self.k);
    }

    pub(crate) fn into_list(self, query_id: usize) -> NeighborList {
        let (cosines, ids) = self.items.into_iter().unzip();
        NeighborList {
            query_id,
            ids,
            cosines,
        }
    }
}

pub(crate) fn check_dims(queries: &EmbeddingMatrix, db: &EmbeddingMatrix) -> Result<(), MineError> {
    if !queries.is_empty() && !db.is_empty() && queries.dim() != db.dim() {
        return Err(MineError::DimensionMismatch {
            queries: queries.dim(),
            db: db.dim(),
        });
    }
    Ok(())
}

pub(crate) fn clip_k(k: usize, available: usize, what: &str) -> Result<usize, MineError> {
    if k == 0 {
        return Err(MineError::InvalidParams("k must be at least 1".into()));
    }
    if k > available {
        log::warn!("k={k} exceeds the {available} rows of the {what}; clipping");
    }
    Ok(k.min(available))
}

/// Exhaustive k-nearest-neighbor search by inner product.
///
/// Rows are unit vectors, so the inner product is the cosine. Queries are
/// processed `batch_size` at a time; results are in query order and each
/// list is sorted by descending cosine with ties broken by ascending id.
pub fn knn_exact(
    queries: &EmbeddingMatrix,
    db: &EmbeddingMatrix,
    k: usize,
    batch_size: usize,
) -> Result<Vec<NeighborList>, MineError> {
    check_dims(queries, db)?;
    if batch_size == 0 {
        return Err(MineError::InvalidParams("batch size must be at least 1".into()));
    }
    let k = clip_k(k, db.n(), "database")?;
    let mut out = Vec::with_capacity(queries.n());
    let ids: Vec<usize> = (0..queries.n()).collect();
    for batch in ids.chunks(batch_size) {
        let lists: Vec<NeighborList> = batch
            .par_iter()
            .map(|&q| {
                let query = queries.row(q);
                let mut top = TopK::new(k);
                for (id, row) in db.rows().enumerate() {
                    top.push(dot(query, row), id);
                }
                top.into_list(q)
            })
            .collect();
        out.extend(lists);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_f64_reference() {
        let a: Vec<f32> = (0..37).map(|i| ((i * 7919) % 101) as f32 / 50.0 - 1.0).collect();
        let b: Vec<f32> = (0..37).map(|i| ((i * 104_729) % 103) as f32 / 51.0 - 1.0).collect();
        let exact: f64 = a.iter().zip(&b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        assert!((f64::from(dot(&a, &b)) - exact).abs() < 1e-5);
        assert_eq!(dot(&a, &b).to_bits(), dot(&b, &a).to_bits());
        assert_eq!(dot(&[], &[]), 0.0);
    }

    #[test]
    fn topk_orders_and_breaks_ties() {
        let mut t = TopK::new(3);
        for (s, id) in [(0.5, 4), (0.9, 2), (0.5, 1), (0.1, 0), (0.9, 7)] {
            t.push(s, id);
        }
        let l = t.into_list(0);
        assert_eq!(l.ids, vec![2, 7, 1]);
        assert_eq!(l.cosines, vec![0.9, 0.9, 0.5]);
    }

    #[test]
    fn self_match_and_orthogonality() {
        let db = EmbeddingMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let res = knn_exact(&db, &db, 2, 2).unwrap();
        for (j, l) in res.iter().enumerate() {
            assert_eq!(l.query_id, j);
            assert_eq!(l.ids[0], j);
            assert!((l.cosines[0] - 1.0).abs() < 1e-6);
            assert_eq!(l.cosines[1], 0.0);
        }
        // ties at 0 resolve to the lowest remaining id
        assert_eq!(res[0].ids, vec![0, 1]);
        assert_eq!(res[1].ids, vec![1, 0]);
    }

    #[test]
    fn errors_and_clipping() {
        let a = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let b = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            knn_exact(&a, &b, 1, 10),
            Err(MineError::DimensionMismatch { queries: 2, db: 3 })
        ));
        assert!(matches!(knn_exact(&a, &a, 0, 10), Err(MineError::InvalidParams(_))));
        let res = knn_exact(&a, &a, 5, 10).unwrap();
        assert_eq!(res[0].ids.len(), 1);
    }
}
