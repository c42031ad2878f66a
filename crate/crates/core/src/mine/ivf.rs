//! Inverted-file index over unit vectors.
//!
//! Spherical k-means partitions the database; a query scores every centroid,
//! then scans only the `nprobe` best lists.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::knn::{check_dims, clip_k, dot, TopK};
use super::{MineError, NeighborList};
use crate::providers::EmbeddingMatrix;

pub const KMEANS_ITERATIONS: usize = 25;
pub const DEFAULT_IVF_SEED: u64 = 13;

pub struct IvfIndex {
    dim: usize,
    centroids: Vec<f32>,
    lists: Vec<Vec<usize>>,
    db: EmbeddingMatrix,
}

/// Default list count: ⌈√n⌉.
pub fn default_nlist(n: usize) -> usize {
    (n as f64).sqrt().ceil().max(1.0) as usize
}

fn assign(db: &EmbeddingMatrix, centroids: &[f32], dim: usize) -> Vec<(usize, f32)> {
    (0..db.n())
        .into_par_iter()
        .map(|i| {
            let row = db.row(i);
            let mut best = (0usize, f32::NEG_INFINITY);
            for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
                let s = dot(row, centroid);
                if s > best.1 {
                    best = (c, s);
                }
            }
            best
        })
        .collect()
}

impl IvfIndex {
    /// Builds the index with `nlist` partitions.
    ///
    /// Centroids start from `nlist` distinct rows drawn with a seeded RNG and
    /// go through [`KMEANS_ITERATIONS`] assign/update rounds. A centroid left
    /// without members is re-seeded from the row currently farthest from its
    /// own centroid.
    pub fn build(db: &EmbeddingMatrix, nlist: usize, seed: u64) -> Result<Self, MineError> {
        let n = db.n();
        if nlist == 0 || nlist > n {
            return Err(MineError::InvalidParams(format!(
                "nlist must be in 1..={n}, got {nlist}"
            )));
        }
        let dim = db.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids: Vec<f32> = rand::seq::index::sample(&mut rng, n, nlist)
            .into_iter()
            .flat_map(|i| db.row(i).to_vec())
            .collect();

        for _ in 0..KMEANS_ITERATIONS {
            let assignment = assign(db, &centroids, dim);
            let mut sums = vec![0f64; nlist * dim];
            let mut counts = vec![0usize; nlist];
            for (i, &(c, _)) in assignment.iter().enumerate() {
                counts[c] += 1;
                for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(db.row(i)) {
                    *s += f64::from(v);
                }
            }

            let mut empty = Vec::new();
            for c in 0..nlist {
                let sum = &sums[c * dim..(c + 1) * dim];
                let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
                if counts[c] == 0 || norm == 0.0 {
                    empty.push(c);
                    continue;
                }
                for (dst, &s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(sum) {
                    *dst = (s / norm) as f32;
                }
            }
            if !empty.is_empty() {
                let mut farthest: Vec<(f32, usize)> =
                    assignment.iter().enumerate().map(|(i, &(_, s))| (s, i)).collect();
                farthest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for (c, &(_, row)) in empty.iter().zip(&farthest) {
                    centroids[c * dim..(c + 1) * dim].copy_from_slice(db.row(row));
                }
            }
        }

        let mut lists = vec![Vec::new(); nlist];
        for (i, (c, _)) in assign(db, &centroids, dim).into_iter().enumerate() {
            lists[c].push(i);
        }
        Ok(IvfIndex {
            dim,
            centroids,
            lists,
            db: db.clone(),
        })
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn len(&self) -> usize {
        self.db.n()
    }

    pub fn is_empty(&self) -> bool {
        self.db.is_empty()
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Approximate k-NN: same output format as [`super::knn_exact`]. A query
    /// whose probed lists hold fewer than `k` rows gets a shorter list.
    pub fn search(
        &self,
        queries: &EmbeddingMatrix,
        k: usize,
        nprobe: usize,
        batch_size: usize,
    ) -> Result<Vec<NeighborList>, MineError> {
        check_dims(queries, &self.db)?;
        if nprobe == 0 || nprobe > self.nlist() {
            return Err(MineError::InvalidParams(format!(
                "nprobe must be in 1..={}, got {nprobe}",
                self.nlist()
            )));
        }
        if batch_size == 0 {
            return Err(MineError::InvalidParams("batch size must be at least 1".into()));
        }
        let k = clip_k(k, self.db.n(), "database")?;
        let ids: Vec<usize> = (0..queries.n()).collect();
        let mut out = Vec::with_capacity(queries.n());
        for batch in ids.chunks(batch_size) {
            let lists: Vec<NeighborList> = batch
                .par_iter()
                .map(|&q| {
                    let query = queries.row(q);
                    let mut probe = TopK::new(nprobe);
                    for c in 0..self.nlist() {
                        probe.push(dot(query, self.centroid(c)), c);
                    }
                    let mut top = TopK::new(k);
                    for &c in &probe.into_list(0).ids {
                        for &id in &self.lists[c] {
                            top.push(dot(query, self.db.row(id)), id);
                        }
                    }
                    top.into_list(q)
                })
                .collect();
            out.extend(lists);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mine::knn_exact;
    use rand::Rng;

    fn random_matrix(n: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        EmbeddingMatrix::from_flat(data, dim).unwrap()
    }

    #[test]
    fn every_row_in_exactly_one_list() {
        let db = random_matrix(300, 8, 1);
        let index = IvfIndex::build(&db, 17, DEFAULT_IVF_SEED).unwrap();
        assert_eq!(index.nlist(), 17);
        let mut seen: Vec<usize> = index.lists().iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..300).collect::<Vec<_>>());
        for c in 0..index.nlist() {
            let norm: f32 = index.centroid(c).iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn exhaustive_probe_equals_exact() {
        let db = random_matrix(400, 12, 2);
        let q = random_matrix(60, 12, 3);
        let exact = knn_exact(&q, &db, 5, 7).unwrap();
        let index = IvfIndex::build(&db, 20, DEFAULT_IVF_SEED).unwrap();
        assert_eq!(index.search(&q, 5, 20, 7).unwrap(), exact);
        let single = IvfIndex::build(&db, 1, DEFAULT_IVF_SEED).unwrap();
        assert_eq!(single.search(&q, 5, 1, 100).unwrap(), exact);
    }

    #[test]
    fn build_is_deterministic() {
        let db = random_matrix(200, 6, 4);
        let a = IvfIndex::build(&db, 10, 13).unwrap();
        let b = IvfIndex::build(&db, 10, 13).unwrap();
        assert_eq!(a.lists(), b.lists());
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn duplicate_rows_force_reseeding() {
        // Only two distinct points but four clusters requested.
        let rows: Vec<Vec<f32>> = (0..20)
            .map(|i| if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let db = EmbeddingMatrix::from_rows(&rows).unwrap();
        let index = IvfIndex::build(&db, 4, 13).unwrap();
        assert_eq!(index.lists().iter().map(Vec::len).sum::<usize>(), 20);
        let q = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(index.search(&q, 3, 4, 1).unwrap(), knn_exact(&q, &db, 3, 1).unwrap());
    }

    #[test]
    fn parameter_errors() {
        let db = random_matrix(10, 4, 5);
        assert!(IvfIndex::build(&db, 0, 13).is_err());
        assert!(IvfIndex::build(&db, 11, 13).is_err());
        let index = IvfIndex::build(&db, 3, 13).unwrap();
        assert!(index.search(&db, 2, 4, 10).is_err());
        assert!(index.search(&db, 2, 0, 10).is_err());
        assert_eq!(default_nlist(10_000), 100);
        assert_eq!(default_nlist(10), 4);
    }
}
