use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 16;

/// Rows whose norm is already this close to 1 are stored untouched, which
/// keeps load(save(m)) bit-exact for normalized input.
const UNIT_NORM_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes (expected \"EMB1\")")]
    BadMagic,
    #[error("payload is {actual} bytes, header implies {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("row {row} is a zero vector")]
    ZeroVector { row: usize },
    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding dimension must be positive")]
    ZeroDimension,
}

/// Dense row-major `n × dim` matrix of L2-normalized `f32` rows.
///
/// Row `i` belongs to sentence id `i` of the aligned corpus. Construction
/// always normalizes, so all downstream cosines are plain dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Normalizes `data` (row-major, `dim` columns) in place.
    pub fn from_flat(mut data: Vec<f32>, dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return if data.is_empty() {
                Ok(EmbeddingMatrix { n: 0, dim: 0, data })
            } else {
                Err(EmbeddingError::ZeroDimension)
            };
        }
        if !data.len().is_multiple_of(dim) {
            return Err(EmbeddingError::RaggedRow {
                row: data.len() / dim,
                expected: dim,
                found: data.len() % dim,
            });
        }
        for (row, chunk) in data.chunks_exact_mut(dim).enumerate() {
            normalize_row(chunk, row)?;
        }
        Ok(EmbeddingMatrix {
            n: data.len() / dim,
            dim,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, EmbeddingError> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(EmbeddingError::RaggedRow {
                    row,
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(data, dim)
    }

    pub fn empty(dim: usize) -> Self {
        EmbeddingMatrix {
            n: 0,
            dim,
            data: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Stacks `other` under `self`. Both must share a dimension.
    pub fn append(&mut self, other: EmbeddingMatrix) -> Result<(), EmbeddingError> {
        if self.n == 0 {
            *self = other;
            return Ok(());
        }
        if other.n > 0 && other.dim != self.dim {
            return Err(EmbeddingError::RaggedRow {
                row: self.n,
                expected: self.dim,
                found: other.dim,
            });
        }
        self.n += other.n;
        self.data.extend(other.data);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(EMBEDDING_MAGIC)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn normalize_row(row: &mut [f32], index: usize) -> Result<(), EmbeddingError> {
    if row.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite { row: index });
    }
    let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EmbeddingError::ZeroVector { row: index });
    }
    if (norm - 1.0).abs() > UNIT_NORM_SLACK {
        for v in row.iter_mut() {
            *v = (f64::from(*v) / norm) as f32;
        }
    }
    Ok(())
}

/// Reads an `EMB1` file and normalizes its rows.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix, EmbeddingError> {
    read_embeddings(BufReader::new(File::open(path)?))
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..])? {
            0 => break,
            k => got += k,
        }
    }
    if got < 4 || &header[..4] != EMBEDDING_MAGIC {
        return Err(EmbeddingError::BadMagic);
    }
    if got < HEADER_LEN {
        return Err(EmbeddingError::SizeMismatch {
            expected: HEADER_LEN as u64,
            actual: got as u64,
        });
    }
    let n = u64::from_le_bytes(header[4..12].try_into().unwrap());
    let dim = u32::from_le_bytes(header[12..16].try_into().unwrap());

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = n
        .checked_mul(u64::from(dim))
        .and_then(|x| x.checked_mul(4))
        .unwrap_or(u64::MAX);
    if payload.len() as u64 != expected {
        return Err(EmbeddingError::SizeMismatch {
            expected,
            actual: payload.len() as u64,
        });
    }
    if dim == 0 && n > 0 {
        return Err(EmbeddingError::ZeroDimension);
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::from_flat(data, dim as usize)
}
