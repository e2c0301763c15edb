//! Offline neighbor pre-processing.
//!
//! For every training sample the index stores the `pool` most similar other
//! samples under teacher cosine similarity. During distillation `k ≤ pool` of
//! them are drawn per anchor, without replacement, to enhance each mini-batch.

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use twofloat::TwoFloat;

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::EmbeddingMatrix;

pub const INDEX_MAGIC: &[u8; 4] = b"CSSK";

/// Per-sample neighbor lists, each sorted by descending teacher similarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborIndex {
    n: usize,
    pool: usize,
    neighbors: Vec<u32>,
}

impl NeighborIndex {
    /// Builds an index from raw row-major neighbor lists, validating every invariant.
    pub fn from_parts(n: usize, pool: usize, neighbors: Vec<u32>) -> Result<Self> {
        if pool == 0 {
            return Err(Error::invalid("pool must be positive"));
        }
        if pool >= n {
            return Err(Error::invalid(format!("pool too large: pool {pool} with {n} samples")));
        }
        if neighbors.len() != n * pool {
            return Err(Error::shape(format!(
                "{} neighbor entries for n={n}, pool={pool}",
                neighbors.len()
            )));
        }
        let mut seen = vec![usize::MAX; n];
        for (i, row) in neighbors.chunks_exact(pool).enumerate() {
            for &j in row {
                let j = j as usize;
                if j >= n {
                    return Err(Error::invalid(format!("row {i}: neighbor {j} out of range")));
                }
                if j == i {
                    return Err(Error::invalid(format!("row {i} contains itself")));
                }
                if seen[j] == i {
                    return Err(Error::invalid(format!("row {i}: duplicate neighbor {j}")));
                }
                seen[j] = i;
            }
        }
        Ok(Self { n, pool, neighbors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pool(&self) -> usize {
        self.pool
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.neighbors[i * self.pool..(i + 1) * self.pool]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(INDEX_MAGIC);
        w.u64(self.n as u64);
        w.u64(self.pool as u64);
        for &j in &self.neighbors {
            w.u32(j);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, INDEX_MAGIC)?;
        let n = r.u64()?;
        let pool = r.u64()?;
        let count = n
            .checked_mul(pool)
            .ok_or_else(|| Error::format("index dimensions overflow"))?;
        r.check_remaining(count, 4)?;
        let mut neighbors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            neighbors.push(r.u32()?);
        }
        r.finish()?;
        let n = binio::to_usize(n, "n")?;
        let pool = binio::to_usize(pool, "pool")?;
        Self::from_parts(n, pool, neighbors).map_err(|e| Error::format(format!("invalid index: {e}")))
    }
}

/// Ranks every other sample for each row and keeps the best `pool`.
///
/// Similarities are computed one row at a time, so the full N×N matrix is
/// never held in memory. Ties go to the lower index.
///
/// For a fixed query `q` the ranking key of candidate `b` is
/// `sign(q·b)(q·b)²/‖b‖²`, which orders candidates exactly like their cosine
/// but needs no square root. It is evaluated in double-double arithmetic, so
/// candidates with mathematically equal cosines get equal keys and fall back
/// to index order instead of to rounding noise.
pub fn build_index(teacher_emb: &EmbeddingMatrix, pool: usize) -> Result<NeighborIndex> {
    let n = teacher_emb.rows();
    if pool == 0 {
        return Err(Error::invalid("pool must be positive"));
    }
    if pool >= n {
        return Err(Error::invalid(format!("pool too large: pool {pool} with {n} samples")));
    }
    if n > u32::MAX as usize {
        return Err(Error::invalid("too many samples for u32 indices"));
    }
    if !teacher_emb.is_finite() {
        return Err(Error::NonFinite);
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| power_of_two_scaled(teacher_emb.row(i))).collect();
    let sq_norms: Vec<TwoFloat> = rows.iter().map(|r| dd_dot(r, r)).collect();
    let mut neighbors = Vec::with_capacity(n * pool);
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        scored.clear();
        scored.extend((0..n).filter(|&j| j != i).map(|j| {
            let d = dd_dot(&rows[i], &rows[j]);
            let key = if sq_norms[j].hi() == 0.0 {
                0.0
            } else {
                rounded_ratio(d * d.abs(), sq_norms[j])
            };
            (key, j)
        }));
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
        };
        if pool < scored.len() {
            scored.select_nth_unstable_by(pool - 1, by_rank);
            scored.truncate(pool);
        }
        scored.sort_unstable_by(by_rank);
        neighbors.extend(scored.iter().map(|&(_, j)| j as u32));
    }
    NeighborIndex::from_parts(n, pool, neighbors)
}

/// Rescales by a power of two (exact) so the largest entry is in `[1, 2)`.
fn power_of_two_scaled(row: &[f64]) -> Vec<f64> {
    let max = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return row.to_vec();
    }
    let e = -(max.log2().floor() as i32);
    // Two factors so neither overflows for subnormal inputs.
    let (a, b) = (2f64.powi(e / 2), 2f64.powi(e - e / 2));
    row.iter().map(|v| v * a * b).collect()
}

/// `num / den` rounded to f64. One remainder correction on top of the
/// leading quotient; `TwoFloat`'s own division is not accurate enough to
/// round equal quotients to the same f64.
fn rounded_ratio(num: TwoFloat, den: TwoFloat) -> f64 {
    let q0 = num.hi() / den.hi();
    let r = num - den * TwoFloat::from(q0);
    q0 + (r.hi() + r.lo()) / den.hi()
}

fn dd_dot(a: &[f64], b: &[f64]) -> TwoFloat {
    a.iter()
        .zip(b)
        .fold(TwoFloat::from(0.0), |acc, (x, y)| acc + TwoFloat::new_mul(*x, *y))
}

/// Draws `k` distinct neighbors of sample `i`, uniformly without replacement.
pub fn sample_neighbors<R: Rng + ?Sized>(
    index: &NeighborIndex,
    i: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if k > index.pool {
        return Err(Error::invalid(format!("k exceeds pool: k={k}, pool={}", index.pool)));
    }
    if i >= index.n {
        return Err(Error::invalid(format!("sample {i} out of range for {} samples", index.n)));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut row: Vec<usize> = index.row(i).iter().map(|&j| j as usize).collect();
    let (chosen, _) = row.partial_shuffle(rng, k);
    Ok(chosen.to_vec())
}

pub fn save_index(index: &NeighborIndex, path: &Path) -> Result<()> {
    binio::write_atomic(path, &index.encode())
}

pub fn load_index(path: &Path) -> Result<NeighborIndex> {
    NeighborIndex::decode(&binio::read_file(path)?)
}
