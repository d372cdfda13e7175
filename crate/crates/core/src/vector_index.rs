//! Exact cosine search over every keyframe embedding.
//!
//! Rows are unit vectors, so cosine similarity is a dot product. Dot products
//! accumulate in `f64`; each row's score is computed the same way whether the
//! scan runs serially or split across workers, so blocked and parallel scans
//! return bit-identical scores.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{KeyframeId, VideoSpan};
use crate::embedding::{normalize, EmbeddingError, EmbeddingVector};
use crate::trke::{self, TrkeError, TrkeFile};

/// Rows per block when a scan is partitioned across workers.
pub const DEFAULT_BLOCK_ROWS: usize = 4096;

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum VectorIndexError {
    #[error("query has dimension {actual}, store has {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector store is empty")]
    EmptyStore,
    #[error("unknown keyframe {0}")]
    UnknownKeyframe(KeyframeId),
    #[error("duplicate keyframe {0} in store")]
    DuplicateKeyframe(KeyframeId),
    #[error("row {id} has norm {norm}, expected 1")]
    NotUnitNorm { id: KeyframeId, norm: f64 },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("row {id}: {source}")]
    BadRow {
        id: KeyframeId,
        #[source]
        source: EmbeddingError,
    },
    #[error(transparent)]
    Format(#[from] TrkeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub keyframe_id: KeyframeId,
    pub score: f64,
}

/// Ranking order: higher score first, then lower keyframe id.
pub(crate) fn rank_cmp(a: &ScoredHit, b: &ScoredHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.keyframe_id.cmp(&b.keyframe_id))
}

/// Heap entry whose `Ord` puts better hits higher.
#[derive(Debug, Clone, Copy)]
struct Ranked(ScoredHit);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp(&other.0, &self.0)
    }
}

/// Bounded top-k accumulator.
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Reverse<Ranked>>,
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    pub(crate) fn push(&mut self, hit: ScoredHit) {
        if self.heap.len() < self.k {
            self.heap.push(Reverse(Ranked(hit)));
        } else if let Some(Reverse(worst)) = self.heap.peek() {
            if rank_cmp(&hit, &worst.0) == Ordering::Less {
                self.heap.pop();
                self.heap.push(Reverse(Ranked(hit)));
            }
        }
    }

    pub(crate) fn merge(mut self, other: TopK) -> TopK {
        for Reverse(Ranked(hit)) in other.heap {
            self.push(hit);
        }
        self
    }

    pub(crate) fn into_sorted(self) -> Vec<ScoredHit> {
        let mut hits: Vec<ScoredHit> = self.heap.into_iter().map(|Reverse(Ranked(h))| h).collect();
        hits.sort_by(rank_cmp);
        hits
    }
}

/// Union of inclusive keyframe id ranges, typically the spans of the videos
/// a search is restricted to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpanFilter {
    ranges: Vec<(u64, u64)>,
}

impl SpanFilter {
    pub fn from_spans<'a, I: IntoIterator<Item = &'a VideoSpan>>(spans: I) -> Self {
        Self::from_ranges(spans.into_iter().map(|s| (s.s_v, s.e_v)))
    }

    pub fn from_ranges<I: IntoIterator<Item = (u64, u64)>>(ranges: I) -> Self {
        let mut ranges: Vec<(u64, u64)> = ranges.into_iter().filter(|(a, b)| a <= b).collect();
        ranges.sort_unstable();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(ranges.len());
        for (a, b) in ranges {
            match merged.last_mut() {
                Some(last) if a <= last.1.saturating_add(1) => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        SpanFilter { ranges: merged }
    }

    pub fn contains(&self, id: KeyframeId) -> bool {
        let pos = self.ranges.partition_point(|&(_, end)| end < id.0);
        self.ranges.get(pos).is_some_and(|&(start, _)| start <= id.0)
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn ranges(&self) -> &[(u64, u64)] {
        &self.ranges
    }
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Dense row-major store of unit vectors keyed by ascending keyframe id.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    ids: Vec<KeyframeId>,
    data: Vec<f32>,
}

impl VectorStore {
    /// Builds a store from raw vectors, normalizing each one.
    pub fn from_raw(dim: usize, mut rows: Vec<(KeyframeId, Vec<f32>)>) -> Result<Self, VectorIndexError> {
        rows.sort_by_key(|(id, _)| *id);
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, raw) in rows {
            if raw.len() != dim {
                return Err(VectorIndexError::DimensionMismatch {
                    expected: dim,
                    actual: raw.len(),
                });
            }
            if ids.last() == Some(&id) {
                return Err(VectorIndexError::DuplicateKeyframe(id));
            }
            let unit = normalize(&raw).map_err(|source| VectorIndexError::BadRow { id, source })?;
            ids.push(id);
            data.extend_from_slice(unit.as_slice());
        }
        Ok(VectorStore { dim, ids, data })
    }

    /// Builds a store from rows that must already be unit norm.
    pub fn from_unit_rows(dim: usize, rows: Vec<(KeyframeId, Vec<f32>)>) -> Result<Self, VectorIndexError> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in rows {
            if row.len() != dim {
                return Err(VectorIndexError::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if let Some(&prev) = ids.last() {
                if prev >= id {
                    return Err(VectorIndexError::DuplicateKeyframe(id));
                }
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(VectorIndexError::BadRow {
                    id,
                    source: EmbeddingError::NonFinite,
                });
            }
            let norm = dot(&row, &row).sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(VectorIndexError::NotUnitNorm { id, norm });
            }
            ids.push(id);
            data.extend_from_slice(&row);
        }
        Ok(VectorStore { dim, ids, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[KeyframeId] {
        &self.ids
    }

    pub fn row(&self, pos: usize) -> &[f32] {
        &self.data[pos * self.dim..(pos + 1) * self.dim]
    }

    fn position(&self, id: KeyframeId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    /// The stored unit vector for `id`.
    pub fn lookup(&self, id: KeyframeId) -> Result<EmbeddingVector, VectorIndexError> {
        let pos = self.position(id).ok_or(VectorIndexError::UnknownKeyframe(id))?;
        Ok(EmbeddingVector::from_unit_unchecked(self.row(pos).to_vec()))
    }

    fn check_query(&self, query: &[f32]) -> Result<(), VectorIndexError> {
        if query.len() != self.dim {
            return Err(VectorIndexError::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        Ok(())
    }

    /// Cosine score of `query` against every row, in keyframe id order.
    pub fn row_scores(&self, query: &[f32]) -> Result<Vec<f64>, VectorIndexError> {
        self.check_query(query)?;
        let mut out = vec![0.0; self.len()];
        self.fill_scores(query, &mut out);
        Ok(out)
    }

    #[cfg(feature = "parallel")]
    fn fill_scores(&self, query: &[f32], out: &mut [f64]) {
        use rayon::prelude::*;
        out.par_chunks_mut(DEFAULT_BLOCK_ROWS)
            .enumerate()
            .for_each(|(block, chunk)| {
                let base = block * DEFAULT_BLOCK_ROWS;
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = dot(self.row(base + i), query);
                }
            });
    }

    #[cfg(not(feature = "parallel"))]
    fn fill_scores(&self, query: &[f32], out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = dot(self.row(i), query);
        }
    }

    /// Exact top-k by cosine. Ties go to the lower keyframe id.
    pub fn search_topk(
        &self,
        query: &[f32],
        k: usize,
        filter: Option<&SpanFilter>,
        threshold: Option<f64>,
    ) -> Result<Vec<ScoredHit>, VectorIndexError> {
        self.search_topk_blocked(query, k, filter, threshold, DEFAULT_BLOCK_ROWS)
    }

    /// Single-threaded scan; the reference the partitioned scan must match.
    pub fn search_topk_serial(
        &self,
        query: &[f32],
        k: usize,
        filter: Option<&SpanFilter>,
        threshold: Option<f64>,
    ) -> Result<Vec<ScoredHit>, VectorIndexError> {
        self.validate_search(query, k)?;
        Ok(self.scan_block(query, k, filter, threshold, 0..self.len()).into_sorted())
    }

    /// Scan split into blocks of `block_rows`, each reduced to a partial
    /// top-k and merged. Runs blocks on the rayon pool when the `parallel`
    /// feature is on.
    pub fn search_topk_blocked(
        &self,
        query: &[f32],
        k: usize,
        filter: Option<&SpanFilter>,
        threshold: Option<f64>,
        block_rows: usize,
    ) -> Result<Vec<ScoredHit>, VectorIndexError> {
        self.validate_search(query, k)?;
        let block_rows = block_rows.max(1);
        let n_blocks = self.len().div_ceil(block_rows);
        let block = |b: usize| {
            let start = b * block_rows;
            let end = (start + block_rows).min(self.len());
            self.scan_block(query, k, filter, threshold, start..end)
        };
        #[cfg(feature = "parallel")]
        let top = {
            use rayon::prelude::*;
            (0..n_blocks)
                .into_par_iter()
                .map(block)
                .reduce(|| TopK::new(k), TopK::merge)
        };
        #[cfg(not(feature = "parallel"))]
        let top = (0..n_blocks).map(block).fold(TopK::new(k), TopK::merge);
        Ok(top.into_sorted())
    }

    fn validate_search(&self, query: &[f32], k: usize) -> Result<(), VectorIndexError> {
        if self.is_empty() {
            return Err(VectorIndexError::EmptyStore);
        }
        self.check_query(query)?;
        if k == 0 {
            return Err(VectorIndexError::InvalidK);
        }
        Ok(())
    }

    fn scan_block(
        &self,
        query: &[f32],
        k: usize,
        filter: Option<&SpanFilter>,
        threshold: Option<f64>,
        rows: std::ops::Range<usize>,
    ) -> TopK {
        let mut top = TopK::new(k);
        for pos in rows {
            let keyframe_id = self.ids[pos];
            if filter.is_some_and(|f| !f.contains(keyframe_id)) {
                continue;
            }
            let score = dot(self.row(pos), query);
            if threshold.is_some_and(|t| score < t) {
                continue;
            }
            top.push(ScoredHit { keyframe_id, score });
        }
        top
    }

    /// Image-to-image search anchored on a stored keyframe.
    pub fn search_by_keyframe(
        &self,
        anchor: KeyframeId,
        k: usize,
        filter: Option<&SpanFilter>,
        threshold: Option<f64>,
    ) -> Result<Vec<ScoredHit>, VectorIndexError> {
        let query = self.lookup(anchor)?;
        self.search_topk(&query, k, filter, threshold)
    }

    pub fn to_trke(&self) -> TrkeFile {
        TrkeFile {
            dim: self.dim as u32,
            records: self
                .ids
                .iter()
                .enumerate()
                .map(|(pos, &id)| (id, self.row(pos).to_vec()))
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), VectorIndexError> {
        let w = BufWriter::new(File::create(path).map_err(TrkeError::Io)?);
        trke::write(
            w,
            self.dim as u32,
            self.len() as u64,
            self.ids
                .iter()
                .enumerate()
                .map(|(pos, &id)| (id, self.row(pos))),
        )?;
        Ok(())
    }

    /// Loads a store written by [`VectorStore::save`]; rows must be unit norm
    /// and ids strictly ascending.
    pub fn load(path: &Path) -> Result<Self, VectorIndexError> {
        let r = BufReader::new(File::open(path).map_err(TrkeError::Io)?);
        let file = trke::read(r)?;
        Self::from_unit_rows(file.dim as usize, file.records)
    }
}
