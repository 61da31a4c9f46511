//! Top-k cosine retrieval over the edit memory.
//!
//! Memory is desk-scale, so retrieval is an exact linear scan: every entry
//! is scored and the best k are kept with a bounded heap. Ranking is total
//! and deterministic: higher similarity first, ties broken by lower
//! insertion step, then lower position in the entry list.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::embed::{embed_normalized, EmbeddingBackend};
use crate::error::Error;
use crate::memory::{Memory, MemoryEntry};

/// One scored retrieval result pointing into the memory's entry list.
#[derive(Debug, Clone, Copy)]
pub struct RetrievalCandidate<'a> {
    pub entry: &'a MemoryEntry,
    /// Index of `entry` in the memory's entry order; the final tie-breaker.
    pub position: usize,
    pub similarity: f64,
}

/// Dot product of two unit-norm vectors, which is their cosine similarity.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, Error> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), actual: v.len() });
    }
    Ok(u.iter().zip(v).map(|(a, b)| a * b).sum())
}

/// Embeds the query and returns the `min(k, entries)` best-ranked entries.
pub fn retrieve_topk<'a>(
    query: &str,
    memory: &'a Memory,
    embedder: &dyn EmbeddingBackend,
    k: usize,
) -> Result<Vec<RetrievalCandidate<'a>>, Error> {
    if k == 0 {
        return Err(Error::InvalidInput("retrieval depth k must be at least 1".into()));
    }
    if memory.is_empty() {
        return Ok(Vec::new());
    }
    let query_embedding = embed_normalized(embedder, query)?;
    retrieve_topk_embedded(&query_embedding, memory, k)
}

/// Top-k retrieval for an already-embedded, unit-norm query vector.
pub fn retrieve_topk_embedded<'a>(
    query_embedding: &[f64],
    memory: &'a Memory,
    k: usize,
) -> Result<Vec<RetrievalCandidate<'a>>, Error> {
    if k == 0 {
        return Err(Error::InvalidInput("retrieval depth k must be at least 1".into()));
    }
    if memory.is_empty() {
        return Ok(Vec::new());
    }
    if query_embedding.len() != memory.dimension() {
        return Err(Error::DimensionMismatch {
            expected: memory.dimension(),
            actual: query_embedding.len(),
        });
    }

    let mut kept: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
    for (position, entry) in memory.entries().iter().enumerate() {
        let similarity = cosine_similarity(query_embedding, &entry.embedding)?;
        let ranked = Ranked { similarity, step: entry.step, position };
        if kept.len() < k {
            kept.push(ranked);
        } else if let Some(worst) = kept.peek() {
            if rank_order(&ranked, worst) == Ordering::Less {
                kept.pop();
                kept.push(ranked);
            }
        }
    }

    let mut ranked: Vec<Ranked> = kept.into_vec();
    ranked.sort_by(rank_order);
    Ok(ranked
        .into_iter()
        .map(|r| RetrievalCandidate {
            entry: &memory.entries()[r.position],
            position: r.position,
            similarity: r.similarity,
        })
        .collect())
}

/// Total ranking order: `Less` means "ranks earlier in the results".
fn rank_order(a: &Ranked, b: &Ranked) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.step.cmp(&b.step))
        .then_with(|| a.position.cmp(&b.position))
}

#[derive(Debug, Clone, Copy)]
struct Ranked {
    similarity: f64,
    step: u64,
    position: usize,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        rank_order(self, other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    // The heap must pop its worst-ranked element. `rank_order` returns
    // `Greater` for the later-ranked element, so it is the heap order as is:
    // the max-heap's greatest element is the worst-ranked candidate.
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(self, other)
    }
}
