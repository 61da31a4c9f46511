//! Embedding backends and vector hygiene.
//!
//! Memory stores unit-norm vectors only, so cosine similarity reduces to a
//! dot product at query time. The bundled n-gram embedder exists so the
//! whole engine runs offline: it is deterministic, and texts that share
//! wording land near each other, which is all retrieval tests need.

use crate::error::Error;

/// A text-to-vector encoder with a fixed output dimension.
pub trait EmbeddingBackend: Send + Sync {
    /// Label recorded in snapshots so a memory is never reloaded under a
    /// different encoder than the one that produced it.
    fn name(&self) -> &str;

    /// Output dimension; every returned vector must have this length.
    fn dimension(&self) -> usize;

    /// Encodes one text. The result need not be normalized; callers go
    /// through [`embed_normalized`].
    fn embed(&self, text: &str) -> Result<Vec<f64>, Error>;
}

/// Embeds a text and scales the result to unit L2 norm, verifying the
/// backend honored its declared dimension.
pub fn embed_normalized(embedder: &dyn EmbeddingBackend, text: &str) -> Result<Vec<f64>, Error> {
    let mut vector = embedder.embed(text)?;
    if vector.len() != embedder.dimension() {
        return Err(Error::DimensionMismatch {
            expected: embedder.dimension(),
            actual: vector.len(),
        });
    }
    l2_normalize(&mut vector)?;
    Ok(vector)
}

/// Scales a vector to unit L2 norm in place. Zero and non-finite vectors
/// cannot be normalized and are rejected.
pub fn l2_normalize(vector: &mut [f64]) -> Result<(), Error> {
    let norm_squared: f64 = vector.iter().map(|x| x * x).sum();
    if !norm_squared.is_finite() {
        return Err(Error::Embedding("vector has non-finite components".into()));
    }
    if norm_squared == 0.0 {
        return Err(Error::Embedding("cannot normalize a zero vector".into()));
    }
    let norm = norm_squared.sqrt();
    for x in vector.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

/// Deterministic offline embedder: counts character 3-grams of the
/// lowercased text, hashed into a fixed number of buckets, then normalizes.
/// Texts with overlapping wording share buckets and therefore score higher
/// cosine similarity than unrelated texts.
#[derive(Debug, Clone)]
pub struct NgramEmbedder {
    dimension: usize,
    name: String,
}

impl NgramEmbedder {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize) -> Result<Self, Error> {
        if dimension == 0 {
            return Err(Error::InvalidInput("embedder dimension must be positive".into()));
        }
        Ok(NgramEmbedder { dimension, name: format!("ngram-{dimension}") })
    }
}

impl Default for NgramEmbedder {
    fn default() -> Self {
        NgramEmbedder::new(Self::DEFAULT_DIMENSION).expect("default dimension is positive")
    }
}

impl EmbeddingBackend for NgramEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, Error> {
        let lowered = text.to_lowercase();
        let chars: Vec<char> = lowered.chars().collect();
        if chars.is_empty() {
            return Err(Error::Embedding("cannot embed empty text".into()));
        }
        let mut counts = vec![0.0_f64; self.dimension];
        let mut bump = |gram: &str| {
            let bucket = (fnv1a64(gram.as_bytes()) % self.dimension as u64) as usize;
            counts[bucket] += 1.0;
        };
        if chars.len() < 3 {
            bump(&lowered);
        } else {
            let mut gram = String::with_capacity(12);
            for window in chars.windows(3) {
                gram.clear();
                gram.extend(window);
                bump(&gram);
            }
        }
        l2_normalize(&mut counts)?;
        Ok(counts)
    }
}

/// FNV-1a 64-bit hash. Hand-rolled so bucket assignment (and therefore
/// every stored embedding) is stable across platforms and releases.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &byte in bytes {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn ngram_embeddings_are_deterministic_and_unit_norm() {
        let embedder = NgramEmbedder::default();
        let a = embedder.embed("What year was JS 7.62 made?").unwrap();
        let b = embedder.embed("What year was JS 7.62 made?").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 256);
        let norm: f64 = dot(&a, &a);
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ngram_embeddings_ignore_case() {
        let embedder = NgramEmbedder::default();
        assert_eq!(embedder.embed("Alpha Beta").unwrap(), embedder.embed("ALPHA BETA").unwrap());
    }

    #[test]
    fn overlapping_texts_score_higher_than_unrelated_ones() {
        let embedder = NgramEmbedder::default();
        let query = embedder.embed("what year was js 7.62 made?").unwrap();
        let related = embedder.embed("what year was js 7.62 made? 1963").unwrap();
        let unrelated = embedder.embed("the capital city of Freedonia").unwrap();
        assert!(dot(&query, &related) > dot(&query, &unrelated));
    }

    #[test]
    fn short_texts_embed_as_a_single_gram() {
        let embedder = NgramEmbedder::new(16).unwrap();
        let vector = embedder.embed("ab").unwrap();
        assert_eq!(vector.iter().filter(|x| **x != 0.0).count(), 1);
    }

    #[test]
    fn empty_text_and_zero_dimension_are_rejected() {
        assert!(NgramEmbedder::new(0).is_err());
        let embedder = NgramEmbedder::default();
        assert!(matches!(embedder.embed(""), Err(Error::Embedding(_))));
    }

    #[test]
    fn normalize_rejects_zero_and_non_finite_vectors() {
        let mut zero = vec![0.0, 0.0];
        assert!(l2_normalize(&mut zero).is_err());
        let mut inf = vec![1.0, f64::INFINITY];
        assert!(l2_normalize(&mut inf).is_err());
        let mut ok = vec![3.0, 4.0];
        l2_normalize(&mut ok).unwrap();
        assert_eq!(ok, vec![0.6, 0.8]);
    }

    #[test]
    fn embed_normalized_checks_the_declared_dimension() {
        struct Lying;
        impl EmbeddingBackend for Lying {
            fn name(&self) -> &str {
                "lying"
            }
            fn dimension(&self) -> usize {
                4
            }
            fn embed(&self, _text: &str) -> Result<Vec<f64>, Error> {
                Ok(vec![1.0, 2.0])
            }
        }
        let err = embed_normalized(&Lying, "text").unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 4, actual: 2 }));
    }
}
