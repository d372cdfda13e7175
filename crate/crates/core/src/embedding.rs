//! Unit-norm embeddings and the deterministic trigram-hash text embedder.
//!
//! The hash embedder stands in for a real multimodal encoder. It lowercases
//! its input, hashes every 3-character window with 64-bit FNV-1a, and adds a
//! signed vote to bucket `hash mod d`. Text queries and synthetic image
//! descriptors go through the same function, so a query equal to a
//! descriptor lands at cosine 1.

use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIM: usize = 64;

const FNV_OFFSET: u64 = 14695981039346656037;
const FNV_PRIME: u64 = 1099511628211;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("empty input")]
    EmptyInput,
    #[error("embedding dimension must be at least 2, got {0}")]
    InvalidDim(usize),
    #[error("expected dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("operation not supported by a {0:?} provider")]
    WrongProvider(ProviderKind),
}

/// An L2-normalized vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    /// Wraps a vector already known to be unit norm (e.g. a row read back
    /// from a store that normalized on ingest).
    pub(crate) fn from_unit_unchecked(values: Vec<f32>) -> Self {
        EmbeddingVector(values)
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }
}

impl Deref for EmbeddingVector {
    type Target = [f32];
    fn deref(&self) -> &[f32] {
        &self.0
    }
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Returns `v / ‖v‖₂`.
pub fn normalize(v: &[f32]) -> Result<EmbeddingVector, EmbeddingError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    let norm = l2_norm(v);
    if norm == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(EmbeddingVector(
        v.iter().map(|&x| (x as f64 / norm) as f32).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    PrecomputedLookup,
    ToyHash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub dim: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::ToyHash,
            dim: DEFAULT_DIM,
        }
    }
}

impl ProviderConfig {
    pub fn toy(dim: usize) -> Self {
        ProviderConfig {
            kind: ProviderKind::ToyHash,
            dim,
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dim < 2 {
            return Err(EmbeddingError::InvalidDim(self.dim));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Signed trigram-hash bag, before normalization.
///
/// Inputs shorter than three characters hash as a single window.
pub fn trigram_counts(input: &str, dim: usize) -> Vec<f32> {
    let lowered = input.trim().to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut acc = vec![0i64; dim];
    let mut vote = |window: &[char]| {
        let s: String = window.iter().collect();
        let h = fnv1a64(s.as_bytes());
        let bucket = (h % dim as u64) as usize;
        acc[bucket] += if h >> 63 == 0 { 1 } else { -1 };
    };
    if chars.len() < 3 {
        vote(&chars);
    } else {
        chars.windows(3).for_each(vote);
    }
    acc.into_iter().map(|c| c as f32).collect()
}

pub fn embed_text(input: &str, cfg: &ProviderConfig) -> Result<EmbeddingVector, EmbeddingError> {
    cfg.validate()?;
    if cfg.kind != ProviderKind::ToyHash {
        return Err(EmbeddingError::WrongProvider(cfg.kind));
    }
    if input.trim().is_empty() {
        return Err(EmbeddingError::EmptyInput);
    }
    normalize(&trigram_counts(input, cfg.dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let v = normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-7 && (v[1] - 0.8).abs() < 1e-7);
        let u = normalize(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(u.as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(normalize(&[0.0, 0.0]), Err(EmbeddingError::ZeroVector));
        assert_eq!(normalize(&[f32::NAN, 1.0]), Err(EmbeddingError::NonFinite));
    }

    /// Straight-line reference: every step written out, no shared helpers.
    fn reference_embed(input: &str, d: usize) -> Vec<f64> {
        let text: Vec<char> = input.trim().to_lowercase().chars().collect();
        let mut buckets = vec![0.0f64; d];
        let mut i = 0;
        while i + 3 <= text.len() {
            let mut buf = [0u8; 16];
            let mut bytes = Vec::new();
            for c in &text[i..i + 3] {
                bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
            let mut h: u64 = 0xcbf29ce484222325;
            for b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            let sign = if h & 0x8000_0000_0000_0000 == 0 { 1.0 } else { -1.0 };
            buckets[(h % d as u64) as usize] += sign;
            i += 1;
        }
        let n = buckets.iter().map(|x| x * x).sum::<f64>().sqrt();
        buckets.iter().map(|x| x / n).collect()
    }

    #[test]
    fn fnv_known_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn abc_matches_reference() {
        let cfg = ProviderConfig::toy(64);
        let v = embed_text("abc", &cfg).unwrap();
        let r = reference_embed("abc", 64);
        // a single trigram puts ±1 into exactly one bucket
        let h = 0xcbf29ce484222325u64;
        let h = b"abc".iter().fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x100000001b3));
        let bucket = (h % 64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        assert_eq!(v[bucket], sign);
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
        for (a, b) in v.iter().zip(&r) {
            assert_eq!(*a as f64, *b);
        }
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn embed_is_deterministic_and_case_folded() {
        let cfg = ProviderConfig::default();
        let a = embed_text("Ba tầng bánh kem trắng", &cfg).unwrap();
        let b = embed_text("ba tầng bánh kem trắng", &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, embed_text("Ba tầng bánh kem trắng", &cfg).unwrap());
        let r = reference_embed("Ba tầng bánh kem trắng", 64);
        for (x, y) in a.iter().zip(&r) {
            assert!((*x as f64 - y).abs() < 1e-7);
        }
    }

    #[test]
    fn embed_errors() {
        let cfg = ProviderConfig::default();
        assert_eq!(embed_text("   ", &cfg), Err(EmbeddingError::EmptyInput));
        assert_eq!(
            embed_text("abc", &ProviderConfig::toy(1)),
            Err(EmbeddingError::InvalidDim(1))
        );
        let lookup = ProviderConfig { kind: ProviderKind::PrecomputedLookup, dim: 64 };
        assert!(matches!(embed_text("abc", &lookup), Err(EmbeddingError::WrongProvider(_))));
        // short inputs fall back to one window
        assert!(embed_text("ab", &cfg).is_ok());
    }

    #[test]
    fn cancellation_is_reported() {
        // Two trigrams landing in the same bucket with opposite signs.
        let cfg = ProviderConfig::toy(2);
        let cancelling = ('a'..='z')
            .flat_map(|x| ('a'..='z').map(move |y| format!("q{x}{y}q")))
            .find(|s| trigram_counts(s, 2).iter().all(|&c| c == 0.0))
            .expect("some 4-letter string cancels at d=2");
        assert_eq!(embed_text(&cancelling, &cfg), Err(EmbeddingError::ZeroVector));
    }

    proptest! {
        #[test]
        fn scale_invariance(v in prop::collection::vec(-10.0f32..10.0, 2..32), c in 0.01f32..100.0) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let a = normalize(&v).unwrap();
            let scaled: Vec<f32> = v.iter().map(|x| x * c).collect();
            let b = normalize(&scaled).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-5);
            }
            prop_assert!((a.norm() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn embedded_text_is_unit(s in "\\PC{1,40}") {
            if let Ok(v) = embed_text(&s, &ProviderConfig::default()) {
                prop_assert!((v.norm() - 1.0).abs() < 1e-6);
            }
        }
    }
}
