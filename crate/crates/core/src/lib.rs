//! Known-item video retrieval over a keyframe catalog.
//!
//! Every store in this crate joins through a single global keyframe index
//! `t ∈ [1, T]`. Videos own contiguous spans of that index space, which is
//! what lets [`dante`] run its alignment per video without ever crossing a
//! video boundary.
//!
//! The main pieces:
//!
//! - [`catalog`]: keyframe records, video spans, hydration.
//! - [`ingest`]: scene lists, embedding files and OCR dumps into a frozen [`index::TrakeIndex`].
//! - [`embedding`]: unit vectors and the deterministic trigram-hash embedder.
//! - [`vector_index`]: exact cosine top-k over all keyframes.
//! - [`text_index`]: BM25 keyword search over OCR text.
//! - [`dante`]: ordered multi-event alignment with a temporal distance penalty.
//! - [`quest`]: query rewriting and exemplar-based image search.
//! - [`verify`]: seeded cross-checks of the fast paths against brute-force oracles.

pub mod catalog;
pub mod dante;
pub mod embedding;
pub mod index;
pub mod ingest;
pub mod quest;
pub mod synthetic;
pub mod text_index;
pub mod trke;
pub mod vector_index;
pub mod verify;

pub use catalog::{Catalog, CatalogError, KeyframeId, KeyframeRecord, VideoSpan};
pub use dante::{AlignmentResult, DanteError, DanteParams, SimilarityMatrix};
pub use embedding::{EmbeddingError, EmbeddingVector, ProviderConfig, ProviderKind};
pub use index::{Hydrated, IndexError, TrakeIndex};
pub use ingest::{IngestError, IngestManifest, SceneRange};
pub use text_index::{TextIndex, TextIndexError};
pub use vector_index::{ScoredHit, SpanFilter, VectorIndexError, VectorStore};
