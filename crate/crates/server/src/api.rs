//! Request and response bodies of the JSON API, and the error contract.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use trake_core::catalog::CatalogError;
use trake_core::dante::DanteError;
use trake_core::embedding::EmbeddingError;
use trake_core::quest::{QuestError, RewriteResult};
use trake_core::text_index::TextIndexError;
use trake_core::vector_index::VectorIndexError;
use trake_core::{Hydrated, KeyframeId};

pub const MAX_TOP_K: usize = 1000;
pub const MAX_DANTE_QUERIES: usize = 16;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyframe_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_id: Option<String>,
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_filter: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_filter: Option<Vec<String>>,
    #[serde(default)]
    pub enhance: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrRequest {
    pub query: String,
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_filter: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_filter: Option<Vec<String>>,
}

/// One event of a multi-event query: free text or a raw embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventQuery {
    Text(String),
    Vector(Vec<f32>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DanteRequest {
    pub queries: Vec<EventQuery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_filter: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_filter: Option<Vec<String>>,
    #[serde(default)]
    pub enhance: bool,
}

/// Exactly one of `vector` and `descriptor`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExemplarRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<String>,
    #[serde(default)]
    pub source_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarResponse {
    pub exemplar_id: String,
    pub source_note: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Semantic,
    Ocr,
    Dante,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeHit {
    #[serde(flatten)]
    pub keyframe: Hydrated,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoHit {
    pub video_id: String,
    pub score: f64,
    /// One keyframe per event, in event order.
    pub path: Vec<Hydrated>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Hit {
    Video(VideoHit),
    Keyframe(KeyframeHit),
}

impl Hit {
    pub fn score(&self) -> f64 {
        match self {
            Hit::Video(v) => v.score,
            Hit::Keyframe(k) => k.score,
        }
    }

    pub fn as_keyframe(&self) -> Option<&KeyframeHit> {
        match self {
            Hit::Keyframe(k) => Some(k),
            Hit::Video(_) => None,
        }
    }

    pub fn as_video(&self) -> Option<&VideoHit> {
        match self {
            Hit::Video(v) => Some(v),
            Hit::Keyframe(_) => None,
        }
    }
}

/// Rewrites applied when `enhance` was set, one per text query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewriteEcho {
    One(RewriteResult),
    Many(Vec<Option<RewriteResult>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub mode: SearchMode,
    pub hits: Vec<Hit>,
    pub took_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewrite: Option<RewriteEcho>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeDetail {
    #[serde(flatten)]
    pub keyframe: Hydrated,
    pub prev_keyframe_id: Option<KeyframeId>,
    pub next_keyframe_id: Option<KeyframeId>,
    pub player_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub first_keyframe_id: KeyframeId,
    pub last_keyframe_id: KeyframeId,
    pub keyframes: usize,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub videos: usize,
    pub keyframes: usize,
    pub dim: usize,
    pub exemplars: usize,
}

/// Closed set of error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    InvalidRequest,
    InvalidTopK,
    InvalidLambda,
    InvalidQueryCount,
    EmptyQuery,
    EmptyPayload,
    UnknownKeyframe,
    UnknownExemplar,
    UnknownVideo,
    UnknownGroup,
    NoFeasibleVideo,
    DimensionMismatch,
    RouteNotFound,
    Internal,
}

impl ErrorCode {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::UnknownKeyframe
            | ErrorCode::UnknownExemplar
            | ErrorCode::UnknownVideo
            | ErrorCode::UnknownGroup
            | ErrorCode::NoFeasibleVideo
            | ErrorCode::RouteNotFound => 404,
            ErrorCode::DimensionMismatch => 422,
            ErrorCode::Internal => 500,
            _ => 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub http_status: u16,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            http_status: code.http_status(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::InvalidRequest, message)
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        let code = match &e {
            CatalogError::UnknownKeyframe(_) => ErrorCode::UnknownKeyframe,
            CatalogError::UnknownVideo(_) => ErrorCode::UnknownVideo,
            CatalogError::UnknownGroup(_) => ErrorCode::UnknownGroup,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<EmbeddingError> for ApiError {
    fn from(e: EmbeddingError) -> Self {
        ApiError::new(embedding_code(&e), e.to_string())
    }
}

fn embedding_code(e: &EmbeddingError) -> ErrorCode {
    match e {
        EmbeddingError::EmptyInput => ErrorCode::EmptyQuery,
        EmbeddingError::DimensionMismatch { .. } => ErrorCode::DimensionMismatch,
        EmbeddingError::ZeroVector | EmbeddingError::NonFinite => ErrorCode::InvalidRequest,
        _ => ErrorCode::Internal,
    }
}

impl From<VectorIndexError> for ApiError {
    fn from(e: VectorIndexError) -> Self {
        ApiError::new(vector_code(&e), e.to_string())
    }
}

impl From<TextIndexError> for ApiError {
    fn from(e: TextIndexError) -> Self {
        let code = match &e {
            TextIndexError::EmptyQuery => ErrorCode::EmptyQuery,
            TextIndexError::InvalidK => ErrorCode::InvalidTopK,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<DanteError> for ApiError {
    fn from(e: DanteError) -> Self {
        let code = match &e {
            DanteError::InvalidLambda(_) => ErrorCode::InvalidLambda,
            DanteError::InvalidTopK => ErrorCode::InvalidTopK,
            DanteError::NoEvents => ErrorCode::InvalidQueryCount,
            DanteError::NoFeasibleVideo(_) => ErrorCode::NoFeasibleVideo,
            DanteError::Vector(inner) => vector_code(inner),
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<QuestError> for ApiError {
    fn from(e: QuestError) -> Self {
        let code = match &e {
            QuestError::EmptyQuery => ErrorCode::EmptyQuery,
            QuestError::UnknownExemplar(_) => ErrorCode::UnknownExemplar,
            QuestError::DimensionMismatch { .. } => ErrorCode::DimensionMismatch,
            QuestError::EmptyPayload => ErrorCode::EmptyPayload,
            QuestError::Embedding(inner) => embedding_code(inner),
            QuestError::Vector(inner) => vector_code(inner),
            QuestError::Fixture(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

fn vector_code(e: &VectorIndexError) -> ErrorCode {
    match e {
        VectorIndexError::DimensionMismatch { .. } => ErrorCode::DimensionMismatch,
        VectorIndexError::UnknownKeyframe(_) => ErrorCode::UnknownKeyframe,
        VectorIndexError::InvalidK => ErrorCode::InvalidTopK,
        _ => ErrorCode::Internal,
    }
}
