//! Transport-independent request handling. The HTTP router and the CLI both
//! call into [`Service`], so their bodies agree byte for byte.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use trake_core::dante::{dante_rank, DanteParams, DEFAULT_LAMBDA};
use trake_core::embedding::{embed_text, normalize, EmbeddingVector, ProviderConfig};
use trake_core::quest::{
    rewrite_query, DictionaryRewriter, ExemplarPayload, ExemplarStore, FixtureRewriter, RewriteRequest,
    RewriteResult, Rewriter,
};
use trake_core::vector_index::ScoredHit;
use trake_core::{KeyframeId, TrakeIndex};

use crate::api::*;

pub const DEFAULT_PLAYER_BASE: &str = "https://www.youtube.com/watch";

/// Where query rewrites come from. The remote endpoint wins over the
/// fixture file; with neither, every rewrite falls back to the original.
#[derive(Debug, Clone, Default)]
pub struct RewriterSettings {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub fixture: Option<PathBuf>,
}

impl RewriterSettings {
    pub fn build(&self) -> Result<Arc<dyn Rewriter>, String> {
        if let Some(endpoint) = &self.endpoint {
            return remote(endpoint, self);
        }
        if let Some(path) = &self.fixture {
            return Ok(Arc::new(FixtureRewriter::load(path).map_err(|e| e.to_string())?));
        }
        Ok(Arc::new(DictionaryRewriter::default()))
    }
}

#[cfg(feature = "remote-rewriter")]
fn remote(endpoint: &str, settings: &RewriterSettings) -> Result<Arc<dyn Rewriter>, String> {
    use trake_core::quest::{HttpRewriter, HttpRewriterConfig};
    let mut config = HttpRewriterConfig::new(endpoint);
    config.api_key = settings.api_key.clone();
    if let Some(model) = &settings.model {
        config.model = model.clone();
    }
    Ok(Arc::new(HttpRewriter::new(config)))
}

#[cfg(not(feature = "remote-rewriter"))]
fn remote(_: &str, _: &RewriterSettings) -> Result<Arc<dyn Rewriter>, String> {
    Err("this build has no remote rewriter client".into())
}

pub struct Service {
    index: TrakeIndex,
    embedder: ProviderConfig,
    rewriter: Arc<dyn Rewriter>,
    exemplars: ExemplarStore,
    player_base: String,
}

fn check_top_k(k: usize) -> Result<(), ApiError> {
    if (1..=MAX_TOP_K).contains(&k) {
        Ok(())
    } else {
        Err(ApiError::new(
            ErrorCode::InvalidTopK,
            format!("top_k must lie in [1, {MAX_TOP_K}], got {k}"),
        ))
    }
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

impl Service {
    pub fn new(index: TrakeIndex, rewriter: Arc<dyn Rewriter>) -> Self {
        let embedder = ProviderConfig::toy(index.dim());
        Service {
            index,
            embedder,
            rewriter,
            exemplars: ExemplarStore::new(embedder),
            player_base: DEFAULT_PLAYER_BASE.into(),
        }
    }

    pub fn with_player_base(mut self, base: impl Into<String>) -> Self {
        self.player_base = base.into();
        self
    }

    pub fn index(&self) -> &TrakeIndex {
        &self.index
    }

    fn hydrate_hits(&self, hits: &[ScoredHit]) -> Result<Vec<Hit>, ApiError> {
        let ids: Vec<KeyframeId> = hits.iter().map(|h| h.keyframe_id).collect();
        Ok(self
            .index
            .hydrate(&ids)
            .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
            .into_iter()
            .zip(hits)
            .map(|(keyframe, h)| Hit::Keyframe(KeyframeHit { keyframe, score: h.score }))
            .collect())
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ApiError> {
        Ok(embed_text(text, &self.embedder)?)
    }

    fn enhanced(&self, query: &str) -> Result<RewriteResult, ApiError> {
        self.rewrite(&RewriteRequest {
            original_query: query.to_owned(),
            context_hint: None,
        })
    }

    pub fn semantic(&self, req: &SemanticRequest) -> Result<SearchResponse, ApiError> {
        let start = Instant::now();
        let sources =
            req.query.is_some() as usize + req.keyframe_id.is_some() as usize + req.exemplar_id.is_some() as usize;
        if sources != 1 {
            return Err(ApiError::invalid(
                "exactly one of query, keyframe_id and exemplar_id must be set",
            ));
        }
        check_top_k(req.top_k)?;
        if req.threshold.is_some_and(|t| !t.is_finite()) {
            return Err(ApiError::invalid("threshold must be a finite number"));
        }
        let filter = self
            .index
            .filter(req.video_filter.as_deref(), req.group_filter.as_deref())?;
        let vectors = &self.index.vectors;
        let mut rewrite = None;
        let hits = if let Some(query) = &req.query {
            let text = if req.enhance {
                let r = self.enhanced(query)?;
                let text = r.rewritten_query.clone();
                rewrite = Some(RewriteEcho::One(r));
                text
            } else {
                query.clone()
            };
            let v = self.embed(&text)?;
            vectors.search_topk(&v, req.top_k, filter.as_ref(), req.threshold)?
        } else if let Some(id) = req.keyframe_id {
            vectors.search_by_keyframe(KeyframeId(id), req.top_k, filter.as_ref(), req.threshold)?
        } else {
            let id = req.exemplar_id.as_deref().unwrap_or_default();
            self.exemplars
                .search_with_exemplar(vectors, id, req.top_k, filter.as_ref(), req.threshold)?
        };
        Ok(SearchResponse {
            mode: SearchMode::Semantic,
            hits: self.hydrate_hits(&hits)?,
            took_ms: elapsed_ms(start),
            rewrite,
        })
    }

    pub fn ocr(&self, req: &OcrRequest) -> Result<SearchResponse, ApiError> {
        let start = Instant::now();
        check_top_k(req.top_k)?;
        let filter = self
            .index
            .filter(req.video_filter.as_deref(), req.group_filter.as_deref())?;
        let hits = self.index.text.ocr_search(&req.query, req.top_k, filter.as_ref())?;
        Ok(SearchResponse {
            mode: SearchMode::Ocr,
            hits: self.hydrate_hits(&hits)?,
            took_ms: elapsed_ms(start),
            rewrite: None,
        })
    }

    pub fn dante(&self, req: &DanteRequest) -> Result<SearchResponse, ApiError> {
        let start = Instant::now();
        let n = req.queries.len();
        if !(1..=MAX_DANTE_QUERIES).contains(&n) {
            return Err(ApiError::new(
                ErrorCode::InvalidQueryCount,
                format!("between 1 and {MAX_DANTE_QUERIES} event queries are required, got {n}"),
            ));
        }
        check_top_k(req.top_k)?;
        let params = DanteParams::new(req.lambda.unwrap_or(DEFAULT_LAMBDA), req.top_k)?;
        let spans = self
            .index
            .select_spans(req.video_filter.as_deref(), req.group_filter.as_deref())?;

        let mut rewrites = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        for (i, q) in req.queries.iter().enumerate() {
            match q {
                EventQuery::Text(text) => {
                    let text = if req.enhance {
                        let r = self.enhanced(text)?;
                        let t = r.rewritten_query.clone();
                        rewrites.push(Some(r));
                        t
                    } else {
                        text.clone()
                    };
                    events.push(self.embed(&text).map_err(|e| ApiError {
                        message: format!("query {i}: {}", e.message),
                        ..e
                    })?);
                }
                EventQuery::Vector(v) => {
                    if v.len() != self.index.dim() {
                        return Err(ApiError::new(
                            ErrorCode::DimensionMismatch,
                            format!("query {i} has dimension {}, index has {}", v.len(), self.index.dim()),
                        ));
                    }
                    rewrites.push(None);
                    events.push(normalize(v)?);
                }
            }
        }

        let ranked = dante_rank(&self.index.vectors, &spans, &events, &params)?;
        let mut hits = Vec::with_capacity(ranked.len());
        for r in ranked {
            hits.push(Hit::Video(VideoHit {
                path: self
                    .index
                    .hydrate(&r.path)
                    .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?,
                video_id: r.video_id,
                score: r.score,
            }));
        }
        Ok(SearchResponse {
            mode: SearchMode::Dante,
            hits,
            took_ms: elapsed_ms(start),
            rewrite: req.enhance.then_some(RewriteEcho::Many(rewrites)),
        })
    }

    /// Always succeeds for a non-empty query; provider failures come back
    /// as the original query with `used_fallback` set.
    pub fn rewrite(&self, req: &RewriteRequest) -> Result<RewriteResult, ApiError> {
        Ok(rewrite_query(req, self.rewriter.as_ref())?)
    }

    pub fn ingest_exemplar(&self, req: &ExemplarRequest) -> Result<ExemplarResponse, ApiError> {
        let payload = match (&req.vector, &req.descriptor) {
            (Some(v), None) => ExemplarPayload::Vector(v.clone()),
            (None, Some(d)) => ExemplarPayload::Descriptor(d.clone()),
            _ => return Err(ApiError::invalid("exactly one of vector and descriptor must be set")),
        };
        let record = self.exemplars.ingest_exemplar(payload, &req.source_note)?;
        Ok(ExemplarResponse {
            exemplar_id: record.exemplar_id,
            source_note: record.source_note,
            dim: record.vector.dim(),
        })
    }

    pub fn detail(&self, id: KeyframeId) -> Result<KeyframeDetail, ApiError> {
        let keyframe = self
            .index
            .hydrate(&[id])
            .map_err(|_| ApiError::new(ErrorCode::UnknownKeyframe, format!("unknown keyframe {id}")))?
            .remove(0);
        let (prev, next) = self.index.catalog.neighbors(id)?;
        let player_url = format!(
            "{}?v={}&t={}",
            self.player_base,
            keyframe.record.video_id,
            keyframe.record.timestamp_s.floor() as u64
        );
        Ok(KeyframeDetail {
            keyframe,
            prev_keyframe_id: prev,
            next_keyframe_id: next,
            player_url,
        })
    }

    pub fn videos(&self) -> Vec<VideoSummary> {
        let catalog = &self.index.catalog;
        catalog
            .spans()
            .iter()
            .map(|span| VideoSummary {
                video_id: span.video_id.clone(),
                group: catalog.group_of(&span.video_id).map(str::to_owned),
                first_keyframe_id: span.first(),
                last_keyframe_id: span.last(),
                keyframes: span.len(),
                fps: catalog.get(span.first()).map_or(0.0, |r| r.fps),
            })
            .collect()
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            videos: self.index.catalog.spans().len(),
            keyframes: self.index.catalog.len(),
            dim: self.index.dim(),
            exemplars: self.exemplars.len(),
        }
    }
}
