//! Query enhancement for out-of-knowledge queries.
//!
//! Two independent branches:
//!
//! 1. Rewriting: a [`Rewriter`] turns the user's query into a more visual
//!    description. If the rewriter fails for any reason the original query
//!    is used and the result says so; enhancement never blocks retrieval.
//! 2. Exemplars: an externally chosen image (supplied as a vector, or as a
//!    descriptor string embedded with the hash embedder) is stored and used
//!    as the query for image-to-image search.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{embed_text, normalize, EmbeddingError, EmbeddingVector, ProviderConfig};
use crate::text_index::tokenize;
use crate::vector_index::{ScoredHit, SpanFilter, VectorIndexError, VectorStore};

#[derive(Debug, Error)]
pub enum QuestError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("unknown exemplar `{0}`")]
    UnknownExemplar(String),
    #[error("exemplar has dimension {actual}, store has {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("exemplar payload is empty")]
    EmptyPayload,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Vector(#[from] VectorIndexError),
    #[error("fixture file: {0}")]
    Fixture(String),
}

/// Why a rewriter produced nothing usable.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewriteError {
    #[error("rewriter timed out")]
    Timeout,
    #[error("rewriter rejected credentials: {0}")]
    Auth(String),
    #[error("rewriter unreachable: {0}")]
    Network(String),
    #[error("rewriter returned an unusable response: {0}")]
    BadResponse(String),
    #[error("no rewrite available for this query")]
    NoRewrite,
}

pub trait Rewriter: Send + Sync {
    /// Short provider name echoed in results.
    fn label(&self) -> &str;

    fn rewrite(&self, query: &str, hint: Option<&str>) -> Result<String, RewriteError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRequest {
    pub original_query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub rewritten_query: String,
    pub used_fallback: bool,
    pub provider: String,
}

pub fn rewrite_query(req: &RewriteRequest, provider: &dyn Rewriter) -> Result<RewriteResult, QuestError> {
    let original = req.original_query.trim();
    if original.is_empty() {
        return Err(QuestError::EmptyQuery);
    }
    let outcome = provider
        .rewrite(original, req.context_hint.as_deref())
        .and_then(|text| {
            let text = text.trim();
            if text.is_empty() {
                Err(RewriteError::BadResponse("empty rewrite".into()))
            } else {
                Ok(text.to_owned())
            }
        });
    Ok(match outcome {
        Ok(rewritten_query) => RewriteResult {
            rewritten_query,
            used_fallback: false,
            provider: provider.label().to_owned(),
        },
        Err(_) => RewriteResult {
            rewritten_query: original.to_owned(),
            used_fallback: true,
            provider: provider.label().to_owned(),
        },
    })
}

/// Replays recorded rewrites from a JSON object `{ query: rewrite }`.
#[derive(Debug, Clone, Default)]
pub struct FixtureRewriter {
    entries: BTreeMap<String, String>,
}

impl FixtureRewriter {
    pub fn new(entries: BTreeMap<String, String>) -> Self {
        FixtureRewriter { entries }
    }

    pub fn from_json(text: &str) -> Result<Self, QuestError> {
        let entries = serde_json::from_str(text).map_err(|e| QuestError::Fixture(e.to_string()))?;
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, QuestError> {
        let text = fs::read_to_string(path).map_err(|e| QuestError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl Rewriter for FixtureRewriter {
    fn label(&self) -> &str {
        "fixture"
    }

    fn rewrite(&self, query: &str, _hint: Option<&str>) -> Result<String, RewriteError> {
        if let Some(hit) = self.entries.get(query) {
            return Ok(hit.clone());
        }
        let folded = query.to_lowercase();
        self.entries
            .iter()
            .find(|(k, _)| k.to_lowercase() == folded)
            .map(|(_, v)| v.clone())
            .ok_or(RewriteError::NoRewrite)
    }
}

/// Rule-based fallback: known terms are replaced by their descriptions.
///
/// A query that is exactly one known term comes back as that term's
/// description verbatim.
#[derive(Debug, Clone, Default)]
pub struct DictionaryRewriter {
    entries: BTreeMap<String, String>,
}

impl DictionaryRewriter {
    pub fn new<I, K, V>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        DictionaryRewriter {
            entries: entries
                .into_iter()
                .map(|(k, v)| (k.as_ref().to_lowercase(), v.into()))
                .collect(),
        }
    }
}

impl Rewriter for DictionaryRewriter {
    fn label(&self) -> &str {
        "dictionary"
    }

    fn rewrite(&self, query: &str, _hint: Option<&str>) -> Result<String, RewriteError> {
        if let Some(hit) = self.entries.get(&query.trim().to_lowercase()) {
            return Ok(hit.clone());
        }
        let tokens = tokenize(query);
        if !tokens.iter().any(|t| self.entries.contains_key(t)) {
            return Err(RewriteError::NoRewrite);
        }
        Ok(tokens
            .into_iter()
            .map(|t| self.entries.get(&t).cloned().unwrap_or(t))
            .collect::<Vec<_>>()
            .join(" "))
    }
}

pub const DEFAULT_PROMPT_TEMPLATE: &str = "Rewrite this video search query as a short, concrete description \
of what is visible on screen (objects, colors, shapes, setting). Reply with the description only.\n\
Query: {query}{hint}";

pub fn render_prompt(template: &str, query: &str, hint: Option<&str>) -> String {
    let hint = hint
        .filter(|h| !h.trim().is_empty())
        .map(|h| format!("\nContext: {h}"))
        .unwrap_or_default();
    template.replace("{query}", query).replace("{hint}", &hint)
}

#[cfg(feature = "remote-rewriter")]
pub use remote::{HttpRewriter, HttpRewriterConfig};

#[cfg(feature = "remote-rewriter")]
mod remote {
    use std::io;
    use std::time::Duration;

    use serde::{Deserialize, Serialize};

    use super::{render_prompt, RewriteError, Rewriter, DEFAULT_PROMPT_TEMPLATE};

    #[derive(Debug, Clone)]
    pub struct HttpRewriterConfig {
        pub endpoint: String,
        pub model: String,
        pub api_key: Option<String>,
        pub timeout: Duration,
        pub prompt_template: String,
    }

    impl HttpRewriterConfig {
        pub fn new(endpoint: impl Into<String>) -> Self {
            HttpRewriterConfig {
                endpoint: endpoint.into(),
                model: "default".into(),
                api_key: None,
                timeout: Duration::from_secs(10),
                prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
            }
        }
    }

    #[derive(Serialize)]
    struct Request<'a> {
        model: &'a str,
        prompt: &'a str,
    }

    #[derive(Deserialize)]
    struct Response {
        text: String,
    }

    /// JSON-over-HTTP client: POSTs `{model, prompt}`, expects `{text}`.
    pub struct HttpRewriter {
        config: HttpRewriterConfig,
        agent: ureq::Agent,
    }

    impl HttpRewriter {
        pub fn new(config: HttpRewriterConfig) -> Self {
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(config.timeout))
                .build()
                .into();
            HttpRewriter { config, agent }
        }
    }

    fn classify(err: ureq::Error) -> RewriteError {
        match err {
            ureq::Error::Timeout(_) => RewriteError::Timeout,
            ureq::Error::Io(e) if matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) => {
                RewriteError::Timeout
            }
            ureq::Error::StatusCode(code @ (401 | 403)) => RewriteError::Auth(format!("HTTP {code}")),
            ureq::Error::StatusCode(code) => RewriteError::Network(format!("HTTP {code}")),
            ureq::Error::Json(e) => RewriteError::BadResponse(e.to_string()),
            other => RewriteError::Network(other.to_string()),
        }
    }

    impl Rewriter for HttpRewriter {
        fn label(&self) -> &str {
            "remote"
        }

        fn rewrite(&self, query: &str, hint: Option<&str>) -> Result<String, RewriteError> {
            let prompt = render_prompt(&self.config.prompt_template, query, hint);
            let mut req = self.agent.post(&self.config.endpoint);
            if let Some(key) = &self.config.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = req
                .send_json(Request {
                    model: &self.config.model,
                    prompt: &prompt,
                })
                .map_err(classify)?;
            let body: Response = resp.body_mut().read_json().map_err(classify)?;
            Ok(body.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExemplarRecord {
    pub exemplar_id: String,
    pub source_note: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExemplarPayload {
    Vector(Vec<f32>),
    Descriptor(String),
}

/// Append-only store of exemplar vectors, ids `ex-1`, `ex-2`, ...
#[derive(Debug)]
pub struct ExemplarStore {
    embedder: ProviderConfig,
    records: RwLock<Vec<ExemplarRecord>>,
}

impl ExemplarStore {
    /// `embedder.dim` must equal the vector store's dimension.
    pub fn new(embedder: ProviderConfig) -> Self {
        ExemplarStore {
            embedder,
            records: RwLock::new(Vec::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.embedder.dim
    }

    pub fn len(&self) -> usize {
        self.records.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ingest_exemplar(&self, payload: ExemplarPayload, note: &str) -> Result<ExemplarRecord, QuestError> {
        let vector = match payload {
            ExemplarPayload::Vector(v) => {
                if v.is_empty() {
                    return Err(QuestError::EmptyPayload);
                }
                if v.len() != self.embedder.dim {
                    return Err(QuestError::DimensionMismatch {
                        expected: self.embedder.dim,
                        actual: v.len(),
                    });
                }
                normalize(&v)?
            }
            ExemplarPayload::Descriptor(text) => {
                if text.trim().is_empty() {
                    return Err(QuestError::EmptyPayload);
                }
                embed_text(&text, &self.embedder)?
            }
        };
        let mut records = self.records.write().unwrap();
        let record = ExemplarRecord {
            exemplar_id: format!("ex-{}", records.len() + 1),
            source_note: note.to_owned(),
            vector,
        };
        records.push(record.clone());
        Ok(record)
    }

    pub fn get(&self, exemplar_id: &str) -> Result<ExemplarRecord, QuestError> {
        self.records
            .read()
            .unwrap()
            .iter()
            .find(|r| r.exemplar_id == exemplar_id)
            .cloned()
            .ok_or_else(|| QuestError::UnknownExemplar(exemplar_id.to_owned()))
    }

    pub fn search_with_exemplar(
        &self,
        store: &VectorStore,
        exemplar_id: &str,
        k: usize,
        filter: Option<&SpanFilter>,
        threshold: Option<f64>,
    ) -> Result<Vec<ScoredHit>, QuestError> {
        let record = self.get(exemplar_id)?;
        Ok(store.search_topk(&record.vector, k, filter, threshold)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::KeyframeId;
    use proptest::prelude::*;

    struct Failing(RewriteError);
    impl Rewriter for Failing {
        fn label(&self) -> &str {
            "failing"
        }
        fn rewrite(&self, _: &str, _: Option<&str>) -> Result<String, RewriteError> {
            Err(self.0.clone())
        }
    }

    fn req(q: &str) -> RewriteRequest {
        RewriteRequest {
            original_query: q.into(),
            context_hint: None,
        }
    }

    #[test]
    fn provider_failures_fall_back() {
        for e in [
            RewriteError::Timeout,
            RewriteError::Auth("401".into()),
            RewriteError::Network("refused".into()),
            RewriteError::NoRewrite,
        ] {
            let r = rewrite_query(&req("Labubu"), &Failing(e)).unwrap();
            assert_eq!(r.rewritten_query, "Labubu");
            assert!(r.used_fallback);
            assert_eq!(r.provider, "failing");
        }
        assert!(matches!(rewrite_query(&req("  "), &Failing(RewriteError::Timeout)), Err(QuestError::EmptyQuery)));
    }

    #[test]
    fn fixture_replay() {
        let f = FixtureRewriter::from_json(r#"{"Labubu": "plush toy with rabbit ears and jagged teeth"}"#).unwrap();
        let r = rewrite_query(&req("Labubu"), &f).unwrap();
        assert_eq!(r.rewritten_query, "plush toy with rabbit ears and jagged teeth");
        assert!(!r.used_fallback);
        assert_eq!(f.rewrite("labubu", None).unwrap(), "plush toy with rabbit ears and jagged teeth");
        assert!(rewrite_query(&req("unknown"), &f).unwrap().used_fallback);
        assert!(FixtureRewriter::from_json("[1,2]").is_err());
    }

    #[test]
    fn dictionary_rewrites() {
        let d = DictionaryRewriter::new([("babythree", "small vinyl doll in a pastel animal costume")]);
        let r = rewrite_query(&req("babythree"), &d).unwrap();
        assert_eq!(r.rewritten_query, "small vinyl doll in a pastel animal costume");
        assert!(!r.used_fallback);
        assert_eq!(
            d.rewrite("a BabyThree on a shelf", None).unwrap(),
            "a small vinyl doll in a pastel animal costume on a shelf"
        );
        assert!(rewrite_query(&req("teddy bear"), &d).unwrap().used_fallback);
    }

    #[test]
    fn prompt_rendering() {
        assert_eq!(render_prompt("Q: {query}{hint}", "cake", None), "Q: cake");
        assert_eq!(render_prompt("Q: {query}{hint}", "cake", Some("wedding")), "Q: cake\nContext: wedding");
    }

    fn store() -> VectorStore {
        VectorStore::from_raw(
            4,
            vec![
                (KeyframeId(1), vec![1.0, 0.0, 0.0, 0.0]),
                (KeyframeId(2), vec![0.6, 0.8, 0.0, 0.0]),
                (KeyframeId(3), vec![0.0, 0.0, 1.0, 0.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn exemplar_vector_is_normalized_and_searchable() {
        let ex = ExemplarStore::new(ProviderConfig::toy(4));
        let rec = ex.ingest_exemplar(ExemplarPayload::Vector(vec![3.0, 4.0, 0.0, 0.0]), "web image").unwrap();
        assert_eq!(rec.exemplar_id, "ex-1");
        assert!((rec.vector[0] - 0.6).abs() < 1e-7 && (rec.vector[1] - 0.8).abs() < 1e-7);
        let hits = ex.search_with_exemplar(&store(), "ex-1", 2, None, None).unwrap();
        assert_eq!(hits[0].keyframe_id, KeyframeId(2));
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        // reusable without re-upload
        assert_eq!(ex.search_with_exemplar(&store(), "ex-1", 2, None, None).unwrap(), hits);
    }

    #[test]
    fn exemplar_errors() {
        let ex = ExemplarStore::new(ProviderConfig::toy(4));
        assert!(matches!(
            ex.ingest_exemplar(ExemplarPayload::Vector(vec![1.0, 0.0]), ""),
            Err(QuestError::DimensionMismatch { expected: 4, actual: 2 })
        ));
        assert!(matches!(
            ex.ingest_exemplar(ExemplarPayload::Vector(vec![0.0; 4]), ""),
            Err(QuestError::Embedding(EmbeddingError::ZeroVector))
        ));
        assert!(matches!(ex.ingest_exemplar(ExemplarPayload::Vector(vec![]), ""), Err(QuestError::EmptyPayload)));
        assert!(matches!(ex.ingest_exemplar(ExemplarPayload::Descriptor(" ".into()), ""), Err(QuestError::EmptyPayload)));
        assert!(matches!(
            ex.search_with_exemplar(&store(), "ex-9", 1, None, None),
            Err(QuestError::UnknownExemplar(_))
        ));
        assert!(ex.is_empty());
    }

    #[test]
    fn descriptor_uses_hash_embedder() {
        let cfg = ProviderConfig::toy(64);
        let ex = ExemplarStore::new(cfg);
        let rec = ex
            .ingest_exemplar(ExemplarPayload::Descriptor("red double-decker bus".into()), "note")
            .unwrap();
        assert_eq!(rec.vector, embed_text("red double-decker bus", &cfg).unwrap());
    }

    proptest! {
        #[test]
        fn exemplar_search_equals_direct_search(v in prop::collection::vec(-1.0f32..1.0, 4), k in 1usize..4) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let ex = ExemplarStore::new(ProviderConfig::toy(4));
            let rec = ex.ingest_exemplar(ExemplarPayload::Vector(v.clone()), "").unwrap();
            let s = store();
            let a = ex.search_with_exemplar(&s, &rec.exemplar_id, k, None, None).unwrap();
            let b = s.search_topk(&normalize(&v).unwrap(), k, None, None).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
