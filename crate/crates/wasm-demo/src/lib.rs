//! Browser bindings for three small interactive views: event alignment on
//! an editable score matrix, keyframe sampling of one scene, and toy-embedder
//! search over a handful of lines.
//!
//! The plain functions here are what the exports call and what the native
//! tests exercise; the exports only translate errors into `JsError`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use trake_core::dante::{dante_score_video, DanteParams, SimilarityMatrix};
use trake_core::embedding::{embed_text, ProviderConfig};
use trake_core::ingest::sample_keyframes;
use trake_core::vector_index::VectorStore;
use trake_core::{KeyframeId, VideoSpan};

/// Largest integer a JS number holds exactly.
const MAX_SAFE_INT: f64 = 9_007_199_254_740_991.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignView {
    pub score: f64,
    /// 1-based column of each event, in event order.
    pub path: Vec<u64>,
    /// Score of each event at its chosen column.
    pub event_scores: Vec<f64>,
    /// Distance penalty actually paid, `λ (t_N − t_1)`.
    pub penalty: f64,
}

/// Aligns the rows of `rows` (one per event) across all columns.
pub fn align(rows: Vec<Vec<f64>>, lambda: f64) -> Result<AlignView, String> {
    let t = rows.first().map_or(0, Vec::len);
    let s = SimilarityMatrix::from_rows(rows.clone()).map_err(|e| e.to_string())?;
    let params = DanteParams::new(lambda, 1).map_err(|e| e.to_string())?;
    let span = VideoSpan {
        video_id: "demo".into(),
        s_v: 1,
        e_v: t as u64,
    };
    let r = dante_score_video(&s, &span, &params).map_err(|e| e.to_string())?;
    let path: Vec<u64> = r.path.iter().map(|k| k.0).collect();
    let event_scores = path.iter().enumerate().map(|(i, &c)| rows[i][c as usize - 1]).collect();
    let penalty = lambda * (path[path.len() - 1] - path[0]) as f64;
    Ok(AlignView {
        score: r.score,
        path,
        event_scores,
        penalty,
    })
}

pub fn align_json(rows_json: &str, lambda: f64) -> Result<String, String> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(rows_json).map_err(|e| format!("matrix: {e}"))?;
    let view = align(rows, lambda)?;
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

fn as_frame(x: f64, name: &str) -> Result<u64, String> {
    if x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= MAX_SAFE_INT {
        Ok(x as u64)
    } else {
        Err(format!("{name} must be a non-negative integer up to 2^53 − 1"))
    }
}

/// The four sampled frames of scene `[a, b]`.
pub fn scene_keyframes(a: f64, b: f64) -> Result<Vec<f64>, String> {
    let (a, b) = (as_frame(a, "a")?, as_frame(b, "b")?);
    let frames = sample_keyframes(a, b).map_err(|e| e.to_string())?;
    Ok(frames.iter().map(|&f| f as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyHit {
    /// 0-based line number in the corpus text.
    pub line: usize,
    pub text: String,
    pub score: f64,
}

/// One line, one keyframe: every non-blank line is embedded with the
/// trigram-hash embedder.
pub struct ToyCorpus {
    cfg: ProviderConfig,
    store: VectorStore,
    lines: Vec<(usize, String)>,
}

impl ToyCorpus {
    pub fn build(text: &str, dim: usize) -> Result<Self, String> {
        let cfg = ProviderConfig::toy(dim);
        let lines: Vec<(usize, String)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i, l.trim().to_owned()))
            .collect();
        if lines.is_empty() {
            return Err("corpus has no non-blank lines".into());
        }
        let mut rows = Vec::with_capacity(lines.len());
        for (pos, (_, l)) in lines.iter().enumerate() {
            let v = embed_text(l, &cfg).map_err(|e| e.to_string())?;
            rows.push((KeyframeId::from_index(pos), v.into_inner()));
        }
        let store = VectorStore::from_unit_rows(dim, rows).map_err(|e| e.to_string())?;
        Ok(ToyCorpus { cfg, store, lines })
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn search(&self, query: &str, k: usize) -> Result<Vec<ToyHit>, String> {
        let q = embed_text(query, &self.cfg).map_err(|e| e.to_string())?;
        let hits = self.store.search_topk(&q, k, None, None).map_err(|e| e.to_string())?;
        Ok(hits
            .into_iter()
            .map(|h| {
                let (line, text) = self.lines[h.keyframe_id.index()].clone();
                ToyHit {
                    line,
                    text,
                    score: h.score,
                }
            })
            .collect())
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// `rows_json` is a JSON array of equal-length number arrays. Returns the
/// alignment as JSON.
#[wasm_bindgen(js_name = alignEvents)]
pub fn align_events(rows_json: &str, lambda: f64) -> Result<String, JsError> {
    align_json(rows_json, lambda).map_err(js)
}

#[wasm_bindgen(js_name = sampleKeyframes)]
pub fn sample_keyframes_js(a: f64, b: f64) -> Result<Vec<f64>, JsError> {
    scene_keyframes(a, b).map_err(js)
}

#[wasm_bindgen(js_name = ToyIndex)]
pub struct ToyIndex(ToyCorpus);

#[wasm_bindgen(js_class = ToyIndex)]
impl ToyIndex {
    #[wasm_bindgen(constructor)]
    pub fn new(corpus: &str, dim: usize) -> Result<ToyIndex, JsError> {
        ToyCorpus::build(corpus, dim).map(ToyIndex).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.0.len()
    }

    /// Top-`k` lines as a JSON array of `{line, text, score}`.
    pub fn search(&self, query: &str, k: usize) -> Result<String, JsError> {
        let hits = self.0.search(query, k).map_err(js)?;
        serde_json::to_string(&hits).map_err(|e| js(e.to_string()))
    }
}
