//! BM25 keyword search over OCR text.
//!
//! Tokens are syllable-level: lowercase, split on anything that is neither
//! alphanumeric nor a combining mark, diacritics kept. No stemming and no
//! stop words.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;

use crate::catalog::{canonical_json, KeyframeId};
use crate::vector_index::{ScoredHit, SpanFilter, TopK};

pub const TEXT_INDEX_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextIndexError {
    #[error("query has no searchable tokens")]
    EmptyQuery,
    #[error("text index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("keyframe {0} has more than one OCR document")]
    DuplicateDocument(KeyframeId),
    #[error("malformed text index: {0}")]
    Malformed(String),
    #[error("text index io: {0}")]
    Io(String),
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || is_combining_mark(c)))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// `ln((N − n + 0.5) / (n + 0.5) + 1)`
pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    let (n_docs, n) = (doc_count as f64, doc_freq as f64);
    ((n_docs - n + 0.5) / (n + 0.5) + 1.0).ln()
}

/// Saturated term-frequency factor of one (term, document) pair.
pub fn tf_weight(params: Bm25Params, tf: u32, doc_len: u32, avg_doc_len: f64) -> f64 {
    let tf = tf as f64;
    let norm = 1.0 - params.b + params.b * doc_len as f64 / avg_doc_len;
    tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextIndex {
    params: Bm25Params,
    documents: BTreeMap<KeyframeId, String>,
    postings: BTreeMap<String, Vec<(KeyframeId, u32)>>,
    doc_lengths: HashMap<KeyframeId, u32>,
    total_len: u64,
}

#[derive(Serialize, Deserialize)]
struct TextIndexFile {
    version: u32,
    parameters: Bm25Params,
    postings: BTreeMap<String, Vec<(KeyframeId, u32)>>,
    doc_lengths: Vec<(KeyframeId, u32)>,
    documents: Vec<(KeyframeId, String)>,
}

impl TextIndex {
    pub fn build<I>(docs: I) -> Result<Self, TextIndexError>
    where
        I: IntoIterator<Item = (KeyframeId, String)>,
    {
        Self::build_with(Bm25Params::default(), docs)
    }

    pub fn build_with<I>(params: Bm25Params, docs: I) -> Result<Self, TextIndexError>
    where
        I: IntoIterator<Item = (KeyframeId, String)>,
    {
        let mut documents = BTreeMap::new();
        for (id, text) in docs {
            if documents.insert(id, text).is_some() {
                return Err(TextIndexError::DuplicateDocument(id));
            }
        }
        let mut postings: BTreeMap<String, Vec<(KeyframeId, u32)>> = BTreeMap::new();
        let mut doc_lengths = HashMap::with_capacity(documents.len());
        let mut total_len = 0u64;
        // BTreeMap iteration is by ascending id, so posting lists come out sorted
        for (&id, text) in &documents {
            let tokens = tokenize(text);
            doc_lengths.insert(id, tokens.len() as u32);
            total_len += tokens.len() as u64;
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((id, n));
            }
        }
        Ok(TextIndex {
            params,
            documents,
            postings,
            doc_lengths,
            total_len,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.documents.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.documents.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.documents.len() as f64
        }
    }

    pub fn doc_length(&self, id: KeyframeId) -> Option<u32> {
        self.doc_lengths.get(&id).copied()
    }

    pub fn postings(&self, token: &str) -> &[(KeyframeId, u32)] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn text(&self, id: KeyframeId) -> Option<&str> {
        self.documents.get(&id).map(String::as_str)
    }

    pub fn documents(&self) -> impl Iterator<Item = (KeyframeId, &str)> {
        self.documents.iter().map(|(id, t)| (*id, t.as_str()))
    }

    /// BM25 top-k. Documents sharing no token with the query never appear;
    /// ties go to the lower keyframe id.
    pub fn ocr_search(
        &self,
        query: &str,
        k: usize,
        filter: Option<&SpanFilter>,
    ) -> Result<Vec<ScoredHit>, TextIndexError> {
        let mut terms = tokenize(query);
        if terms.is_empty() {
            return Err(TextIndexError::EmptyQuery);
        }
        if self.documents.is_empty() {
            return Err(TextIndexError::EmptyIndex);
        }
        if k == 0 {
            return Err(TextIndexError::InvalidK);
        }
        // each distinct query term counts once, in first-occurrence order
        let mut seen = std::collections::HashSet::new();
        terms.retain(|t| seen.insert(t.clone()));

        let n_docs = self.doc_count();
        let avgdl = self.avg_doc_length();
        let mut scores: HashMap<KeyframeId, f64> = HashMap::new();
        for term in &terms {
            let plist = self.postings(term);
            if plist.is_empty() {
                continue;
            }
            let w = idf(n_docs, plist.len());
            for &(id, tf) in plist {
                if filter.is_some_and(|f| !f.contains(id)) {
                    continue;
                }
                let dl = self.doc_lengths[&id];
                *scores.entry(id).or_insert(0.0) += w * tf_weight(self.params, tf, dl, avgdl);
            }
        }
        let mut top = TopK::new(k);
        for (keyframe_id, score) in scores {
            top.push(ScoredHit { keyframe_id, score });
        }
        Ok(top.into_sorted())
    }

    pub fn to_canonical_json(&self) -> String {
        let mut doc_lengths: Vec<(KeyframeId, u32)> =
            self.doc_lengths.iter().map(|(k, v)| (*k, *v)).collect();
        doc_lengths.sort_unstable();
        canonical_json(&TextIndexFile {
            version: TEXT_INDEX_VERSION,
            parameters: self.params,
            postings: self.postings.clone(),
            doc_lengths,
            documents: self.documents.iter().map(|(k, v)| (*k, v.clone())).collect(),
        })
    }

    /// Parses a persisted index, rebuilding it from the stored documents and
    /// checking the stored postings against the rebuild.
    pub fn from_json(text: &str) -> Result<Self, TextIndexError> {
        let file: TextIndexFile =
            serde_json::from_str(text).map_err(|e| TextIndexError::Malformed(e.to_string()))?;
        if file.version != TEXT_INDEX_VERSION {
            return Err(TextIndexError::Malformed(format!("unsupported version {}", file.version)));
        }
        let index = Self::build_with(file.parameters, file.documents)?;
        if index.postings != file.postings {
            return Err(TextIndexError::Malformed("postings disagree with documents".into()));
        }
        let lengths: HashMap<KeyframeId, u32> = file.doc_lengths.into_iter().collect();
        if lengths != index.doc_lengths {
            return Err(TextIndexError::Malformed("doc_lengths disagree with documents".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), TextIndexError> {
        fs::write(path, self.to_canonical_json()).map_err(|e| TextIndexError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TextIndexError> {
        let text = fs::read_to_string(path)
            .map_err(|e| TextIndexError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(texts: &[&str]) -> TextIndex {
        TextIndex::build(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| (KeyframeId(i as u64 + 1), t.to_string())),
        )
        .unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("PHÚ XUÂN – GIA ĐỊNH"), vec!["phú", "xuân", "gia", "định"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("abc123 def"), vec!["abc123", "def"]);
        assert_eq!(tokenize("  ,,a--b  "), vec!["a", "b"]);
        // decomposed diacritics stay attached to their base letter
        assert_eq!(tokenize("Phu\u{301} xua\u{302}n"), vec!["phu\u{301}", "xua\u{302}n"]);
    }

    #[test]
    fn containment() {
        let idx = docs(&["xin chào", "tạm biệt"]);
        let hits = idx.ocr_search("chào", 10, None).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].keyframe_id, KeyframeId(1));
        assert!(idx.ocr_search("hello", 10, None).unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let idx = docs(&["a b"]);
        assert_eq!(idx.ocr_search(" – ", 5, None), Err(TextIndexError::EmptyQuery));
        assert_eq!(idx.ocr_search("a", 0, None), Err(TextIndexError::InvalidK));
        let empty = TextIndex::build(Vec::new()).unwrap();
        assert_eq!(empty.ocr_search("a", 5, None), Err(TextIndexError::EmptyIndex));
        assert_eq!(
            TextIndex::build(vec![(KeyframeId(1), "x".into()), (KeyframeId(1), "y".into())]),
            Err(TextIndexError::DuplicateDocument(KeyframeId(1)))
        );
    }

    #[test]
    fn empty_documents_count_but_have_no_postings() {
        let idx = docs(&["", "gia định", ""]);
        assert_eq!(idx.doc_count(), 3);
        assert_eq!(idx.doc_length(KeyframeId(1)), Some(0));
        assert!((idx.avg_doc_length() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(idx.postings("gia"), &[(KeyframeId(2), 1)]);
        assert_eq!(idx.text(KeyframeId(3)), Some(""));
    }

    #[test]
    fn filter_restricts_hits() {
        let idx = docs(&["lịch sử", "lịch sử", "lịch"]);
        let f = SpanFilter::from_ranges([(2, 3)]);
        let hits = idx.ocr_search("lịch sử", 10, Some(&f)).unwrap();
        assert_eq!(hits.iter().map(|h| h.keyframe_id.0).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn known_bm25_value() {
        // N=2, n=1: idf = ln(1.5/1.5 + 1) = ln 2; dl = avgdl = 2, tf = 1:
        // 1·2.2 / (1 + 1.2) = 1
        let idx = docs(&["xin chào", "tạm biệt"]);
        let hits = idx.ocr_search("chào", 1, None).unwrap();
        assert!((hits[0].score - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let idx = docs(&["PHÚ XUÂN – GIA ĐỊNH", "", "những dấu ấn lịch sử", "gia gia"]);
        let text = idx.to_canonical_json();
        let back = TextIndex::from_json(&text).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_canonical_json(), text);
        let tampered = text.replace("[4,2]]", "[4,3]]");
        assert_ne!(tampered, text);
        assert!(TextIndex::from_json(&tampered).is_err());
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(s in "\\PC{0,60}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn full_match_outranks_no_match(
            words in prop::collection::vec("[a-e]{1,3}", 1..4),
            filler in prop::collection::vec("[x-z]{1,3}", 0..6),
        ) {
            let query = words.join(" ");
            let idx = TextIndex::build(vec![
                (KeyframeId(1), filler.join(" ")),
                (KeyframeId(2), format!("{} {}", query, filler.join(" "))),
                (KeyframeId(3), "qq".to_string()),
            ]).unwrap();
            let hits = idx.ocr_search(&query, 3, None).unwrap();
            prop_assert_eq!(hits[0].keyframe_id, KeyframeId(2));
            prop_assert!(hits[0].score > 0.0);
            prop_assert!(hits.iter().all(|h| h.keyframe_id != KeyframeId(1) && h.keyframe_id != KeyframeId(3)));
        }
    }
}
