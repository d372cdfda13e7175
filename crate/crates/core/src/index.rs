//! The frozen set of stores produced by ingestion: catalog, vectors, OCR text.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, KeyframeId, KeyframeRecord, VideoSpan};
use crate::text_index::{TextIndex, TextIndexError};
use crate::vector_index::{SpanFilter, VectorIndexError, VectorStore};

pub const CATALOG_FILE: &str = "catalog.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.trke";
pub const TEXT_INDEX_FILE: &str = "text_index.json";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Vector(#[from] VectorIndexError),
    #[error(transparent)]
    Text(#[from] TextIndexError),
    #[error("index stores disagree: {0}")]
    Inconsistent(String),
    #[error("index directory {0} does not exist")]
    MissingDir(String),
    #[error("index io: {0}")]
    Io(String),
}

/// A keyframe record with its OCR text joined in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hydrated {
    #[serde(flatten)]
    pub record: KeyframeRecord,
    pub ocr_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrakeIndex {
    pub catalog: Catalog,
    pub vectors: VectorStore,
    pub text: TextIndex,
}

impl TrakeIndex {
    /// Checks that every keyframe has exactly one vector and one OCR document.
    pub fn new(catalog: Catalog, vectors: VectorStore, text: TextIndex) -> Result<Self, IndexError> {
        let t = catalog.len();
        let dense = |ids: &mut dyn Iterator<Item = KeyframeId>| {
            let mut n = 0usize;
            for (i, id) in ids.enumerate() {
                if id != KeyframeId::from_index(i) {
                    return false;
                }
                n += 1;
            }
            n == t
        };
        if !dense(&mut vectors.ids().iter().copied()) {
            return Err(IndexError::Inconsistent(format!(
                "vector store ids are not exactly 1..={t}"
            )));
        }
        if !dense(&mut text.documents().map(|(id, _)| id)) {
            return Err(IndexError::Inconsistent(format!(
                "text index documents are not exactly 1..={t}"
            )));
        }
        Ok(TrakeIndex {
            catalog,
            vectors,
            text,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        fs::create_dir_all(dir).map_err(|e| IndexError::Io(format!("{}: {e}", dir.display())))?;
        self.catalog.save(&dir.join(CATALOG_FILE))?;
        self.vectors.save(&dir.join(EMBEDDINGS_FILE))?;
        self.text.save(&dir.join(TEXT_INDEX_FILE))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        if !dir.is_dir() {
            return Err(IndexError::MissingDir(dir.display().to_string()));
        }
        let catalog = Catalog::load(&dir.join(CATALOG_FILE))?;
        let vectors = VectorStore::load(&dir.join(EMBEDDINGS_FILE))?;
        let text = TextIndex::load(&dir.join(TEXT_INDEX_FILE))?;
        Self::new(catalog, vectors, text)
    }

    pub fn hydrate(&self, ids: &[KeyframeId]) -> Result<Vec<Hydrated>, IndexError> {
        Ok(self
            .catalog
            .hydrate(ids)?
            .into_iter()
            .map(|record| Hydrated {
                ocr_text: self.text.text(record.keyframe_id).map(str::to_owned),
                record,
            })
            .collect())
    }

    /// Spans of the videos selected by `videos` and `groups`; both
    /// constraints apply when both are given. `None` for both means all.
    pub fn select_spans(
        &self,
        videos: Option<&[String]>,
        groups: Option<&[String]>,
    ) -> Result<Vec<VideoSpan>, CatalogError> {
        let mut spans: Vec<VideoSpan> = match videos {
            Some(videos) => {
                let mut out = Vec::with_capacity(videos.len());
                for v in videos {
                    out.push(self.catalog.span_of(v)?.clone());
                }
                out.sort_by_key(|s| s.s_v);
                out.dedup();
                out
            }
            None => self.catalog.spans().to_vec(),
        };
        if let Some(groups) = groups {
            let allowed = self.catalog.videos_in_groups(groups)?;
            spans.retain(|s| allowed.contains(&s.video_id));
        }
        Ok(spans)
    }

    /// Keyframe filter for the selection, or `None` when nothing is filtered.
    pub fn filter(
        &self,
        videos: Option<&[String]>,
        groups: Option<&[String]>,
    ) -> Result<Option<SpanFilter>, CatalogError> {
        if videos.is_none() && groups.is_none() {
            return Ok(None);
        }
        Ok(Some(SpanFilter::from_spans(&self.select_spans(videos, groups)?)))
    }
}
