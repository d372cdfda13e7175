//! Scene lists, embedding files and OCR dumps into a frozen [`TrakeIndex`].
//!
//! Each scene `[a, b]` contributes four sampled frames
//! `a + ⌊i·(b − a)/3⌋` for `i = 0..=3`. Per video, the sampled frames of all
//! scenes are merged, deduplicated and sorted before registration, so short
//! scenes and scenes sharing a boundary frame never produce duplicate ids.
//!
//! The embeddings file is keyed by the keyframe ids ingestion assigns:
//! videos in order of first appearance in the scenes file, frames ascending
//! within each video.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, KeyframeId};
use crate::index::{IndexError, TrakeIndex};
use crate::text_index::{TextIndex, TextIndexError};
use crate::trke::{self, TrkeError, TrkeFile};
use crate::vector_index::{VectorIndexError, VectorStore};

pub const DEFAULT_IMAGE_TEMPLATE: &str = "keyframes/{video_id}/{frame:06}.jpg";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("scene range has a > b ({a} > {b})")]
    InvalidRange { a: u64, b: u64 },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("keyframe {0} has no embedding")]
    MissingEmbedding(KeyframeId),
    #[error("record does not match any sampled keyframe: {0}")]
    DanglingRecord(String),
    #[error("more than one record for {0}")]
    DuplicateRecord(String),
    #[error("embeddings have dimension {actual}, manifest says {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("video `{0}` has scenes with different fps")]
    InconsistentFps(String),
    #[error("video `{0}` has scenes with different groups")]
    InconsistentGroup(String),
    #[error("embeddings file: {0}")]
    Embeddings(#[from] TrkeError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Vector(#[from] VectorIndexError),
    #[error(transparent)]
    Text(#[from] TextIndexError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl IngestError {
    /// Variant name, for diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            IngestError::InvalidRange { .. } => "InvalidRange",
            IngestError::Parse { .. } => "Parse",
            IngestError::Io { .. } => "Io",
            IngestError::MissingEmbedding(_) => "MissingEmbedding",
            IngestError::DanglingRecord(_) => "DanglingRecord",
            IngestError::DuplicateRecord(_) => "DuplicateRecord",
            IngestError::DimensionMismatch { .. } => "DimensionMismatch",
            IngestError::InconsistentFps(_) => "InconsistentFps",
            IngestError::InconsistentGroup(_) => "InconsistentGroup",
            IngestError::Embeddings(_) => "Embeddings",
            IngestError::Catalog(_) => "Catalog",
            IngestError::Vector(_) => "Vector",
            IngestError::Text(_) => "Text",
            IngestError::Index(_) => "Index",
        }
    }
}

/// The four sampled frame numbers of scene `[a, b]`, non-decreasing, with
/// duplicates kept.
pub fn sample_keyframes(a: u64, b: u64) -> Result<[u64; 4], IngestError> {
    if a > b {
        return Err(IngestError::InvalidRange { a, b });
    }
    let width = (b - a) as u128;
    Ok([0u128, 1, 2, 3].map(|i| a + (i * width / 3) as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRange {
    pub video_id: String,
    pub a: u64,
    pub b: u64,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrRow {
    pub video_id: String,
    pub frame_number: u64,
    pub ocr_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub scenes_path: PathBuf,
    pub embeddings_path: PathBuf,
    pub ocr_path: PathBuf,
    pub embedding_dim: usize,
    #[serde(default = "default_template")]
    pub image_path_template: String,
}

fn default_template() -> String {
    DEFAULT_IMAGE_TEMPLATE.into()
}

impl IngestManifest {
    pub fn new(scenes: impl Into<PathBuf>, embeddings: impl Into<PathBuf>, ocr: impl Into<PathBuf>, dim: usize) -> Self {
        IngestManifest {
            scenes_path: scenes.into(),
            embeddings_path: embeddings.into(),
            ocr_path: ocr.into(),
            embedding_dim: dim,
            image_path_template: default_template(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Parses JSON Lines, skipping blank lines.
pub fn parse_jsonl<T, R>(reader: R, file: &str) -> Result<Vec<T>, IngestError>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IngestError::Io {
            path: file.to_owned(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            file: file.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Registers every video's deduplicated sampled frames, in order of first
/// appearance.
pub fn build_catalog(scenes: &[SceneRange], image_path_template: &str) -> Result<Catalog, IngestError> {
    struct Pending {
        fps: f64,
        group: Option<String>,
        frames: BTreeSet<u64>,
    }
    let mut order: Vec<&str> = Vec::new();
    let mut videos: HashMap<&str, Pending> = HashMap::new();
    for scene in scenes {
        let sampled = sample_keyframes(scene.a, scene.b)?;
        let entry = videos.entry(scene.video_id.as_str()).or_insert_with(|| {
            order.push(&scene.video_id);
            Pending {
                fps: scene.fps,
                group: scene.group.clone(),
                frames: BTreeSet::new(),
            }
        });
        if entry.fps != scene.fps {
            return Err(IngestError::InconsistentFps(scene.video_id.clone()));
        }
        if scene.group.is_some() && entry.group != scene.group {
            if entry.group.is_none() {
                entry.group = scene.group.clone();
            } else {
                return Err(IngestError::InconsistentGroup(scene.video_id.clone()));
            }
        }
        entry.frames.extend(sampled);
    }
    let mut catalog = Catalog::new();
    for video_id in order {
        let pending = &videos[video_id];
        let frames: Vec<u64> = pending.frames.iter().copied().collect();
        catalog.register_video(video_id, pending.fps, &frames, image_path_template)?;
        if let Some(group) = &pending.group {
            catalog.set_group(video_id, group)?;
        }
    }
    Ok(catalog)
}

/// Joins parsed inputs into a validated index.
pub fn assemble(
    scenes: &[SceneRange],
    embeddings: TrkeFile,
    ocr: Vec<OcrRow>,
    embedding_dim: usize,
    image_path_template: &str,
) -> Result<TrakeIndex, IngestError> {
    if embeddings.dim as usize != embedding_dim {
        return Err(IngestError::DimensionMismatch {
            expected: embedding_dim,
            actual: embeddings.dim as usize,
        });
    }
    let catalog = build_catalog(scenes, image_path_template)?;
    let t = catalog.len();

    let mut rows: Vec<Option<Vec<f32>>> = vec![None; t];
    for (id, values) in embeddings.records {
        if id.0 == 0 || id.index() >= t {
            return Err(IngestError::DanglingRecord(format!("embedding for keyframe {id}")));
        }
        if rows[id.index()].replace(values).is_some() {
            return Err(IngestError::DuplicateRecord(format!("embedding of keyframe {id}")));
        }
    }
    let mut vectors = Vec::with_capacity(t);
    for (i, row) in rows.into_iter().enumerate() {
        let id = KeyframeId::from_index(i);
        vectors.push((id, row.ok_or(IngestError::MissingEmbedding(id))?));
    }
    let vectors = VectorStore::from_raw(embedding_dim, vectors)?;

    let mut by_frame: HashMap<(&str, u64), KeyframeId> = HashMap::with_capacity(t);
    for kf in catalog.keyframes() {
        by_frame.insert((kf.video_id.as_str(), kf.frame_number), kf.keyframe_id);
    }
    let mut texts: Vec<Option<String>> = vec![None; t];
    for row in ocr {
        let id = *by_frame
            .get(&(row.video_id.as_str(), row.frame_number))
            .ok_or_else(|| {
                IngestError::DanglingRecord(format!("ocr for {} frame {}", row.video_id, row.frame_number))
            })?;
        if texts[id.index()].replace(row.ocr_text).is_some() {
            return Err(IngestError::DuplicateRecord(format!(
                "ocr of {} frame {}",
                row.video_id, row.frame_number
            )));
        }
    }
    let text = TextIndex::build(
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| (KeyframeId::from_index(i), t.unwrap_or_default())),
    )?;
    Ok(TrakeIndex::new(catalog, vectors, text)?)
}

/// Reads the three input files (concurrently) and assembles the index.
pub fn ingest_all(manifest: &IngestManifest) -> Result<TrakeIndex, IngestError> {
    let (scenes, embeddings, ocr) = std::thread::scope(|scope| {
        let scenes = scope.spawn(|| {
            parse_jsonl::<SceneRange, _>(open(&manifest.scenes_path)?, &manifest.scenes_path.display().to_string())
        });
        let embeddings = scope.spawn(|| -> Result<TrkeFile, IngestError> {
            let mut r = open(&manifest.embeddings_path)?;
            let header = trke::read_header(&mut r)?;
            if header.dim as usize != manifest.embedding_dim {
                return Err(IngestError::DimensionMismatch {
                    expected: manifest.embedding_dim,
                    actual: header.dim as usize,
                });
            }
            // re-read from the start; the header check above fails fast on
            // wrong-dimension files before reading any records
            Ok(trke::read(open(&manifest.embeddings_path)?)?)
        });
        let ocr = scope.spawn(|| {
            parse_jsonl::<OcrRow, _>(open(&manifest.ocr_path)?, &manifest.ocr_path.display().to_string())
        });
        (
            scenes.join().expect("scene parser panicked"),
            embeddings.join().expect("embeddings reader panicked"),
            ocr.join().expect("ocr parser panicked"),
        )
    });
    assemble(
        &scenes?,
        embeddings?,
        ocr?,
        manifest.embedding_dim,
        &manifest.image_path_template,
    )
}
