//! Deterministic toy corpora built with the hash embedder.
//!
//! Every keyframe gets a short text descriptor and its embedding is
//! `embed_text(descriptor)`, so a query equal to a descriptor scores 1.0
//! against that keyframe. [`planted_corpus`] hides one ordered event sequence
//! in one video and scatters single copies of the same events (and one
//! reversed copy) across decoy videos.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::KeyframeId;
use crate::embedding::{embed_text, ProviderConfig};
use crate::ingest::{IngestManifest, OcrRow, SceneRange};
use crate::trke::{self, TrkeFile};

const SUBJECTS: &[&str] = &[
    "an old fisherman", "a street vendor", "two schoolgirls", "a traffic officer", "a brown dog",
    "a news anchor", "a farmer", "a cyclist", "a group of tourists", "a chef", "a toddler",
    "a football team", "a monk", "a firefighter", "a grey cat", "a jazz band",
];
const ACTIONS: &[&str] = &[
    "walking along", "standing near", "sitting beside", "running across", "waving at",
    "cleaning", "painting", "loading boxes onto", "repairing", "photographing", "selling fruit at",
];
const PLACES: &[&str] = &[
    "a crowded market", "a river pier", "a rice field", "a city bridge", "a temple gate",
    "a night street", "a school yard", "a harbor crane", "a hospital corridor", "a bus station",
    "a mountain road", "a flower garden", "a stadium stand", "a rainy alley",
];
const OCR_WORDS: &[&str] = &[
    "tin", "tức", "thời", "sự", "hà", "nội", "sài", "gòn", "bản", "tin", "trưa", "giao", "thông",
    "thể", "thao", "thời", "tiết", "kinh", "tế", "văn", "hóa", "lịch", "sử", "phú", "xuân",
];

/// Events of the default planted sequence.
pub const DEFAULT_EVENTS: [&str; 3] = [
    "a woman in a yellow raincoat unlocks a blue bicycle",
    "she rides past a red lantern shop",
    "she hands a paper kite to a small boy on the beach",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub dim: usize,
    pub scenes: Vec<SceneRange>,
    pub embeddings: TrkeFile,
    pub ocr: Vec<OcrRow>,
    /// Descriptor of keyframe `t` at position `t − 1`.
    pub descriptors: Vec<String>,
    pub rewrites: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSequence {
    pub video_id: String,
    pub events: Vec<String>,
    pub keyframes: Vec<KeyframeId>,
}

#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub seed: u64,
    pub videos: usize,
    /// Multiple of 4; each scene contributes 4 keyframes.
    pub keyframes_per_video: usize,
    pub dim: usize,
    pub events: Vec<String>,
    /// Inclusive range of index gaps between consecutive planted events.
    pub gap: (usize, usize),
    /// Decoy videos per event holding a single copy of that event.
    pub decoys_per_event: usize,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            seed: 7,
            videos: 50,
            keyframes_per_video: 40,
            dim: 64,
            events: DEFAULT_EVENTS.iter().map(|s| s.to_string()).collect(),
            gap: (3, 15),
            decoys_per_event: 4,
        }
    }
}

pub fn video_id(v: usize) -> String {
    format!("L{:02}_V{:03}", v / 10 + 1, v + 1)
}

fn group_of(v: usize) -> String {
    format!("L{:02}", v / 10 + 1)
}

fn random_descriptor(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {}",
        SUBJECTS.choose(rng).unwrap(),
        ACTIONS.choose(rng).unwrap(),
        PLACES.choose(rng).unwrap()
    )
}

fn random_ocr(rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(0.3) {
        return String::new();
    }
    let n = rng.random_range(1..6);
    (0..n)
        .map(|_| *OCR_WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
        .to_uppercase()
}

/// Scenes `[10j, 10j + 9]` sample frames `10j + {0, 3, 6, 9}`.
fn scenes_for(video: &str, group: &str, keyframes: usize) -> Vec<SceneRange> {
    (0..keyframes / 4)
        .map(|j| SceneRange {
            video_id: video.to_owned(),
            a: 10 * j as u64,
            b: 10 * j as u64 + 9,
            fps: 25.0,
            group: Some(group.to_owned()),
        })
        .collect()
}

fn frame_of(local: usize) -> u64 {
    (10 * (local / 4) + 3 * (local % 4)) as u64
}

/// Embeds `descriptors` into a corpus with the given per-video layout.
pub fn corpus_from_descriptors(
    dim: usize,
    videos: &[(String, String)],
    keyframes_per_video: usize,
    descriptors: Vec<String>,
    ocr_texts: Vec<String>,
) -> SyntheticCorpus {
    assert_eq!(keyframes_per_video % 4, 0, "keyframes_per_video must be a multiple of 4");
    assert_eq!(descriptors.len(), videos.len() * keyframes_per_video);
    let cfg = ProviderConfig::toy(dim);
    let mut scenes = Vec::new();
    let mut ocr = Vec::new();
    for (v, (vid, group)) in videos.iter().enumerate() {
        scenes.extend(scenes_for(vid, group, keyframes_per_video));
        for local in 0..keyframes_per_video {
            let text = &ocr_texts[v * keyframes_per_video + local];
            if !text.is_empty() {
                ocr.push(OcrRow {
                    video_id: vid.clone(),
                    frame_number: frame_of(local),
                    ocr_text: text.clone(),
                });
            }
        }
    }
    let records = descriptors
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let v = embed_text(d, &cfg).expect("descriptors embed to non-zero vectors");
            (KeyframeId::from_index(i), v.into_inner())
        })
        .collect();
    SyntheticCorpus {
        dim,
        scenes,
        embeddings: TrkeFile {
            dim: dim as u32,
            records,
        },
        ocr,
        descriptors,
        rewrites: BTreeMap::new(),
    }
}

pub fn planted_corpus(spec: &PlantedSpec) -> (SyntheticCorpus, PlantedSequence) {
    assert!(spec.events.len() >= 2, "need at least two events");
    assert!(spec.videos >= 2 + spec.decoys_per_event * spec.events.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per = spec.keyframes_per_video;
    let videos: Vec<(String, String)> = (0..spec.videos).map(|v| (video_id(v), group_of(v))).collect();
    let mut descriptors: Vec<String> = (0..spec.videos * per).map(|_| random_descriptor(&mut rng)).collect();
    let ocr_texts: Vec<String> = (0..spec.videos * per).map(|_| random_ocr(&mut rng)).collect();

    let mut order: Vec<usize> = (0..spec.videos).collect();
    order.shuffle(&mut rng);
    let target = order[0];

    let n = spec.events.len();
    let max_spread = spec.gap.1 * (n - 1);
    assert!(max_spread < per, "planted sequence must fit inside one video");
    let first = rng.random_range(0..per - max_spread);
    let mut local = vec![first];
    for _ in 1..n {
        let gap = rng.random_range(spec.gap.0..=spec.gap.1);
        local.push(local.last().unwrap() + gap);
    }
    for (e, &l) in spec.events.iter().zip(&local) {
        descriptors[target * per + l] = e.clone();
    }

    // decoys: one event per video, then one video with the events reversed
    let mut next = 1;
    for e in &spec.events {
        for _ in 0..spec.decoys_per_event {
            let v = order[next];
            next += 1;
            descriptors[v * per + rng.random_range(0..per)] = e.clone();
        }
    }
    let reversed = order[next];
    let mut spots: Vec<usize> = (0..per).collect::<Vec<_>>().choose_multiple(&mut rng, n).copied().collect();
    spots.sort_unstable();
    for (e, &l) in spec.events.iter().rev().zip(&spots) {
        descriptors[reversed * per + l] = e.clone();
    }

    let corpus = corpus_from_descriptors(spec.dim, &videos, per, descriptors, ocr_texts);
    let planted = PlantedSequence {
        video_id: videos[target].0.clone(),
        events: spec.events.clone(),
        keyframes: local
            .iter()
            .map(|&l| KeyframeId((target * per + l) as u64 + 1))
            .collect(),
    };
    (corpus, planted)
}

/// The out-of-knowledge query scenario: the target keyframe is described in
/// plain visual terms that share nothing with the brand-name query, and the
/// recorded rewrite uses those visual terms.
pub struct QuestScenario {
    pub corpus: SyntheticCorpus,
    pub original_query: String,
    pub rewritten_query: String,
    pub target: KeyframeId,
}

pub fn quest_corpus(seed: u64) -> QuestScenario {
    let original = "Labubu";
    let rewrite = "plush monster toy with rabbit ears and jagged teeth";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_videos, per) = (8usize, 12usize);
    let videos: Vec<(String, String)> = (0..n_videos).map(|v| (video_id(v), group_of(v))).collect();
    let mut descriptors: Vec<String> = (0..n_videos * per).map(|_| random_descriptor(&mut rng)).collect();
    // distractors that share the query's letters but not its meaning
    descriptors[5] = "a lab bus parked outside a club".into();
    descriptors[17] = "a blue tube rubber duck".into();
    let target = rng.random_range(20..n_videos * per);
    descriptors[target] = "a grey plush monster toy with rabbit ears and jagged teeth on a shelf".into();
    let ocr_texts = vec![String::new(); n_videos * per];
    let mut corpus = corpus_from_descriptors(64, &videos, per, descriptors, ocr_texts);
    corpus.rewrites.insert(original.into(), rewrite.into());
    QuestScenario {
        corpus,
        original_query: original.into(),
        rewritten_query: rewrite.into(),
        target: KeyframeId(target as u64 + 1),
    }
}

pub const SCENES_FILE: &str = "scenes.jsonl";
pub const EMBEDDINGS_INPUT_FILE: &str = "embeddings.trke";
pub const OCR_FILE: &str = "ocr.jsonl";
pub const REWRITES_FILE: &str = "rewrites.json";
pub const DESCRIPTORS_FILE: &str = "descriptors.json";

impl SyntheticCorpus {
    /// Writes ingest inputs plus the descriptor list and rewrite fixture.
    pub fn write_inputs(&self, dir: &Path) -> io::Result<IngestManifest> {
        fs::create_dir_all(dir)?;
        let jsonl = |rows: Vec<String>| rows.join("\n") + "\n";
        fs::write(
            dir.join(SCENES_FILE),
            jsonl(self.scenes.iter().map(|s| serde_json::to_string(s).unwrap()).collect()),
        )?;
        fs::write(
            dir.join(OCR_FILE),
            jsonl(self.ocr.iter().map(|s| serde_json::to_string(s).unwrap()).collect()),
        )?;
        fs::write(dir.join(EMBEDDINGS_INPUT_FILE), trke::to_bytes(&self.embeddings))?;
        fs::write(
            dir.join(REWRITES_FILE),
            serde_json::to_string_pretty(&self.rewrites).unwrap() + "\n",
        )?;
        fs::write(
            dir.join(DESCRIPTORS_FILE),
            serde_json::to_string_pretty(&self.descriptors).unwrap() + "\n",
        )?;
        Ok(IngestManifest::new(
            dir.join(SCENES_FILE),
            dir.join(EMBEDDINGS_INPUT_FILE),
            dir.join(OCR_FILE),
            self.dim,
        ))
    }

    pub fn ingest(&self) -> Result<crate::index::TrakeIndex, crate::ingest::IngestError> {
        crate::ingest::assemble(
            &self.scenes,
            self.embeddings.clone(),
            self.ocr.clone(),
            self.dim,
            crate::ingest::DEFAULT_IMAGE_TEMPLATE,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_layout() {
        let spec = PlantedSpec::default();
        let (corpus, planted) = planted_corpus(&spec);
        let idx = corpus.ingest().unwrap();
        assert_eq!(idx.catalog.len(), 50 * 40);
        assert_eq!(idx.catalog.spans().len(), 50);
        let span = idx.catalog.span_of(&planted.video_id).unwrap();
        for (e, k) in planted.events.iter().zip(&planted.keyframes) {
            assert!(span.contains(*k));
            assert_eq!(&corpus.descriptors[k.index()], e);
        }
        for w in planted.keyframes.windows(2) {
            let gap = w[1].0 - w[0].0;
            assert!((3..=15).contains(&gap));
        }
        // same seed, same corpus
        assert_eq!(planted_corpus(&spec).0, corpus);
    }

    #[test]
    fn quest_target_shares_no_trigram_with_query() {
        let q = quest_corpus(1);
        let target = &q.corpus.descriptors[q.target.index()];
        let tri = |s: &str| -> Vec<String> {
            let c: Vec<char> = s.to_lowercase().chars().collect();
            c.windows(3).map(|w| w.iter().collect()).collect()
        };
        let t = tri(target);
        assert!(tri(&q.original_query).iter().all(|g| !t.contains(g)));
    }
}
