//! The canonical keyframe id space.
//!
//! Keyframe ids are 1-based and contiguous. Registering a video appends a
//! block `[s_v, e_v]` to the end of the id space, so the spans of all
//! registered videos always partition `[1, T]`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CATALOG_VERSION: u32 = 1;

/// Global keyframe index `t`, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyframeId(pub u64);

impl KeyframeId {
    /// Zero-based position, for indexing dense per-keyframe arrays.
    #[inline]
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    #[inline]
    pub fn from_index(index: usize) -> Self {
        KeyframeId(index as u64 + 1)
    }
}

impl fmt::Display for KeyframeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub keyframe_id: KeyframeId,
    pub video_id: String,
    pub frame_number: u64,
    pub fps: f64,
    pub timestamp_s: f64,
    pub image_path: String,
}

/// Inclusive global-index interval owned by one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoSpan {
    pub video_id: String,
    pub s_v: u64,
    pub e_v: u64,
}

impl VideoSpan {
    pub fn len(&self) -> usize {
        (self.e_v - self.s_v + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, id: KeyframeId) -> bool {
        self.s_v <= id.0 && id.0 <= self.e_v
    }

    pub fn first(&self) -> KeyframeId {
        KeyframeId(self.s_v)
    }

    pub fn last(&self) -> KeyframeId {
        KeyframeId(self.e_v)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("video `{0}` is already registered")]
    DuplicateVideo(String),
    #[error("video `{0}` has no sampled frames")]
    EmptyScene(String),
    #[error("sampled frames of video `{video_id}` are not strictly ascending at position {position}")]
    NonMonotonicFrames { video_id: String, position: usize },
    #[error("fps must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("unknown keyframe ids: {}", join_ids(.0))]
    UnknownKeyframe(Vec<KeyframeId>),
    #[error("unknown video `{0}`")]
    UnknownVideo(String),
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("malformed catalog: {0}")]
    Malformed(String),
    #[error("catalog io: {0}")]
    Io(String),
}

fn join_ids(ids: &[KeyframeId]) -> String {
    ids.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(", ")
}

/// Keyframe metadata keyed by global index, plus video spans and optional
/// group labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    keyframes: Vec<KeyframeRecord>,
    spans: Vec<VideoSpan>,
    span_by_video: HashMap<String, usize>,
    groups: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    version: u32,
    keyframes: Vec<KeyframeRecord>,
    spans: Vec<VideoSpan>,
    groups: BTreeMap<String, String>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of keyframes, `T`.
    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    /// Spans in ascending `s_v` order (which is also registration order).
    pub fn spans(&self) -> &[VideoSpan] {
        &self.spans
    }

    pub fn keyframes(&self) -> &[KeyframeRecord] {
        &self.keyframes
    }

    pub fn groups(&self) -> &BTreeMap<String, String> {
        &self.groups
    }

    pub fn group_of(&self, video_id: &str) -> Option<&str> {
        self.groups.get(video_id).map(String::as_str)
    }

    /// Appends the next contiguous block of ids for `video_id`.
    ///
    /// `image_path_template` may contain `{video_id}`, `{frame}`, or a
    /// zero-padded `{frame:0N}` placeholder.
    pub fn register_video(
        &mut self,
        video_id: &str,
        fps: f64,
        sampled_frames: &[u64],
        image_path_template: &str,
    ) -> Result<VideoSpan, CatalogError> {
        if self.span_by_video.contains_key(video_id) {
            return Err(CatalogError::DuplicateVideo(video_id.to_owned()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(CatalogError::InvalidFps(fps));
        }
        if sampled_frames.is_empty() {
            return Err(CatalogError::EmptyScene(video_id.to_owned()));
        }
        if let Some(position) = sampled_frames.windows(2).position(|w| w[0] >= w[1]) {
            return Err(CatalogError::NonMonotonicFrames {
                video_id: video_id.to_owned(),
                position: position + 1,
            });
        }

        let s_v = self.keyframes.len() as u64 + 1;
        for &frame_number in sampled_frames {
            let keyframe_id = KeyframeId(self.keyframes.len() as u64 + 1);
            self.keyframes.push(KeyframeRecord {
                keyframe_id,
                video_id: video_id.to_owned(),
                frame_number,
                fps,
                timestamp_s: frame_number as f64 / fps,
                image_path: render_image_path(image_path_template, video_id, frame_number),
            });
        }
        let span = VideoSpan {
            video_id: video_id.to_owned(),
            s_v,
            e_v: self.keyframes.len() as u64,
        };
        self.span_by_video
            .insert(video_id.to_owned(), self.spans.len());
        self.spans.push(span.clone());
        Ok(span)
    }

    pub fn set_group(&mut self, video_id: &str, group: &str) -> Result<(), CatalogError> {
        if !self.span_by_video.contains_key(video_id) {
            return Err(CatalogError::UnknownVideo(video_id.to_owned()));
        }
        self.groups.insert(video_id.to_owned(), group.to_owned());
        Ok(())
    }

    pub fn span_of(&self, video_id: &str) -> Result<&VideoSpan, CatalogError> {
        self.span_by_video
            .get(video_id)
            .map(|&i| &self.spans[i])
            .ok_or_else(|| CatalogError::UnknownVideo(video_id.to_owned()))
    }

    pub fn get(&self, id: KeyframeId) -> Option<&KeyframeRecord> {
        if id.0 == 0 {
            return None;
        }
        self.keyframes.get(id.index())
    }

    pub fn contains(&self, id: KeyframeId) -> bool {
        self.get(id).is_some()
    }

    /// Resolves ids to records in input order. Every unknown id is reported.
    pub fn hydrate(&self, ids: &[KeyframeId]) -> Result<Vec<KeyframeRecord>, CatalogError> {
        let missing: Vec<KeyframeId> = ids.iter().copied().filter(|&id| !self.contains(id)).collect();
        if !missing.is_empty() {
            return Err(CatalogError::UnknownKeyframe(missing));
        }
        Ok(ids.iter().map(|&id| self.keyframes[id.index()].clone()).collect())
    }

    /// The span containing `id`.
    pub fn span_containing(&self, id: KeyframeId) -> Option<&VideoSpan> {
        let pos = self.spans.partition_point(|s| s.e_v < id.0);
        self.spans.get(pos).filter(|s| s.contains(id))
    }

    /// Previous and next keyframe of the same video, if any.
    pub fn neighbors(&self, id: KeyframeId) -> Result<(Option<KeyframeId>, Option<KeyframeId>), CatalogError> {
        let span = self
            .span_containing(id)
            .ok_or_else(|| CatalogError::UnknownKeyframe(vec![id]))?;
        let prev = (id.0 > span.s_v).then(|| KeyframeId(id.0 - 1));
        let next = (id.0 < span.e_v).then(|| KeyframeId(id.0 + 1));
        Ok((prev, next))
    }

    /// Video ids carrying any of `groups`.
    pub fn videos_in_groups(&self, groups: &[String]) -> Result<Vec<String>, CatalogError> {
        for g in groups {
            if !self.groups.values().any(|v| v == g) {
                return Err(CatalogError::UnknownGroup(g.clone()));
            }
        }
        Ok(self
            .spans
            .iter()
            .filter(|s| {
                self.groups
                    .get(&s.video_id)
                    .is_some_and(|g| groups.iter().any(|q| q == g))
            })
            .map(|s| s.video_id.clone())
            .collect())
    }

    /// Canonical JSON: object keys sorted, one trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let file = CatalogFile {
            version: CATALOG_VERSION,
            keyframes: self.keyframes.clone(),
            spans: self.spans.clone(),
            groups: self.groups.clone(),
        };
        canonical_json(&file)
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile =
            serde_json::from_str(text).map_err(|e| CatalogError::Malformed(e.to_string()))?;
        if file.version != CATALOG_VERSION {
            return Err(CatalogError::Malformed(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let catalog = Catalog {
            span_by_video: file
                .spans
                .iter()
                .enumerate()
                .map(|(i, s)| (s.video_id.clone(), i))
                .collect(),
            keyframes: file.keyframes,
            spans: file.spans,
            groups: file.groups,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn save(&self, path: &Path) -> Result<(), CatalogError> {
        fs::write(path, self.to_canonical_json()).map_err(|e| CatalogError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CatalogError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), CatalogError> {
        let bad = |msg: String| Err(CatalogError::Malformed(msg));
        if self.span_by_video.len() != self.spans.len() {
            return bad("duplicate video ids in spans".into());
        }
        for (i, kf) in self.keyframes.iter().enumerate() {
            if kf.keyframe_id != KeyframeId::from_index(i) {
                return bad(format!("keyframe at position {i} has id {}", kf.keyframe_id));
            }
            if !(kf.fps.is_finite() && kf.fps > 0.0) {
                return bad(format!("keyframe {} has invalid fps", kf.keyframe_id));
            }
            if (kf.timestamp_s - kf.frame_number as f64 / kf.fps).abs() > 1e-9 {
                return bad(format!("keyframe {} timestamp disagrees with frame/fps", kf.keyframe_id));
            }
        }
        let mut next = 1u64;
        for span in &self.spans {
            if span.s_v != next || span.e_v < span.s_v {
                return bad(format!("span of `{}` breaks the partition of [1, T]", span.video_id));
            }
            let block = &self.keyframes[(span.s_v - 1) as usize..span.e_v as usize];
            if block.iter().any(|k| k.video_id != span.video_id) {
                return bad(format!("span of `{}` covers foreign keyframes", span.video_id));
            }
            if block.windows(2).any(|w| w[0].frame_number >= w[1].frame_number) {
                return bad(format!("frames of `{}` are not ascending", span.video_id));
            }
            next = span.e_v + 1;
        }
        if next != self.keyframes.len() as u64 + 1 {
            return bad("spans do not cover every keyframe".into());
        }
        if let Some(v) = self.groups.keys().find(|v| !self.span_by_video.contains_key(*v)) {
            return bad(format!("group assigned to unknown video `{v}`"));
        }
        Ok(())
    }
}

/// Serializes through `serde_json::Value`, whose maps are ordered, so every
/// object comes out with lexicographically sorted keys.
pub(crate) fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("catalog types always serialize");
    let mut out = serde_json::to_string(&value).expect("json values always serialize");
    out.push('\n');
    out
}

fn render_image_path(template: &str, video_id: &str, frame: u64) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else {
            out.push_str(&rest[open..]);
            return out;
        };
        let key = &after[..close];
        match key {
            "video_id" => out.push_str(video_id),
            "frame" => out.push_str(&frame.to_string()),
            _ => match key.strip_prefix("frame:0").and_then(|w| w.parse::<usize>().ok()) {
                Some(width) => out.push_str(&format!("{frame:0width$}")),
                None => {
                    out.push('{');
                    out.push_str(key);
                    out.push('}');
                }
            },
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_videos() -> Catalog {
        let mut c = Catalog::new();
        c.register_video("v1", 25.0, &[0, 50, 100, 150], "{video_id}/{frame:06}.jpg")
            .unwrap();
        c.register_video("v2", 30.0, &[3, 9, 12], "{video_id}/{frame}.jpg")
            .unwrap();
        c
    }

    #[test]
    fn spans_are_contiguous_blocks() {
        let mut c = Catalog::new();
        let a = c.register_video("a", 25.0, &[0, 1, 2, 3], "x").unwrap();
        assert_eq!((a.s_v, a.e_v), (1, 4));
        let b = c.register_video("b", 25.0, &[0, 1, 2], "x").unwrap();
        assert_eq!((b.s_v, b.e_v), (5, 7));
        assert_eq!(c.span_of("a").unwrap(), &a);
        // second span starts right after the first: 4 + 1 ..= 4 + 3
        let sizes = [4u64, 3];
        assert_eq!(c.span_of("b").unwrap().s_v, sizes[0] + 1);
        assert_eq!(c.span_of("b").unwrap().e_v, sizes.iter().sum::<u64>());
    }

    #[test]
    fn registration_errors() {
        let mut c = two_videos();
        assert_eq!(
            c.register_video("v1", 25.0, &[1], "x"),
            Err(CatalogError::DuplicateVideo("v1".into()))
        );
        assert_eq!(
            c.register_video("v3", 25.0, &[], "x"),
            Err(CatalogError::EmptyScene("v3".into()))
        );
        assert!(matches!(
            c.register_video("v3", 25.0, &[1, 1], "x"),
            Err(CatalogError::NonMonotonicFrames { position: 1, .. })
        ));
        assert!(matches!(
            c.register_video("v3", 0.0, &[1], "x"),
            Err(CatalogError::InvalidFps(_))
        ));
        assert_eq!(c.span_of("nope"), Err(CatalogError::UnknownVideo("nope".into())));
        // failed registrations leave no trace
        assert_eq!(c.len(), 7);
    }

    #[test]
    fn hydrate_resolves_in_input_order() {
        let c = two_videos();
        let recs = c.hydrate(&[KeyframeId(4), KeyframeId(1)]).unwrap();
        assert_eq!(recs[0].frame_number, 150);
        assert_eq!(recs[0].timestamp_s, 6.0);
        assert_eq!(recs[0].image_path, "v1/000150.jpg");
        assert_eq!(recs[1].keyframe_id, KeyframeId(1));
        assert!(c.hydrate(&[]).unwrap().is_empty());
        assert_eq!(
            c.hydrate(&[KeyframeId(8), KeyframeId(2), KeyframeId(0)]),
            Err(CatalogError::UnknownKeyframe(vec![KeyframeId(8), KeyframeId(0)]))
        );
    }

    #[test]
    fn neighbors_stop_at_video_boundaries() {
        let c = two_videos();
        assert_eq!(c.neighbors(KeyframeId(1)).unwrap(), (None, Some(KeyframeId(2))));
        assert_eq!(
            c.neighbors(KeyframeId(6)).unwrap(),
            (Some(KeyframeId(5)), Some(KeyframeId(7)))
        );
        assert_eq!(c.neighbors(KeyframeId(4)).unwrap(), (Some(KeyframeId(3)), None));
        assert!(c.neighbors(KeyframeId(99)).is_err());
    }

    #[test]
    fn groups() {
        let mut c = two_videos();
        c.set_group("v2", "L02").unwrap();
        assert_eq!(c.group_of("v1"), None);
        assert_eq!(c.videos_in_groups(&["L02".into()]).unwrap(), vec!["v2".to_string()]);
        assert!(c.videos_in_groups(&["L09".into()]).is_err());
        assert!(c.set_group("zz", "L02").is_err());
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let mut c = two_videos();
        c.set_group("v1", "L01").unwrap();
        let text = c.to_canonical_json();
        assert!(text.starts_with("{\"groups\":"));
        let back = Catalog::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_canonical_json(), text);
    }

    #[test]
    fn load_rejects_broken_partition() {
        let c = two_videos();
        let text = c.to_canonical_json().replace("\"s_v\":5", "\"s_v\":6");
        assert!(matches!(Catalog::from_json(&text), Err(CatalogError::Malformed(_))));
        let text = c.to_canonical_json().replace("\"version\":1", "\"version\":2");
        assert!(matches!(Catalog::from_json(&text), Err(CatalogError::Malformed(_))));
    }

    #[test]
    fn image_path_templates() {
        assert_eq!(render_image_path("{video_id}/{frame:04}.webp", "L01_V002", 7), "L01_V002/0007.webp");
        assert_eq!(render_image_path("k/{frame}", "v", 12), "k/12");
        assert_eq!(render_image_path("{other}/{frame", "v", 1), "{other}/{frame");
    }

    proptest! {
        #[test]
        fn spans_partition_id_space(sizes in prop::collection::vec(1usize..20, 1..15)) {
            let mut c = Catalog::new();
            for (v, &n) in sizes.iter().enumerate() {
                let frames: Vec<u64> = (0..n as u64).map(|f| f * 3).collect();
                c.register_video(&format!("vid{v}"), 24.0, &frames, "p").unwrap();
            }
            let t = c.len() as u64;
            let mut covered = vec![0u32; t as usize];
            for s in c.spans() {
                for id in s.s_v..=s.e_v {
                    covered[(id - 1) as usize] += 1;
                }
            }
            prop_assert!(covered.iter().all(|&n| n == 1));
            let ids: Vec<KeyframeId> = (1..=t).map(KeyframeId).collect();
            let recs = c.hydrate(&ids).unwrap();
            for (id, rec) in ids.iter().zip(&recs) {
                prop_assert_eq!(*id, rec.keyframe_id);
                prop_assert!((rec.timestamp_s - rec.frame_number as f64 / rec.fps).abs() <= 1e-9);
                prop_assert!(c.span_of(&rec.video_id).unwrap().contains(*id));
            }
        }
    }
}
