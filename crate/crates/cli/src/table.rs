use std::fmt::Write;

use trake_server::api::{Hit, SearchResponse};

pub fn search(resp: &SearchResponse) -> String {
    let mut out = String::new();
    if let Some(rw) = &resp.rewrite {
        let _ = writeln!(out, "rewrite: {}", serde_json::to_string(rw).unwrap_or_default());
    }
    if resp.hits.is_empty() {
        out.push_str("no hits\n");
        return out;
    }
    match &resp.hits[0] {
        Hit::Keyframe(_) => {
            let _ = writeln!(
                out,
                "{:>4}  {:>9}  {:<14} {:>8}  {:>10}  {:>10}  ocr",
                "rank", "keyframe", "video", "frame", "time_s", "score"
            );
            for (i, h) in resp.hits.iter().filter_map(Hit::as_keyframe).enumerate() {
                let r = &h.keyframe.record;
                let _ = writeln!(
                    out,
                    "{:>4}  {:>9}  {:<14} {:>8}  {:>10.3}  {:>10.6}  {}",
                    i + 1,
                    r.keyframe_id.0,
                    r.video_id,
                    r.frame_number,
                    r.timestamp_s,
                    h.score,
                    h.keyframe.ocr_text.as_deref().unwrap_or("")
                );
            }
        }
        Hit::Video(_) => {
            let _ = writeln!(out, "{:>4}  {:<14} {:>10}  path", "rank", "video", "score");
            for (i, h) in resp.hits.iter().filter_map(Hit::as_video).enumerate() {
                let path: Vec<String> = h
                    .path
                    .iter()
                    .map(|k| format!("{}@{:.2}s", k.record.keyframe_id.0, k.record.timestamp_s))
                    .collect();
                let _ = writeln!(out, "{:>4}  {:<14} {:>10.6}  {}", i + 1, h.video_id, h.score, path.join(" "));
            }
        }
    }
    out
}
