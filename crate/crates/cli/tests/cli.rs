mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use serde_json::{json, Value};

use common::*;

/// Keyframe count from the scene file, by direct formula evaluation.
fn expected_keyframes(scenes_jsonl: &str) -> usize {
    let mut frames: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
    for line in scenes_jsonl.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).unwrap();
        let (a, b) = (v["a"].as_u64().unwrap() as u128, v["b"].as_u64().unwrap() as u128);
        let set = frames.entry(v["video_id"].as_str().unwrap().to_owned()).or_default();
        for i in 0..4u128 {
            set.insert((a + i * (b - a) / 3) as u64);
        }
    }
    frames.values().map(BTreeSet::len).sum()
}

#[test]
fn ingest_prints_scene_math() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("in");
    assert_eq!(code(&trake(&["synth", "--out", s(&inputs)])), 0);
    let idx = tmp.path().join("idx");
    let o = trake(&[
        "ingest",
        "--scenes",
        s(&inputs.join("scenes.jsonl")),
        "--embeddings",
        s(&inputs.join("embeddings.trke")),
        "--ocr",
        s(&inputs.join("ocr.jsonl")),
        "--out",
        s(&idx),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let want = expected_keyframes(&fs::read_to_string(inputs.join("scenes.jsonl")).unwrap());
    assert_eq!(summary["keyframes"], want);
    assert_eq!(summary["videos"], 50);
    assert_eq!(summary["dim"], 64);
    for f in ["catalog.json", "embeddings.trke", "text_index.json"] {
        assert!(idx.join(f).is_file());
    }
}

#[test]
fn ingest_handles_uneven_scenes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // scene [0, 2] samples 0, 0, 1, 2: three distinct frames
    fs::write(
        dir.join("scenes.jsonl"),
        "{\"video_id\":\"A\",\"a\":0,\"b\":2,\"fps\":10.0}\n{\"video_id\":\"A\",\"a\":5,\"b\":14,\"fps\":10.0}\n{\"video_id\":\"B\",\"a\":100,\"b\":100,\"fps\":30.0}\n",
    )
    .unwrap();
    fs::write(dir.join("ocr.jsonl"), "{\"video_id\":\"B\",\"frame_number\":100,\"ocr_text\":\"hello\"}\n").unwrap();
    let want = expected_keyframes(&fs::read_to_string(dir.join("scenes.jsonl")).unwrap());
    assert_eq!(want, 3 + 4 + 1);
    let mut bytes = b"TRKE".to_vec();
    bytes.extend(1u32.to_le_bytes());
    bytes.extend(2u32.to_le_bytes());
    bytes.extend((want as u64).to_le_bytes());
    for id in 1..=want as u64 {
        bytes.extend(id.to_le_bytes());
        bytes.extend(1.0f32.to_le_bytes());
        bytes.extend((id as f32).to_le_bytes());
    }
    fs::write(dir.join("e.trke"), &bytes).unwrap();
    let run = |dim: &str| {
        trake(&[
            "ingest", "--scenes", s(&dir.join("scenes.jsonl")), "--embeddings", s(&dir.join("e.trke")),
            "--ocr", s(&dir.join("ocr.jsonl")), "--out", s(&dir.join("idx")), "--dim", dim,
        ])
    };
    let o = run("2");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(serde_json::from_str::<Value>(stdout(&o).trim()).unwrap()["keyframes"], want);

    let o = run("3");
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("DimensionMismatch"), "{}", stderr(&o));

    // one record short
    fs::write(dir.join("e.trke"), {
        let mut b = bytes.clone();
        b.truncate(bytes.len() - 16);
        b[12..20].copy_from_slice(&(want as u64 - 1).to_le_bytes());
        b
    })
    .unwrap();
    let o = run("2");
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("MissingEmbedding"), "{}", stderr(&o));
}

#[test]
fn ingest_missing_embeddings_file() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("in");
    assert_eq!(code(&trake(&["synth", "--out", s(&inputs)])), 0);
    let o = trake(&[
        "ingest",
        "--scenes",
        s(&inputs.join("scenes.jsonl")),
        "--embeddings",
        s(&inputs.join("missing.trke")),
        "--ocr",
        s(&inputs.join("ocr.jsonl")),
        "--out",
        s(&tmp.path().join("idx")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("MissingEmbedding"), "{}", stderr(&o));
    assert!(!tmp.path().join("idx").exists());
}

#[test]
fn search_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, idx, info) = synth_and_ingest(tmp.path(), "planted", 7);
    let events: Vec<String> = serde_json::from_value(info["events"].clone()).unwrap();
    let mut args = vec!["search", "--index", s(&idx), "--mode", "dante", "--top-k", "3"];
    for e in &events {
        args.extend(["--query", e.as_str()]);
    }
    let o = trake(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let body: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(body["hits"][0]["video_id"], info["video_id"]);
    let path: Vec<Value> = body["hits"][0]["path"].as_array().unwrap().iter().map(|k| k["keyframe_id"].clone()).collect();
    assert_eq!(Value::from(path), info["keyframes"]);

    let o = trake(&["search", "--index", s(&idx), "--mode", "ocr", "--query", "qqqqq"]);
    assert_eq!(code(&o), 0);
    let body: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(body["hits"], json!([]));

    let o = trake(&["search", "--index", s(&idx), "--mode", "semantic", "--keyframe-id", "5", "--top-k", "1", "--format", "table"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().nth(1).unwrap().split_whitespace().nth(1) == Some("5"));

    let o = trake(&["search", "--index", s(&tmp.path().join("nope")), "--mode", "ocr", "--query", "x"]);
    assert_eq!(code(&o), 2);

    let o = trake(&["search", "--index", s(&idx), "--mode", "dante", "--query", "a", "--lambda", "2"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("InvalidLambda"));
    let o = trake(&["search", "--index", s(&idx), "--mode", "ocr", "--query", " "]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("EmptyQuery"));
}

#[test]
fn index_dir_from_env_and_flag_wins() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, idx, _) = synth_and_ingest(tmp.path(), "planted", 7);
    let run = |extra: &[&str], env: &str| {
        std::process::Command::new(BIN)
            .args(["search", "--mode", "semantic", "--keyframe-id", "1", "--top-k", "1"])
            .args(extra)
            .env("TRAKE_INDEX_DIR", env)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run(&[], s(&idx))), 0);
    assert_eq!(code(&run(&["--index", s(&idx)], "/definitely/missing")), 0);
    assert_eq!(code(&run(&["--index", "/definitely/missing"], s(&idx))), 2);
}

#[test]
fn enhance_with_fixture_rewrites() {
    let tmp = tempfile::tempdir().unwrap();
    let (inputs, idx, info) = synth_and_ingest(tmp.path(), "quest", 3);
    let base = ["search", "--index", s(&idx), "--mode", "semantic", "--query", "Labubu", "--top-k", "1"];
    let plain: Value = serde_json::from_str(stdout(&trake(&base)).trim()).unwrap();
    let fixture = inputs.join("rewrites.json");
    let mut args = base.to_vec();
    args.extend(["--enhance", "--rewrites", s(&fixture)]);
    let o = trake(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let enhanced: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(enhanced["rewrite"]["rewritten_query"], info["rewritten_query"]);
    assert_eq!(enhanced["hits"][0]["keyframe_id"], info["target"]);
    assert_ne!(plain["hits"][0]["keyframe_id"], info["target"]);
}

#[test]
fn verify_exit_codes() {
    let o = trake(&["verify", "--trials", "200", "--seed", "5", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(report["vacuous"], false);

    let o = trake(&["verify", "--trials", "200", "--seed", "5", "--inject-fault", "tie-rule"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL  dante_equivalence"));

    let o = trake(&["verify", "--trials", "0"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("vacuous"));
}

#[test]
fn verify_against_index() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, idx, _) = synth_and_ingest(tmp.path(), "planted", 7);
    let o = trake(&["verify", "--trials", "20", "--index", s(&idx), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let topk = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "topk_vs_argsort").unwrap();
    assert_eq!(topk["instances"], 30);
}

#[test]
fn deterministic_given_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&trake(&["synth", "--out", s(&a), "--seed", "11"])), 0);
    assert_eq!(code(&trake(&["synth", "--out", s(&b), "--seed", "11"])), 0);
    for f in ["scenes.jsonl", "embeddings.trke", "ocr.jsonl", "descriptors.json", "rewrites.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let v1 = trake(&["verify", "--trials", "50", "--seed", "9", "--format", "json"]);
    let v2 = trake(&["verify", "--trials", "50", "--seed", "9", "--format", "json"]);
    assert_eq!(v1.stdout, v2.stdout);
}

#[test]
fn serve_health_and_cli_parity() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, idx, info) = synth_and_ingest(tmp.path(), "planted", 7);
    let server = Server::start(&["--index", s(&idx)]);
    let (status, body) = server.get("/api/health");
    assert_eq!(status, 200);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["status"], "ok");

    let events: Vec<String> = serde_json::from_value(info["events"].clone()).unwrap();
    let mut dante_args = vec!["search", "--index", s(&idx), "--mode", "dante", "--top-k", "5", "--lambda", "0.001"];
    for e in &events {
        dante_args.extend(["--query", e.as_str()]);
    }
    let cases: Vec<(Vec<&str>, &str, Value)> = vec![
        (
            vec!["search", "--index", s(&idx), "--mode", "semantic", "--query", "a red kite", "--top-k", "7"],
            "/api/search/semantic",
            json!({"query": "a red kite", "top_k": 7}),
        ),
        (
            vec!["search", "--index", s(&idx), "--mode", "ocr", "--query", "SALE NEWS", "--top-k", "7", "--video", "L01_V002"],
            "/api/search/ocr",
            json!({"query": "SALE NEWS", "top_k": 7, "video_filter": ["L01_V002"]}),
        ),
        (dante_args.clone(), "/api/search/dante", json!({"queries": events, "top_k": 5, "lambda": 0.001})),
    ];
    for (args, route, body) in cases {
        let o = trake(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let (status, api) = server.post(route, &body);
        assert_eq!(status, 200, "{api}");
        assert_eq!(strip_timing(stdout(&o).trim()), strip_timing(&api), "{route}");
    }
}

#[test]
fn serve_failures_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, idx, _) = synth_and_ingest(tmp.path(), "planted", 7);
    let o = trake(&["serve", "--index", s(&idx), "--addr", "not-an-address"]);
    assert_eq!(code(&o), 2);
    let o = trake(&["serve", "--index", s(&tmp.path().join("missing")), "--addr", "127.0.0.1:0"]);
    assert_eq!(code(&o), 2);
    fs::remove_file(idx.join("catalog.json")).unwrap();
    let o = trake(&["serve", "--index", s(&idx), "--addr", "127.0.0.1:0"]);
    assert_eq!(code(&o), 2);

    let (_, idx2, _) = synth_and_ingest(tmp.path(), "quest", 1);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = trake(&["serve", "--index", s(&idx2), "--addr", &addr]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Bind"));
}

#[test]
fn strip_timing_examples() {
    assert_eq!(strip_timing("{\"a\":1,\"took_ms\":12,\"b\":2}"), "{\"a\":1,\"b\":2}");
    assert_eq!(strip_timing("{\"a\":1,\"took_ms\":0}"), "{\"a\":1}");
}
