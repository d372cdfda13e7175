use trake_wasm_demo::{align, align_json, scene_keyframes, ToyCorpus};

#[test]
fn align_worked_example() {
    // one event per row; the second event must come after the first
    let rows = vec![vec![0.1, 0.9, 0.2], vec![0.8, 0.1, 0.7]];
    let v = align(rows.clone(), 0.0).unwrap();
    assert_eq!(v.path, vec![2, 3]);
    assert!((v.score - 1.6).abs() < 1e-12);
    assert_eq!(v.event_scores, vec![0.9, 0.7]);
    assert_eq!(v.penalty, 0.0);

    let v = align(rows, 0.5).unwrap();
    assert_eq!(v.path, vec![2, 3]);
    assert!((v.score - 1.1).abs() < 1e-12);
    assert!((v.penalty - 0.5).abs() < 1e-12);
}

#[test]
fn align_json_errors() {
    assert!(align_json("[[0.5, 0.2]]", 0.001).unwrap().contains("\"path\":[1]"));
    assert!(align_json("not json", 0.0).is_err());
    assert!(align_json("[[0.5], [0.2]]", 0.0).is_err());
    assert!(align_json("[[0.5, 0.1]]", -1.0).is_err());
    assert!(align_json("[[2.0]]", 0.0).is_err());
    assert!(align_json("[[0.5], [0.1, 0.2]]", 0.0).is_err());
}

#[test]
fn scene_sampling() {
    assert_eq!(scene_keyframes(0.0, 9.0).unwrap(), vec![0.0, 3.0, 6.0, 9.0]);
    assert_eq!(scene_keyframes(10.0, 11.0).unwrap(), vec![10.0, 10.0, 10.0, 11.0]);
    assert!(scene_keyframes(5.0, 4.0).is_err());
    assert!(scene_keyframes(-1.0, 4.0).is_err());
    assert!(scene_keyframes(1.5, 4.0).is_err());
    assert!(scene_keyframes(0.0, f64::NAN).is_err());
}

#[test]
fn toy_search() {
    let corpus = "a red kite over the beach\n\nmarket stall with lanterns\na blue bicycle\n";
    let idx = ToyCorpus::build(corpus, 64).unwrap();
    assert_eq!(idx.len(), 3);
    let hits = idx.search("market stall with lanterns", 2).unwrap();
    assert_eq!(hits[0].line, 2);
    assert!((hits[0].score - 1.0).abs() < 1e-6);
    assert_eq!(hits.len(), 2);
    assert!(idx.search("   ", 2).is_err());
    assert!(ToyCorpus::build("\n  \n", 64).is_err());
}
