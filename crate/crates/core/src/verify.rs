//! Seeded cross-checks of the fast code paths against independent oracles.
//!
//! Each check draws random instances from a ChaCha stream seeded by the
//! caller, runs the production path and a reference path, and records the
//! largest score deviation and any disagreement. A quarter of the alignment
//! instances use scores that are exact binary fractions with `λ = 0`, where
//! every route computes exactly and ties are common, so a broken tie rule
//! shows up as a path mismatch.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::catalog::{KeyframeId, VideoSpan};
use crate::dante::{
    align, dante_exhaustive, dante_naive, telescoped_value, AlignmentResult, DanteParams, SimilarityMatrix,
    TieRule, EXHAUSTIVE_LIMIT,
};
use crate::embedding::normalize;
use crate::index::TrakeIndex;
use crate::ingest::sample_keyframes;
use crate::vector_index::{ScoredHit, VectorStore};

pub const SCORE_TOLERANCE: f64 = 1e-9;
pub const LAMBDA_GRID: [f64; 4] = [0.0, 0.001, 0.005, 0.01];
pub const MONOTONICITY_GRID: [f64; 5] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1];
pub const MAX_T: usize = 2000;
pub const MAX_EVENTS: usize = 6;

/// Deliberate defects, to show the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Fast alignment keeps the latest τ and largest t on ties.
    FlipTieRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl VerifyConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        VerifyConfig {
            trials,
            seed,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub failures: usize,
    pub max_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
}

impl CheckOutcome {
    fn new(name: &'static str) -> Self {
        CheckOutcome {
            name,
            instances: 0,
            failures: 0,
            max_deviation: 0.0,
            first_failure: None,
        }
    }

    fn deviation(&mut self, d: f64) {
        if d > self.max_deviation || d.is_nan() {
            self.max_deviation = d;
        }
    }

    fn fail(&mut self, detail: impl FnOnce() -> String) {
        self.failures += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(detail());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub trials: usize,
    pub seed: u64,
    /// True when no instance was checked at all.
    pub vacuous: bool,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn max_deviation(&self) -> f64 {
        self.checks.iter().map(|c| c.max_deviation).fold(0.0, f64::max)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<5} {:<24} instances={:<6} failures={:<4} max_deviation={:.3e}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.instances,
                c.failures,
                c.max_deviation
            )?;
            if let Some(detail) = &c.first_failure {
                writeln!(f, "      first failure: {detail}")?;
            }
        }
        if self.vacuous {
            writeln!(f, "note: vacuous run (trials = 0), nothing was checked")?;
        }
        write!(
            f,
            "{} trials={} seed={} max_deviation={:.3e}",
            if self.passed() { "OK" } else { "FAILED" },
            self.trials,
            self.seed,
            self.max_deviation()
        )
    }
}

/// A random single-video alignment instance.
#[derive(Debug, Clone)]
pub struct AlignmentInstance {
    pub matrix: SimilarityMatrix,
    pub span: VideoSpan,
    pub lambda: f64,
    /// Scores are multiples of 1/4 and λ = 0.
    pub exact: bool,
}

fn binomial_at_most(n: usize, k: usize, limit: u128) -> bool {
    let k = k.min(n.saturating_sub(k));
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > limit {
            return false;
        }
    }
    true
}

/// Draws one instance; `T ≤ 2000`, `N ≤ 6`, λ from [`LAMBDA_GRID`].
pub fn random_instance(rng: &mut ChaCha8Rng) -> AlignmentInstance {
    let n = rng.random_range(1..=MAX_EVENTS);
    let roll: f64 = rng.random();
    let len = if roll < 0.70 {
        rng.random_range(n..=12.max(n))
    } else if roll < 0.97 {
        rng.random_range(n..=200)
    } else {
        rng.random_range(n..=MAX_T)
    };
    let t = rng.random_range(len..=MAX_T.min(len + 300));
    let s_v = rng.random_range(1..=(t - len + 1)) as u64;
    let exact = rng.random_range(0..4) == 0;
    let rows = (0..n)
        .map(|_| {
            (0..t)
                .map(|_| {
                    if exact {
                        rng.random_range(-4i32..=4) as f64 / 4.0
                    } else {
                        rng.random_range(-1.0..=1.0)
                    }
                })
                .collect()
        })
        .collect();
    AlignmentInstance {
        matrix: SimilarityMatrix::from_rows(rows).expect("generated scores are cosines"),
        span: VideoSpan {
            video_id: "synthetic".into(),
            s_v,
            e_v: s_v + len as u64 - 1,
        },
        lambda: if exact { 0.0 } else { LAMBDA_GRID[rng.random_range(0..LAMBDA_GRID.len())] },
        exact,
    }
}

fn fast_alignment(inst: &AlignmentInstance, fault: Option<Fault>) -> AlignmentResult {
    let ties = match fault {
        Some(Fault::FlipTieRule) => TieRule::Latest,
        None => TieRule::Earliest,
    };
    align(&inst.matrix, &inst.span, inst.lambda, inst.span.s_v, ties, &mut ()).expect("instance is feasible")
}

fn compare(check: &mut CheckOutcome, label: &str, fast: &AlignmentResult, other: &AlignmentResult) {
    let d = (fast.score - other.score).abs();
    check.deviation(d);
    if d > SCORE_TOLERANCE || fast.path != other.path {
        check.fail(|| {
            format!(
                "{label}: fast {:.12} {:?} vs {:.12} {:?}",
                fast.score,
                fast.path.iter().map(|k| k.0).collect::<Vec<_>>(),
                other.score,
                other.path.iter().map(|k| k.0).collect::<Vec<_>>()
            )
        });
    }
}

/// Fast vs naive vs exhaustive, plus the telescoping identity and path shape.
pub fn check_alignment(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> (CheckOutcome, CheckOutcome, CheckOutcome) {
    let mut equivalence = CheckOutcome::new("dante_equivalence");
    let mut telescoping = CheckOutcome::new("telescoping_identity");
    let mut exhaustive = CheckOutcome::new("dante_exhaustive");
    for _ in 0..cfg.trials {
        let inst = random_instance(rng);
        let params = DanteParams::new(inst.lambda, 1).unwrap();
        let fast = fast_alignment(&inst, cfg.fault);
        let naive = dante_naive(&inst.matrix, &inst.span, &params).unwrap();
        equivalence.instances += 1;
        compare(&mut equivalence, "naive", &fast, &naive);

        let n = inst.matrix.n_events();
        if binomial_at_most(inst.span.len(), n, EXHAUSTIVE_LIMIT) {
            let brute = dante_exhaustive(&inst.matrix, &inst.span, &params).unwrap();
            exhaustive.instances += 1;
            compare(&mut exhaustive, "exhaustive", &fast, &brute);
        }

        telescoping.instances += 1;
        let shape_ok = fast.path.len() == n
            && fast.path.windows(2).all(|w| w[0] < w[1])
            && fast.path.iter().all(|&t| inst.span.contains(t));
        let d = (fast.score - telescoped_value(&inst.matrix, &fast.path, inst.lambda)).abs();
        telescoping.deviation(d);
        if !shape_ok || d > SCORE_TOLERANCE {
            telescoping.fail(|| format!("score {} path {:?}", fast.score, fast.path));
        }
    }
    (equivalence, exhaustive, telescoping)
}

pub fn check_lambda_monotonicity(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut check = CheckOutcome::new("lambda_monotonicity");
    for _ in 0..cfg.trials.div_ceil(5) {
        let inst = random_instance(rng);
        check.instances += 1;
        let mut previous = f64::INFINITY;
        for lambda in MONOTONICITY_GRID {
            let inst = AlignmentInstance { lambda, ..inst.clone() };
            let score = fast_alignment(&inst, cfg.fault).score;
            if score > previous {
                check.fail(|| format!("score rose from {previous} to {score} at λ = {lambda}"));
            }
            previous = score;
        }
    }
    check
}

/// Score every row with a scalar loop, sort everything, keep `k`.
pub fn argsort_topk(store: &VectorStore, query: &[f32], k: usize) -> Vec<ScoredHit> {
    let mut all = Vec::with_capacity(store.len());
    for pos in 0..store.len() {
        let row = store.row(pos);
        let mut score = 0.0f64;
        for j in 0..query.len() {
            score += row[j] as f64 * query[j] as f64;
        }
        all.push(ScoredHit {
            keyframe_id: store.ids()[pos],
            score,
        });
    }
    all.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite scores")
            .then(a.keyframe_id.cmp(&b.keyframe_id))
    });
    all.truncate(k);
    all
}

/// A random unit-row store; about one row in eight duplicates an earlier
/// row so that exact score ties occur.
pub fn random_store(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> VectorStore {
    let mut data: Vec<Vec<f32>> = Vec::with_capacity(rows);
    for i in 0..rows {
        if i > 0 && rng.random_range(0..8) == 0 {
            let j = rng.random_range(0..i);
            data.push(data[j].clone());
        } else {
            data.push((0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect());
        }
    }
    VectorStore::from_raw(
        dim,
        data.into_iter()
            .enumerate()
            .map(|(i, v)| (KeyframeId::from_index(i), v))
            .collect(),
    )
    .expect("random rows are non-zero")
}

fn compare_topk(check: &mut CheckOutcome, store: &VectorStore, query: &[f32], k: usize, block: usize) {
    check.instances += 1;
    let oracle = argsort_topk(store, query, k);
    let serial = store.search_topk_serial(query, k, None, None).unwrap();
    let blocked = store.search_topk_blocked(query, k, None, None, block).unwrap();
    let ids = |h: &[ScoredHit]| h.iter().map(|x| x.keyframe_id).collect::<Vec<_>>();
    for (a, b) in serial.iter().zip(&oracle) {
        check.deviation((a.score - b.score).abs());
    }
    if ids(&serial) != ids(&oracle) || serial != blocked {
        check.fail(|| format!("k={k} block={block}: {:?} vs oracle {:?}", ids(&serial), ids(&oracle)));
    }
}

pub fn check_topk(cfg: &VerifyConfig, rng: &mut ChaCha8Rng, index: Option<&TrakeIndex>) -> CheckOutcome {
    let mut check = CheckOutcome::new("topk_vs_argsort");
    for _ in 0..cfg.trials.div_ceil(2) {
        let t = rng.random_range(1..=1000);
        let store = random_store(rng, t, 64);
        let query = if rng.random_bool(0.5) {
            store.lookup(KeyframeId(rng.random_range(1..=t as u64))).unwrap().into_inner()
        } else {
            normalize(&(0..64).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>())
                .unwrap()
                .into_inner()
        };
        let k = rng.random_range(1..=50);
        let block = rng.random_range(16..=256);
        compare_topk(&mut check, &store, &query, k, block);
    }
    if let Some(index) = index.filter(|i| !i.vectors.is_empty()) {
        let store = &index.vectors;
        for _ in 0..cfg.trials.min(100) {
            let anchor = KeyframeId(rng.random_range(1..=store.len() as u64));
            let query = store.lookup(anchor).unwrap();
            compare_topk(&mut check, store, &query, rng.random_range(1..=50), 512);
        }
    }
    check
}

pub fn check_keyframe_formula(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut check = CheckOutcome::new("keyframe_formula");
    let one = |a: u64, b: u64, check: &mut CheckOutcome| {
        check.instances += 1;
        let got = sample_keyframes(a, b).unwrap();
        let want: [u64; 4] = [0u128, 1, 2, 3].map(|i| (a as u128 + i * (b - a) as u128 / 3) as u64);
        let ok = got == want && got[0] == a && got[3] == b && got.windows(2).all(|w| w[0] <= w[1]);
        if !ok {
            check.fail(|| format!("({a}, {b}) -> {got:?}, expected {want:?}"));
        }
    };
    if cfg.trials > 0 {
        for a in 0..=50u64 {
            for w in 0..=50u64 {
                one(a, a + w, &mut check);
            }
        }
    }
    for _ in 0..cfg.trials {
        let a = rng.random_range(0..u64::MAX / 2);
        let b = a + rng.random_range(51..u64::MAX / 2);
        one(a, b, &mut check);
    }
    check
}

/// Runs every check. With an index, the top-k check also runs against the
/// index's own store.
pub fn run(cfg: &VerifyConfig, index: Option<&TrakeIndex>) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (equivalence, exhaustive, telescoping) = check_alignment(cfg, &mut rng);
    let monotonicity = check_lambda_monotonicity(cfg, &mut rng);
    let topk = check_topk(cfg, &mut rng, index);
    let formula = check_keyframe_formula(cfg, &mut rng);
    let checks = vec![equivalence, exhaustive, telescoping, monotonicity, topk, formula];
    VerifyReport {
        trials: cfg.trials,
        seed: cfg.seed,
        vacuous: checks.iter().all(|c| c.instances == 0),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let report = run(&VerifyConfig::new(60, 42), None);
        assert!(report.passed(), "{report}");
        assert!(!report.vacuous);
        assert!(report.max_deviation() <= SCORE_TOLERANCE);
        assert!(report.check("dante_exhaustive").unwrap().instances > 20);
    }

    #[test]
    fn zero_trials_is_vacuous() {
        let report = run(&VerifyConfig::new(0, 1), None);
        assert!(report.passed());
        assert!(report.vacuous);
        assert!(report.to_string().contains("vacuous"));
    }

    #[test]
    fn flipped_tie_rule_is_caught() {
        let cfg = VerifyConfig {
            fault: Some(Fault::FlipTieRule),
            ..VerifyConfig::new(60, 42)
        };
        let report = run(&cfg, None);
        assert!(!report.passed());
        assert!(report.check("dante_equivalence").unwrap().failures > 0);
    }

    #[test]
    fn same_seed_same_report() {
        let a = run(&VerifyConfig::new(20, 9), None);
        let b = run(&VerifyConfig::new(20, 9), None);
        assert_eq!(a, b);
    }
}
