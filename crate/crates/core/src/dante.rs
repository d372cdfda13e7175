//! Ordered multi-event alignment over per-video keyframe timelines.
//!
//! Given `N` event queries and the cosine matrix `S[i, t]` against every
//! keyframe, each video `v` with span `[s_v, e_v]` is scored by
//!
//! ```text
//! DP[1, t] = S[1, t]
//! DP[i, t] = S[i, t] + max_{τ ∈ [s_v, t−1]} (DP[i−1, τ] − λ(t − τ))
//! score(v) = max_t DP[N, t]
//! ```
//!
//! Pulling `λt` out of the max turns the inner maximization into a running
//! max of `DP[i−1, τ] + λτ`, so each video costs `O(N · L)` with
//! `L = e_v − s_v + 1`. The path is recovered from stored argmaxes.
//!
//! Positions inside the running max are measured from the start of the span
//! rather than from global index 1. Both choices give the same DP values up to
//! rounding, but local positions keep `λτ` small next to the similarity
//! scores on catalogs with many keyframes.
//!
//! Ties: the earliest `τ` wins inside the running max and the smallest `t`
//! wins in the final max. Together these select, among optimal paths, the one
//! that is smallest when compared from the last event backwards.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{KeyframeId, VideoSpan};
use crate::embedding::EmbeddingVector;
use crate::vector_index::{VectorIndexError, VectorStore};

pub const DEFAULT_LAMBDA: f64 = 0.001;
pub const MAX_LAMBDA: f64 = 1.0;
/// Upper bound on the number of tuples [`dante_exhaustive`] will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

const SCORE_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DanteError {
    #[error("video span has {len} keyframes but the query has {events} events")]
    InfeasibleAlignment { len: usize, events: usize },
    #[error("span [{s_v}, {e_v}] lies outside the similarity matrix (T = {t})")]
    InvalidSpan { s_v: u64, e_v: u64, t: usize },
    #[error("lambda must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("top_k must be at least 1")]
    InvalidTopK,
    #[error("at least one event query is required")]
    NoEvents,
    #[error("no video has at least {0} keyframes")]
    NoFeasibleVideo(usize),
    #[error("C({len}, {events}) tuples exceeds the enumeration limit")]
    TooLarge { len: usize, events: usize },
    #[error("similarity matrix is malformed: {0}")]
    InvalidScores(String),
    #[error(transparent)]
    Vector(#[from] VectorIndexError),
}

/// `N × T` cosine scores; column `t − 1` holds keyframe `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n_events: usize,
    n_keyframes: usize,
    scores: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, DanteError> {
        let n_events = rows.len();
        if n_events == 0 {
            return Err(DanteError::NoEvents);
        }
        let n_keyframes = rows[0].len();
        if rows.iter().any(|r| r.len() != n_keyframes) {
            return Err(DanteError::InvalidScores("rows differ in length".into()));
        }
        let scores: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(bad) = scores
            .iter()
            .find(|s| !s.is_finite() || s.abs() > 1.0 + SCORE_SLACK)
        {
            return Err(DanteError::InvalidScores(format!("entry {bad} is not a cosine")));
        }
        Ok(SimilarityMatrix {
            n_events,
            n_keyframes,
            scores,
        })
    }

    /// One [`VectorStore::row_scores`] scan per event. The store's ids must
    /// be exactly `1..=T`.
    pub fn from_queries(store: &VectorStore, queries: &[EmbeddingVector]) -> Result<Self, DanteError> {
        if queries.is_empty() {
            return Err(DanteError::NoEvents);
        }
        let contiguous = store
            .ids()
            .iter()
            .enumerate()
            .all(|(i, id)| *id == KeyframeId::from_index(i));
        if !contiguous {
            return Err(DanteError::InvalidScores("store ids are not 1..=T".into()));
        }
        let mut scores = Vec::with_capacity(queries.len() * store.len());
        for q in queries {
            scores.extend(store.row_scores(q)?);
        }
        Ok(SimilarityMatrix {
            n_events: queries.len(),
            n_keyframes: store.len(),
            scores,
        })
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_keyframes(&self) -> usize {
        self.n_keyframes
    }

    /// Row `i` (0-based event), indexed by keyframe position.
    pub fn row(&self, event: usize) -> &[f64] {
        &self.scores[event * self.n_keyframes..(event + 1) * self.n_keyframes]
    }

    pub fn get(&self, event: usize, t: KeyframeId) -> f64 {
        self.row(event)[t.index()]
    }

    fn check_span(&self, span: &VideoSpan) -> Result<(), DanteError> {
        if span.s_v == 0 || span.s_v > span.e_v || span.e_v > self.n_keyframes as u64 {
            return Err(DanteError::InvalidSpan {
                s_v: span.s_v,
                e_v: span.e_v,
                t: self.n_keyframes,
            });
        }
        if span.len() < self.n_events {
            return Err(DanteError::InfeasibleAlignment {
                len: span.len(),
                events: self.n_events,
            });
        }
        Ok(())
    }

    /// The span's slice of row `event`.
    fn span_row(&self, event: usize, span: &VideoSpan) -> &[f64] {
        &self.row(event)[(span.s_v - 1) as usize..span.e_v as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DanteParams {
    lambda: f64,
    top_k: usize,
}

impl Default for DanteParams {
    fn default() -> Self {
        DanteParams {
            lambda: DEFAULT_LAMBDA,
            top_k: 10,
        }
    }
}

impl DanteParams {
    pub fn new(lambda: f64, top_k: usize) -> Result<Self, DanteError> {
        if !(0.0..=MAX_LAMBDA).contains(&lambda) {
            return Err(DanteError::InvalidLambda(lambda));
        }
        if top_k == 0 {
            return Err(DanteError::InvalidTopK);
        }
        Ok(DanteParams { lambda, top_k })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub video_id: String,
    pub score: f64,
    /// One keyframe per event, strictly increasing, inside the video's span.
    pub path: Vec<KeyframeId>,
}

impl AlignmentResult {
    /// `Σᵢ S[i, path[i]] − λ·(path[N−1] − path[0])`, the objective the DP
    /// maximizes once the per-step penalties telescope.
    pub fn telescoped_score(&self, s: &SimilarityMatrix, lambda: f64) -> f64 {
        telescoped_value(s, &self.path, lambda)
    }
}

pub fn telescoped_value(s: &SimilarityMatrix, path: &[KeyframeId], lambda: f64) -> f64 {
    let sum: f64 = path.iter().enumerate().map(|(i, &t)| s.get(i, t)).sum();
    let spread = (path[path.len() - 1].0 - path[0].0) as f64;
    sum - lambda * spread
}

/// Counts inner-loop steps of the alignment kernel.
pub trait StepCounter {
    fn step(&mut self);
}

impl StepCounter for () {
    #[inline(always)]
    fn step(&mut self) {}
}

impl StepCounter for u64 {
    #[inline(always)]
    fn step(&mut self) {
        *self += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TieRule {
    /// Earliest τ, smallest final t.
    Earliest,
    /// Latest τ, largest final t. Only used to prove the cross-checks notice.
    Latest,
}

impl TieRule {
    #[inline(always)]
    fn takes(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            TieRule::Earliest => candidate > incumbent,
            TieRule::Latest => candidate >= incumbent,
        }
    }
}

/// Running-max alignment of one video.
pub fn dante_score_video(
    s: &SimilarityMatrix,
    span: &VideoSpan,
    params: &DanteParams,
) -> Result<AlignmentResult, DanteError> {
    align(s, span, params.lambda, span.s_v, TieRule::Earliest, &mut ())
}

/// [`dante_score_video`] that also counts inner-loop steps into `counter`.
pub fn dante_score_video_counted(
    s: &SimilarityMatrix,
    span: &VideoSpan,
    params: &DanteParams,
    counter: &mut u64,
) -> Result<AlignmentResult, DanteError> {
    align(s, span, params.lambda, span.s_v, TieRule::Earliest, counter)
}

/// The running-max recurrence with penalty positions measured from
/// `origin` (`s_v` for span-local, `0` for raw global indices).
pub fn dante_score_video_with_origin(
    s: &SimilarityMatrix,
    span: &VideoSpan,
    params: &DanteParams,
    origin: u64,
) -> Result<AlignmentResult, DanteError> {
    align(s, span, params.lambda, origin, TieRule::Earliest, &mut ())
}

pub(crate) fn align<C: StepCounter>(
    s: &SimilarityMatrix,
    span: &VideoSpan,
    lambda: f64,
    origin: u64,
    ties: TieRule,
    counter: &mut C,
) -> Result<AlignmentResult, DanteError> {
    s.check_span(span)?;
    let n = s.n_events();
    let len = span.len();
    let offset = (span.s_v as f64) - (origin as f64);
    let pos = |j: usize| offset + j as f64;

    let mut prev: Vec<f64> = s.span_row(0, span).to_vec();
    for _ in 0..len {
        counter.step();
    }
    let mut cur = vec![0.0f64; len];
    // back[(i − 1) · len + j]: argmax τ (span-local) for DP[i, j]
    let mut back = vec![u32::MAX; (n - 1) * len];

    for i in 1..n {
        let row = s.span_row(i, span);
        let links = &mut back[(i - 1) * len..i * len];
        let mut running = f64::NEG_INFINITY;
        let mut arg = u32::MAX;
        for j in 0..len {
            counter.step();
            if j > 0 {
                let candidate = prev[j - 1] + lambda * pos(j - 1);
                if ties.takes(candidate, running) {
                    running = candidate;
                    arg = (j - 1) as u32;
                }
            }
            cur[j] = row[j] + running - lambda * pos(j);
            links[j] = arg;
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut best = f64::NEG_INFINITY;
    let mut best_j = 0usize;
    for (j, &v) in prev.iter().enumerate() {
        if ties.takes(v, best) {
            best = v;
            best_j = j;
        }
    }

    let mut local = vec![0usize; n];
    local[n - 1] = best_j;
    for i in (1..n).rev() {
        local[i - 1] = back[(i - 1) * len + local[i]] as usize;
    }
    Ok(AlignmentResult {
        video_id: span.video_id.clone(),
        score: best,
        path: local
            .into_iter()
            .map(|j| KeyframeId(span.s_v + j as u64))
            .collect(),
    })
}

/// Literal `O(N · L²)` evaluation of the recurrence. Reference only.
pub fn dante_naive(
    s: &SimilarityMatrix,
    span: &VideoSpan,
    params: &DanteParams,
) -> Result<AlignmentResult, DanteError> {
    s.check_span(span)?;
    let n = s.n_events();
    let len = span.len();
    let lambda = params.lambda;
    let mut dp = vec![vec![f64::NEG_INFINITY; len]; n];
    let mut back = vec![vec![usize::MAX; len]; n];
    dp[0].copy_from_slice(s.span_row(0, span));
    for i in 1..n {
        let row = s.span_row(i, span);
        for t in 0..len {
            let mut best = f64::NEG_INFINITY;
            let mut arg = usize::MAX;
            for tau in 0..t {
                let v = dp[i - 1][tau] - lambda * (t - tau) as f64;
                if v > best {
                    best = v;
                    arg = tau;
                }
            }
            dp[i][t] = row[t] + best;
            back[i][t] = arg;
        }
    }
    let mut t = 0;
    for j in 1..len {
        if dp[n - 1][j] > dp[n - 1][t] {
            t = j;
        }
    }
    let score = dp[n - 1][t];
    let mut path = vec![0usize; n];
    path[n - 1] = t;
    for i in (1..n).rev() {
        path[i - 1] = back[i][path[i]];
    }
    Ok(AlignmentResult {
        video_id: span.video_id.clone(),
        score,
        path: path.into_iter().map(|j| KeyframeId(span.s_v + j as u64)).collect(),
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > EXHAUSTIVE_LIMIT * 1_000 {
            return c;
        }
    }
    c
}

/// Enumerates every strictly increasing tuple and maximizes the telescoped
/// objective directly. Among equal values, keeps the tuple that is smallest
/// compared from the last event backwards, matching the DP's tie rules.
pub fn dante_exhaustive(
    s: &SimilarityMatrix,
    span: &VideoSpan,
    params: &DanteParams,
) -> Result<AlignmentResult, DanteError> {
    s.check_span(span)?;
    let n = s.n_events();
    let len = span.len();
    if binomial(len, n) > EXHAUSTIVE_LIMIT {
        return Err(DanteError::TooLarge { len, events: n });
    }
    let value = |tuple: &[usize]| {
        let sum: f64 = tuple
            .iter()
            .enumerate()
            .map(|(i, &j)| s.span_row(i, span)[j])
            .sum();
        sum - params.lambda * (tuple[n - 1] - tuple[0]) as f64
    };
    let reversed_less = |a: &[usize], b: &[usize]| a.iter().rev().cmp(b.iter().rev()) == Ordering::Less;

    let mut tuple: Vec<usize> = (0..n).collect();
    let mut best = tuple.clone();
    let mut best_value = value(&tuple);
    // advance to the next combination in lexicographic order
    while let Some(i) = (0..n).rev().find(|&i| tuple[i] < len - n + i) {
        tuple[i] += 1;
        for j in i + 1..n {
            tuple[j] = tuple[j - 1] + 1;
        }
        let v = value(&tuple);
        if v > best_value || (v == best_value && reversed_less(&tuple, &best)) {
            best_value = v;
            best.copy_from_slice(&tuple);
        }
    }
    Ok(AlignmentResult {
        video_id: span.video_id.clone(),
        score: best_value,
        path: best.into_iter().map(|j| KeyframeId(span.s_v + j as u64)).collect(),
    })
}

fn rank_order(a: &(u64, AlignmentResult), b: &(u64, AlignmentResult)) -> Ordering {
    b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0))
}

fn finish_ranking(
    n_events: usize,
    params: &DanteParams,
    mut scored: Vec<(u64, AlignmentResult)>,
) -> Result<Vec<AlignmentResult>, DanteError> {
    if scored.is_empty() {
        return Err(DanteError::NoFeasibleVideo(n_events));
    }
    scored.sort_by(rank_order);
    scored.truncate(params.top_k);
    Ok(scored.into_iter().map(|(_, r)| r).collect())
}

fn score_one(
    s: &SimilarityMatrix,
    span: &VideoSpan,
    params: &DanteParams,
) -> Result<Option<(u64, AlignmentResult)>, DanteError> {
    match dante_score_video(s, span, params) {
        Ok(r) => Ok(Some((span.s_v, r))),
        Err(DanteError::InfeasibleAlignment { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores every video with at least `N` keyframes and returns the best
/// `top_k`, ties broken by ascending span start.
pub fn rank_videos(
    s: &SimilarityMatrix,
    spans: &[VideoSpan],
    params: &DanteParams,
) -> Result<Vec<AlignmentResult>, DanteError> {
    #[cfg(feature = "parallel")]
    let scored = {
        use rayon::prelude::*;
        spans
            .par_iter()
            .map(|span| score_one(s, span, params))
            .collect::<Result<Vec<_>, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let scored = spans
        .iter()
        .map(|span| score_one(s, span, params))
        .collect::<Result<Vec<_>, _>>()?;
    finish_ranking(s.n_events(), params, scored.into_iter().flatten().collect())
}

/// Single-threaded [`rank_videos`].
pub fn rank_videos_serial(
    s: &SimilarityMatrix,
    spans: &[VideoSpan],
    params: &DanteParams,
) -> Result<Vec<AlignmentResult>, DanteError> {
    let scored = spans
        .iter()
        .map(|span| score_one(s, span, params))
        .collect::<Result<Vec<_>, _>>()?;
    finish_ranking(s.n_events(), params, scored.into_iter().flatten().collect())
}

/// Builds `S` from the event queries and ranks the given videos.
pub fn dante_rank(
    store: &VectorStore,
    spans: &[VideoSpan],
    event_queries: &[EmbeddingVector],
    params: &DanteParams,
) -> Result<Vec<AlignmentResult>, DanteError> {
    let s = SimilarityMatrix::from_queries(store, event_queries)?;
    rank_videos(&s, spans, params)
}
