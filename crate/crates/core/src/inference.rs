//! Ranked list inference: unstructured top-k, greedy and beam search over
//! the structured list score, the iterative cascade, and an exhaustive
//! search used as a test oracle.
//!
//! Ties are broken towards the smaller item id everywhere (towards the
//! lexicographically smaller prefix for list-level searches).

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{Model, StageParams};
use crate::scalar::{dot_acc, norm_sq, Scalar};
use crate::scoring::{extension_gain, score_structured_list, Query, QueryScorer, RankedList};
use crate::weights::PositionWeights;

/// Upper bound on the number of ordered prefixes `infer_exhaustive` visits.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Unstructured,
    Greedy,
    Beam,
    Iterative,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unstructured" => Ok(Strategy::Unstructured),
            "greedy" => Ok(Strategy::Greedy),
            "beam" => Ok(Strategy::Beam),
            "iterative" => Ok(Strategy::Iterative),
            other => Err(format!(
                "unknown strategy `{other}` (expected unstructured, greedy, beam or iterative)"
            )),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Unstructured => "unstructured",
            Strategy::Greedy => "greedy",
            Strategy::Beam => "beam",
            Strategy::Iterative => "iterative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub strategy: Strategy,
    pub beam_width: usize,
    /// Iterations of the cascade for `Iterative`; the stage whose parameters
    /// `Greedy` and `Beam` use. Defaults to the last stage.
    pub stages_to_run: Option<usize>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            strategy: Strategy::Iterative,
            beam_width: 1,
            stages_to_run: None,
        }
    }
}

impl InferenceConfig {
    pub fn new(strategy: Strategy) -> Self {
        InferenceConfig {
            strategy,
            ..Default::default()
        }
    }

    pub fn resolve_stage<T: Scalar>(&self, model: &Model<T>) -> Result<usize, ConfigError> {
        match self.stages_to_run {
            None => Ok(model.last_stage()),
            Some(t) if t <= model.last_stage() => Ok(t),
            Some(t) => Err(ConfigError::TooManyStages {
                requested: t,
                available: model.last_stage(),
            }),
        }
    }
}

/// Total order on scores in which `-0.0` and `0.0` tie; NaN sorts above
/// every number.
pub fn cmp_scores(a: f64, b: f64) -> Ordering {
    (a + 0.0).total_cmp(&(b + 0.0))
}

/// Score/item pair ordered so that "greater" means "ranked earlier".
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    score: f64,
    item: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_scores(self.score, other.score)
            .then_with(|| other.item.cmp(&self.item))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` best `(item, score)` pairs in ranking order, using a bounded
/// min-heap of size `k`.
pub fn top_k_of(scores: impl IntoIterator<Item = (usize, f64)>, k: usize) -> RankedList {
    if k == 0 {
        return RankedList::default();
    }
    let mut heap: BinaryHeap<Reverse<Candidate>> = BinaryHeap::with_capacity(k + 1);
    for (item, score) in scores {
        let c = Candidate { score, item };
        if heap.len() < k {
            heap.push(Reverse(c));
        } else if let Some(Reverse(worst)) = heap.peek() {
            if c > *worst {
                heap.pop();
                heap.push(Reverse(c));
            }
        }
    }
    let (items, scores) = heap
        .into_sorted_vec()
        .into_iter()
        .map(|Reverse(c)| (c.item, c.score))
        .unzip();
    RankedList { items, scores }
}

/// 1-based position `item` would take in the full ranking of `scores`.
pub fn rank_in(scores: &[f64], item: usize) -> usize {
    let target = Candidate {
        score: scores[item],
        item,
    };
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(d, &s)| Candidate { score: s, item: d } > target)
        .count()
}

fn check_k(k: usize, items: usize) -> Result<(), ConfigError> {
    if k == 0 {
        Err(ConfigError::NonPositive("k"))
    } else if k > items {
        Err(ConfigError::KTooLarge { k, items })
    } else {
        Ok(())
    }
}

pub fn top_k_unstructured<T: Scalar>(
    stage: &StageParams<T>,
    q: &Query,
    k: usize,
) -> Result<RankedList, ConfigError> {
    check_k(k, stage.items())?;
    let scorer = QueryScorer::new(stage, q)?;
    Ok(top_k_of((0..stage.items()).map(|d| (d, scorer.base(d))), k))
}

/// Top `k` items by the context-conditioned score against a frozen list.
pub fn top_k_in_context<T: Scalar>(
    stage: &StageParams<T>,
    q: &Query,
    context: &[usize],
    w: &PositionWeights,
    k: usize,
) -> Result<RankedList, ConfigError> {
    check_k(k, stage.items())?;
    let scorer = QueryScorer::new(stage, q)?.with_context(context, w)?;
    Ok(top_k_of((0..stage.items()).map(|d| (d, scorer.score(d))), k))
}

/// Greedy search: each position takes the item maximizing the extension
/// gain given the fixed prefix. The list scores are the per-position gains.
pub fn infer_greedy<T: Scalar>(
    stage: &StageParams<T>,
    q: &Query,
    w: &PositionWeights,
) -> Result<RankedList, ConfigError> {
    let k = w.k();
    check_k(k, stage.items())?;
    let scorer = QueryScorer::new(stage, q)?;
    let mut prefix_vec = vec![0.0; stage.dim()];
    let mut taken = vec![false; stage.items()];
    let mut list = RankedList::default();
    for pos in 0..k {
        let w_n = w.at(pos);
        let best = (0..stage.items())
            .filter(|&d| !taken[d])
            .map(|d| Candidate {
                score: extension_gain(&scorer, &prefix_vec, d, w_n),
                item: d,
            })
            .max()
            .expect("k <= item count");
        taken[best.item] = true;
        list.items.push(best.item);
        list.scores.push(best.score);
        for (acc, x) in prefix_vec.iter_mut().zip(stage.s.col(best.item)) {
            *acc += w_n * x.to_acc();
        }
    }
    Ok(list)
}

#[derive(Debug, Clone)]
struct BeamState {
    items: Vec<usize>,
    gains: Vec<f64>,
    vanilla: f64,
    prefix_vec: Vec<f64>,
    score: f64,
}

/// Beam search with `width` hypotheses, each prefix ranked by its partial
/// structured score (the list score restricted to the prefix). A width of
/// one is the greedy search itself. The list scores are the per-position
/// increments of the partial score.
pub fn infer_beam<T: Scalar>(
    stage: &StageParams<T>,
    q: &Query,
    w: &PositionWeights,
    width: usize,
) -> Result<RankedList, ConfigError> {
    if width == 0 {
        return Err(ConfigError::NonPositive("beam width"));
    }
    if width == 1 {
        return infer_greedy(stage, q, w);
    }
    let k = w.k();
    check_k(k, stage.items())?;
    let scorer = QueryScorer::new(stage, q)?;
    let self_sim = self_similarities(stage);
    let mut beam = vec![BeamState {
        items: Vec::with_capacity(k),
        gains: Vec::with_capacity(k),
        vanilla: 0.0,
        prefix_vec: vec![0.0; stage.dim()],
        score: 0.0,
    }];

    for pos in 0..k {
        let w_n = w.at(pos);
        // (parent, candidate, partial score)
        let mut expansions: Vec<(usize, usize, f64)> = Vec::new();
        for (p, state) in beam.iter().enumerate() {
            let pv_sq: f64 = state.prefix_vec.iter().map(|x| x * x).sum();
            for (d, &sim) in self_sim.iter().enumerate() {
                if state.items.contains(&d) {
                    continue;
                }
                let cross = dot_acc(&state.prefix_vec, stage.s.col(d));
                let score = state.vanilla + w_n * scorer.base(d) + pv_sq + 2.0 * w_n * cross + w_n * w_n * sim;
                expansions.push((p, d, score));
            }
        }
        expansions.sort_by(|a, b| {
            cmp_scores(b.2, a.2)
                .then_with(|| beam[a.0].items.cmp(&beam[b.0].items))
                .then_with(|| a.1.cmp(&b.1))
        });
        expansions.truncate(width);
        beam = expansions
            .into_iter()
            .map(|(p, d, score)| {
                let parent = &beam[p];
                let mut items = parent.items.clone();
                items.push(d);
                let mut gains = parent.gains.clone();
                gains.push(score - parent.score);
                let mut prefix_vec = parent.prefix_vec.clone();
                for (acc, x) in prefix_vec.iter_mut().zip(stage.s.col(d)) {
                    *acc += w_n * x.to_acc();
                }
                BeamState {
                    items,
                    gains,
                    vanilla: parent.vanilla + w_n * scorer.base(d),
                    prefix_vec,
                    score,
                }
            })
            .collect();
    }
    let best = beam.swap_remove(0);
    Ok(RankedList::new(best.items, best.gains))
}

/// Lists produced by every iteration of the cascade; the last one is the
/// prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct IterativeOutput {
    pub lists: Vec<RankedList>,
}

impl IterativeOutput {
    pub fn final_list(&self) -> &RankedList {
        self.lists.last().expect("at least one iteration")
    }

    pub fn into_final(mut self) -> RankedList {
        self.lists.pop().expect("at least one iteration")
    }
}

/// Iterative cascade inference: iteration 0 is the unstructured top-k of
/// stage 0; iteration `t` ranks every item by stage `t`'s score conditioned
/// on the list of iteration `t - 1`. Runs iterations `0..=iterations`.
pub fn infer_iterative<T: Scalar>(
    model: &Model<T>,
    q: &Query,
    iterations: usize,
) -> Result<IterativeOutput, ConfigError> {
    if iterations > model.last_stage() {
        return Err(ConfigError::TooManyStages {
            requested: iterations,
            available: model.last_stage(),
        });
    }
    let k = model.k();
    let w = model.weights();
    let mut lists = Vec::with_capacity(iterations + 1);
    lists.push(top_k_unstructured(model.stage(0), q, k)?);
    for t in 1..=iterations {
        let prev = &lists[t - 1].items;
        let next = top_k_in_context(model.stage(t), q, prev, w, k)?;
        lists.push(next);
    }
    Ok(IterativeOutput { lists })
}

fn prefix_count(items: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((items - i) as u128))
}

/// Ordered `k`-prefix maximizing the structured list score by full
/// enumeration. The list scores are the per-position item scores.
pub fn infer_exhaustive<T: Scalar>(
    stage: &StageParams<T>,
    q: &Query,
    w: &PositionWeights,
) -> Result<RankedList, ConfigError> {
    let k = w.k();
    check_k(k, stage.items())?;
    let prefixes = prefix_count(stage.items(), k);
    if prefixes > EXHAUSTIVE_LIMIT {
        return Err(ConfigError::SearchTooLarge {
            prefixes,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let scorer = QueryScorer::new(stage, q)?;
    let base: Vec<f64> = (0..stage.items()).map(|d| scorer.base(d)).collect();
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; stage.items()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    enumerate(stage, w, &base, k, &mut current, &mut used, &mut best);
    let (_, items) = best.expect("at least one prefix");
    let scores = items.iter().map(|&d| base[d]).collect();
    Ok(RankedList::new(items, scores))
}

fn enumerate<T: Scalar>(
    stage: &StageParams<T>,
    w: &PositionWeights,
    base: &[f64],
    k: usize,
    current: &mut Vec<usize>,
    used: &mut [bool],
    best: &mut Option<(f64, Vec<usize>)>,
) {
    if current.len() == k {
        let mut vanilla = 0.0;
        let mut acc = vec![0.0; stage.dim()];
        for (i, &d) in current.iter().enumerate() {
            let wi = w.at(i);
            vanilla += wi * base[d];
            for (a, x) in acc.iter_mut().zip(stage.s.col(d)) {
                *a += wi * x.to_acc();
            }
        }
        let score = vanilla + acc.iter().map(|x| x * x).sum::<f64>();
        // lexicographic enumeration: only a strictly better score replaces
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            *best = Some((score, current.clone()));
        }
        return;
    }
    for d in 0..base.len() {
        if used[d] {
            continue;
        }
        used[d] = true;
        current.push(d);
        enumerate(stage, w, base, k, current, used, best);
        current.pop();
        used[d] = false;
    }
}

/// Runs the configured strategy and returns the predicted list.
pub fn infer<T: Scalar>(model: &Model<T>, q: &Query, config: &InferenceConfig) -> Result<RankedList, ConfigError> {
    let t = config.resolve_stage(model)?;
    let w = model.weights();
    match config.strategy {
        Strategy::Unstructured => top_k_unstructured(model.stage(0), q, model.k()),
        Strategy::Greedy => infer_greedy(model.stage(t), q, w),
        Strategy::Beam => infer_beam(model.stage(t), q, w, config.beam_width),
        Strategy::Iterative => Ok(infer_iterative(model, q, t)?.into_final()),
    }
}

/// Structured list score of a produced list, for diagnostics.
pub fn structured_score<T: Scalar>(
    stage: &StageParams<T>,
    q: &Query,
    list: &RankedList,
    w: &PositionWeights,
) -> Result<f64, ConfigError> {
    score_structured_list(stage, q, &list.items, w)
}

/// Self-similarity `|S d|^2` of every item.
pub fn self_similarities<T: Scalar>(stage: &StageParams<T>) -> Vec<f64> {
    (0..stage.items()).map(|d| norm_sq(stage.s.col(d))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ColumnMatrix;
    use crate::scoring::score_query_item;
    use crate::weights::WeightScheme;

    fn w(k: usize) -> PositionWeights {
        PositionWeights::sparse(k).unwrap()
    }

    fn stage_with_scores(scores: &[f64]) -> StageParams<f64> {
        StageParams {
            u: ColumnMatrix::from_rows(&[vec![1.0]]),
            v: ColumnMatrix::from_rows(&[scores.to_vec()]),
            s: ColumnMatrix::zeros(1, scores.len()),
        }
    }

    #[test]
    fn top_k_toy() {
        let st = stage_with_scores(&[0.1, 0.9, 0.5]);
        let l = top_k_unstructured(&st, &Query::one_hot(0), 2).unwrap();
        assert_eq!(l.items, vec![1, 2]);
        assert_eq!(l.scores, vec![0.9, 0.5]);
    }

    #[test]
    fn top_k_ties_by_ascending_id() {
        let st = stage_with_scores(&[0.3; 6]);
        let l = top_k_unstructured(&st, &Query::one_hot(0), 3).unwrap();
        assert_eq!(l.items, vec![0, 1, 2]);
    }

    #[test]
    fn k_too_large() {
        let st = stage_with_scores(&[0.3; 2]);
        assert_eq!(
            top_k_unstructured(&st, &Query::one_hot(0), 3).unwrap_err(),
            ConfigError::KTooLarge { k: 3, items: 2 }
        );
    }

    #[test]
    fn top_k_matches_full_sort() {
        let st = StageParams::<f32>::init(8, 3, 1000, 77).unwrap();
        let q = Query::one_hot(1);
        let mut all: Vec<(usize, f64)> = (0..1000)
            .map(|d| (d, score_query_item(&st, &q, d).unwrap()))
            .collect();
        all.sort_by(|a, b| cmp_scores(b.1, a.1).then(a.0.cmp(&b.0)));
        let l = top_k_unstructured(&st, &q, 25).unwrap();
        let want: Vec<usize> = all.iter().take(25).map(|x| x.0).collect();
        assert_eq!(l.items, want);
    }

    #[test]
    fn rank_in_uses_tie_rule() {
        assert_eq!(rank_in(&[0.5, 0.9, 0.5], 2), 3);
        assert_eq!(rank_in(&[0.5, 0.9, 0.5], 0), 2);
        assert_eq!(rank_in(&[0.5, 0.9, 0.5], 1), 1);
    }

    #[test]
    fn greedy_without_structure_is_top_k() {
        let mut st = StageParams::<f64>::init(4, 3, 30, 5).unwrap();
        st.s.fill(0.0);
        let q = Query::one_hot(2);
        let g = infer_greedy(&st, &q, &w(5)).unwrap();
        assert_eq!(g.items, top_k_unstructured(&st, &q, 5).unwrap().items);
    }

    #[test]
    fn signed_zeros_tie() {
        let top = top_k_of([(0, 0.0), (1, -0.0), (2, 0.0)], 3);
        assert_eq!(top.items, vec![0, 1, 2]);
        assert_eq!(rank_in(&[-0.0, 0.0], 1), 2);
    }

    #[test]
    fn greedy_k1_is_argmax_of_first_gain() {
        let st = StageParams::<f64>::init(3, 2, 12, 8).unwrap();
        let q = Query::one_hot(0);
        let g = infer_greedy(&st, &q, &w(1)).unwrap();
        let scorer = QueryScorer::new(&st, &q).unwrap();
        let ss = self_similarities(&st);
        let best = (0..12)
            .max_by(|&a, &b| {
                (scorer.base(a) + ss[a])
                    .total_cmp(&(scorer.base(b) + ss[b]))
                    .then(b.cmp(&a))
            })
            .unwrap();
        assert_eq!(g.items, vec![best]);
    }

    #[test]
    fn beam_of_one_is_greedy() {
        for seed in 0..20 {
            let st = StageParams::<f32>::init(4, 3, 15, seed).unwrap();
            let q = Query::one_hot((seed % 3) as usize);
            let g = infer_greedy(&st, &q, &w(4)).unwrap();
            let b = infer_beam(&st, &q, &w(4), 1).unwrap();
            assert_eq!(g, b);
        }
    }

    #[test]
    fn zero_width_beam_is_rejected() {
        let st = StageParams::<f32>::init(2, 1, 4, 0).unwrap();
        assert!(infer_beam(&st, &Query::one_hot(0), &w(2), 0).is_err());
    }

    #[test]
    fn iterative_t0_is_unstructured() {
        let m = Model::<f32>::init(3, 4, 5, 20, 4, WeightScheme::SparseHarmonic, 1).unwrap();
        let q = Query::one_hot(3);
        let out = infer_iterative(&m, &q, 0).unwrap();
        assert_eq!(out.lists.len(), 1);
        assert_eq!(out.final_list(), &top_k_unstructured(m.stage(0), &q, 4).unwrap());
    }

    #[test]
    fn iterative_rejects_untrained_stages() {
        let m = Model::<f32>::init(2, 4, 5, 20, 4, WeightScheme::SparseHarmonic, 1).unwrap();
        assert_eq!(
            infer_iterative(&m, &Query::one_hot(0), 2).unwrap_err(),
            ConfigError::TooManyStages {
                requested: 2,
                available: 1
            }
        );
    }

    #[test]
    fn iterative_with_identical_unstructured_stages_is_constant() {
        let mut base = StageParams::<f32>::init(3, 4, 12, 4).unwrap();
        base.s.fill(0.0);
        let m = Model::new(vec![base.clone(), base.clone(), base], w(3)).unwrap();
        let out = infer_iterative(&m, &Query::one_hot(1), 2).unwrap();
        assert_eq!(out.lists[0], out.lists[1]);
        assert_eq!(out.lists[1], out.lists[2]);
    }

    #[test]
    fn exhaustive_guard() {
        let st = StageParams::<f32>::init(2, 1, 200, 0).unwrap();
        let err = infer_exhaustive(&st, &Query::one_hot(0), &w(3)).unwrap_err();
        assert!(matches!(err, ConfigError::SearchTooLarge { .. }));
    }

    #[test]
    fn exhaustive_without_structure_is_sorted() {
        let mut st = StageParams::<f64>::init(3, 2, 6, 12).unwrap();
        st.s.fill(0.0);
        let q = Query::one_hot(1);
        let e = infer_exhaustive(&st, &q, &w(3)).unwrap();
        assert_eq!(e.items, top_k_unstructured(&st, &q, 3).unwrap().items);
    }

    #[test]
    fn infer_dispatches() {
        let m = Model::<f32>::init(2, 3, 4, 10, 3, WeightScheme::SparseHarmonic, 2).unwrap();
        let q = Query::one_hot(0);
        let mut cfg = InferenceConfig::new(Strategy::Beam);
        cfg.beam_width = 1;
        assert_eq!(
            infer(&m, &q, &cfg).unwrap(),
            infer(&m, &q, &InferenceConfig::new(Strategy::Greedy)).unwrap()
        );
        cfg.stages_to_run = Some(5);
        assert!(infer(&m, &q, &cfg).is_err());
        assert_eq!("beam".parse::<Strategy>().unwrap(), Strategy::Beam);
        assert!("nope".parse::<Strategy>().is_err());
    }
}
