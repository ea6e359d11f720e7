//! Scoring of single items and of ranked lists.
//!
//! All sums are accumulated in `f64`. The query latent vector `U q` is
//! computed once per query and reused for every item.

use crate::error::ConfigError;
use crate::model::StageParams;
use crate::scalar::{dot, dot_acc, norm_sq, Scalar};
use crate::weights::PositionWeights;

/// Sparse query feature vector. A one-hot query has a single entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Query {
    pub fn one_hot(index: usize) -> Self {
        Query {
            indices: vec![index],
            values: vec![1.0],
        }
    }

    /// Sparse query from `(index, value)` entries. Zero values are dropped.
    pub fn sparse(entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, ConfigError> {
        let (indices, values): (Vec<_>, Vec<_>) =
            entries.into_iter().filter(|&(_, v)| v != 0.0).unzip();
        if indices.is_empty() {
            return Err(ConfigError::Empty("query"));
        }
        Ok(Query { indices, values })
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn check(&self, dim: usize) -> Result<(), ConfigError> {
        match self.indices.iter().find(|&&i| i >= dim) {
            Some(&index) => Err(ConfigError::QueryOutOfRange { index, dim }),
            None => Ok(()),
        }
    }
}

/// Ordered item ids with a parallel score per position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn new(items: Vec<usize>, scores: Vec<f64>) -> Self {
        assert_eq!(items.len(), scores.len());
        RankedList { items, scores }
    }

    /// A list whose scores are irrelevant (all zero).
    pub fn from_items(items: Vec<usize>) -> Self {
        let scores = vec![0.0; items.len()];
        RankedList { items, scores }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.items.contains(&item)
    }

    pub fn position(&self, item: usize) -> Option<usize> {
        self.items.iter().position(|&d| d == item)
    }
}

fn check_item(item: usize, items: usize) -> Result<(), ConfigError> {
    if item >= items {
        Err(ConfigError::ItemOutOfRange { item, items })
    } else {
        Ok(())
    }
}

/// `U q` for one stage.
pub fn latent_query<T: Scalar>(stage: &StageParams<T>, q: &Query) -> Vec<f64> {
    let mut u = vec![0.0; stage.dim()];
    for (j, qj) in q.entries() {
        for (acc, x) in u.iter_mut().zip(stage.u.col(j)) {
            *acc += qj * x.to_acc();
        }
    }
    u
}

/// `sum_j w_j S c_j` over a context list.
pub fn context_vector<T: Scalar>(stage: &StageParams<T>, context: &[usize], w: &PositionWeights) -> Vec<f64> {
    let mut c = vec![0.0; stage.dim()];
    for (pos, &d) in context.iter().enumerate() {
        let wj = w.at(pos);
        if wj == 0.0 {
            continue;
        }
        for (acc, x) in c.iter_mut().zip(stage.s.col(d)) {
            *acc += wj * x.to_acc();
        }
    }
    c
}

/// Per-query scorer holding the latent query vector and, for structured
/// stages, the weighted context vector.
#[derive(Debug, Clone)]
pub struct QueryScorer<'a, T> {
    stage: &'a StageParams<T>,
    latent: Vec<f64>,
    context: Option<Vec<f64>>,
}

impl<'a, T: Scalar> QueryScorer<'a, T> {
    pub fn new(stage: &'a StageParams<T>, q: &Query) -> Result<Self, ConfigError> {
        q.check(stage.query_dim())?;
        Ok(QueryScorer {
            stage,
            latent: latent_query(stage, q),
            context: None,
        })
    }

    /// Conditions scores on a frozen context list.
    pub fn with_context(mut self, context: &[usize], w: &PositionWeights) -> Result<Self, ConfigError> {
        if context.is_empty() {
            return Err(ConfigError::EmptyContext);
        }
        for &d in context {
            check_item(d, self.stage.items())?;
        }
        self.context = Some(context_vector(self.stage, context, w));
        Ok(self)
    }

    pub fn latent(&self) -> &[f64] {
        &self.latent
    }

    pub fn stage(&self) -> &'a StageParams<T> {
        self.stage
    }

    /// Query-item score `(U q) . (V d)`.
    #[inline]
    pub fn base(&self, d: usize) -> f64 {
        dot_acc(&self.latent, self.stage.v.col(d))
    }

    /// Base score plus the context term when a context is set.
    #[inline]
    pub fn score(&self, d: usize) -> f64 {
        match &self.context {
            Some(c) => self.base(d) + dot_acc(c, self.stage.s.col(d)),
            None => self.base(d),
        }
    }

    pub fn score_all(&self) -> Vec<f64> {
        (0..self.stage.items()).map(|d| self.score(d)).collect()
    }
}

pub fn score_query_item<T: Scalar>(stage: &StageParams<T>, q: &Query, d: usize) -> Result<f64, ConfigError> {
    check_item(d, stage.items())?;
    Ok(QueryScorer::new(stage, q)?.base(d))
}

/// `sum_i w_i f(q, d_i)`.
pub fn score_vanilla_list<T: Scalar>(
    stage: &StageParams<T>,
    q: &Query,
    list: &[usize],
    w: &PositionWeights,
) -> Result<f64, ConfigError> {
    if list.is_empty() {
        return Err(ConfigError::Empty("ranked list"));
    }
    let scorer = QueryScorer::new(stage, q)?;
    let mut total = 0.0;
    for (i, &d) in list.iter().enumerate() {
        check_item(d, stage.items())?;
        total += w.at(i) * scorer.base(d);
    }
    Ok(total)
}

/// Pairwise structure term `sum_{i,j} w_i w_j (S d_i).(S d_j)`, diagonal
/// included, evaluated as `|sum_i w_i S d_i|^2`.
pub fn structure_term<T: Scalar>(stage: &StageParams<T>, list: &[usize], w: &PositionWeights) -> f64 {
    context_vector(stage, list, w).iter().map(|x| x * x).sum()
}

/// Vanilla list score plus the pairwise structure term.
pub fn score_structured_list<T: Scalar>(
    stage: &StageParams<T>,
    q: &Query,
    list: &[usize],
    w: &PositionWeights,
) -> Result<f64, ConfigError> {
    let vanilla = score_vanilla_list(stage, q, list, w)?;
    Ok(vanilla + structure_term(stage, list, w))
}

/// Gain of appending `candidate` at position `N = prefix.len() + 1`:
/// `w_N f(q, c) + sum_{i<N} w_i w_N (S d_i).(S c) + w_N^2 |S c|^2`.
pub fn score_greedy_extension<T: Scalar>(
    stage: &StageParams<T>,
    q: &Query,
    candidate: usize,
    prefix: &[usize],
    w: &PositionWeights,
) -> Result<f64, ConfigError> {
    check_item(candidate, stage.items())?;
    if prefix.contains(&candidate) {
        return Err(ConfigError::CandidateInPrefix(candidate));
    }
    let scorer = QueryScorer::new(stage, q)?;
    let ctx = context_vector(stage, prefix, w);
    Ok(extension_gain(
        &scorer,
        &ctx,
        candidate,
        w.at(prefix.len()),
    ))
}

/// Extension gain given the running prefix vector `sum_{i<N} w_i S d_i`.
#[inline]
pub(crate) fn extension_gain<T: Scalar>(
    scorer: &QueryScorer<'_, T>,
    prefix_vec: &[f64],
    candidate: usize,
    w_n: f64,
) -> f64 {
    let s_c = scorer.stage().s.col(candidate);
    w_n * scorer.base(candidate) + w_n * dot_acc(prefix_vec, s_c) + w_n * w_n * norm_sq(s_c)
}

/// `f(q, d) + sum_j w_j (S d).(S c_j)` against a frozen context. The
/// candidate may itself appear in the context.
pub fn score_item_in_context<T: Scalar>(
    stage: &StageParams<T>,
    q: &Query,
    d: usize,
    context: &[usize],
    w: &PositionWeights,
) -> Result<f64, ConfigError> {
    check_item(d, stage.items())?;
    Ok(QueryScorer::new(stage, q)?.with_context(context, w)?.score(d))
}

/// Item-item similarity `(S a).(S b)`.
pub fn item_similarity<T: Scalar>(stage: &StageParams<T>, a: usize, b: usize) -> f64 {
    dot(stage.s.col(a), stage.s.col(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ColumnMatrix;

    fn w(k: usize) -> PositionWeights {
        PositionWeights::sparse(k).unwrap()
    }

    fn random_stage(n: usize, dq: usize, items: usize, seed: u64) -> StageParams<f64> {
        StageParams::init(n, dq, items, seed).unwrap()
    }

    #[test]
    fn scalar_product_toy() {
        let st = StageParams {
            u: ColumnMatrix::from_rows(&[vec![0.0, 2.0]]),
            v: ColumnMatrix::from_rows(&[vec![3.0, 0.0, 0.0]]),
            s: ColumnMatrix::zeros(1, 3),
        };
        assert_eq!(score_query_item(&st, &Query::one_hot(1), 0).unwrap(), 6.0);
    }

    #[test]
    fn orthogonal_latent_scores_zero() {
        let st = StageParams {
            u: ColumnMatrix::from_rows(&[vec![1.0], vec![0.0]]),
            v: ColumnMatrix::from_rows(&[vec![0.0], vec![5.0]]),
            s: ColumnMatrix::zeros(2, 1),
        };
        assert_eq!(score_query_item(&st, &Query::one_hot(0), 0).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_item_and_query() {
        let st = random_stage(2, 3, 4, 0);
        assert!(matches!(
            score_query_item(&st, &Query::one_hot(0), 4),
            Err(ConfigError::ItemOutOfRange { item: 4, items: 4 })
        ));
        assert!(matches!(
            score_query_item(&st, &Query::one_hot(3), 0),
            Err(ConfigError::QueryOutOfRange { index: 3, dim: 3 })
        ));
        assert!(Query::sparse([(0, 0.0)]).is_err());
    }

    /// Explicit `D_q x D_items` matrix `W = U^T V`.
    fn dense_w(st: &StageParams<f64>) -> Vec<Vec<f64>> {
        (0..st.query_dim())
            .map(|a| {
                (0..st.items())
                    .map(|b| (0..st.dim()).map(|r| st.u.get(r, a) * st.v.get(r, b)).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn matches_dense_bilinear_form() {
        let st = random_stage(4, 10, 10, 7);
        let wm = dense_w(&st);
        let q = Query::sparse([(1, 0.5), (4, -2.0), (9, 1.25)]).unwrap();
        for d in 0..10 {
            let oracle: f64 = q.entries().map(|(a, qa)| qa * wm[a][d]).sum();
            let got = score_query_item(&st, &q, d).unwrap();
            assert!((got - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn single_item_vanilla_list_equals_item_score() {
        let st = random_stage(3, 5, 5, 1);
        let q = Query::one_hot(2);
        assert_eq!(
            score_vanilla_list(&st, &q, &[3], &w(1)).unwrap(),
            score_query_item(&st, &q, 3).unwrap()
        );
    }

    #[test]
    fn items_past_k_do_not_count() {
        let st = random_stage(3, 5, 6, 2);
        let q = Query::one_hot(0);
        let a = score_vanilla_list(&st, &q, &[0, 1], &w(2)).unwrap();
        let b = score_vanilla_list(&st, &q, &[0, 1, 2, 3, 4], &w(2)).unwrap();
        assert_eq!(a, b);
        let a = score_structured_list(&st, &q, &[0, 1], &w(2)).unwrap();
        let b = score_structured_list(&st, &q, &[0, 1, 5], &w(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_structure_reduces_to_vanilla() {
        let mut st = random_stage(3, 5, 6, 3);
        st.s.fill(0.0);
        let q = Query::one_hot(4);
        assert_eq!(
            score_structured_list(&st, &q, &[5, 2, 0], &w(3)).unwrap(),
            score_vanilla_list(&st, &q, &[5, 2, 0], &w(3)).unwrap()
        );
        assert_eq!(
            score_item_in_context(&st, &q, 1, &[5, 2], &w(3)).unwrap(),
            score_query_item(&st, &q, 1).unwrap()
        );
        assert_eq!(
            score_greedy_extension(&st, &q, 1, &[5, 2], &w(3)).unwrap(),
            (1.0 / 3.0) * score_query_item(&st, &q, 1).unwrap()
        );
    }

    #[test]
    fn single_item_structured_adds_self_similarity() {
        let st = random_stage(3, 5, 6, 4);
        let q = Query::one_hot(1);
        let expected = score_query_item(&st, &q, 2).unwrap() + item_similarity(&st, 2, 2);
        let got = score_structured_list(&st, &q, &[2], &w(1)).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn squared_norm_matches_naive_double_sum() {
        let st = random_stage(4, 6, 6, 5);
        let q = Query::one_hot(3);
        let list = [4, 1];
        let wt = w(2);
        let mut naive = 0.0;
        for (i, &a) in list.iter().enumerate() {
            naive += wt.at(i) * score_query_item(&st, &q, a).unwrap();
            for (j, &b) in list.iter().enumerate() {
                let sim: f64 = (0..4).map(|r| st.s.get(r, a) * st.s.get(r, b)).sum();
                naive += wt.at(i) * wt.at(j) * sim;
            }
        }
        let got = score_structured_list(&st, &q, &list, &wt).unwrap();
        assert!((got - naive).abs() < 1e-6);
    }

    #[test]
    fn first_extension_is_weighted_score_plus_self_term() {
        let st = random_stage(3, 4, 6, 6);
        let q = Query::one_hot(0);
        let got = score_greedy_extension(&st, &q, 5, &[], &w(3)).unwrap();
        let want = score_query_item(&st, &q, 5).unwrap() + item_similarity(&st, 5, 5);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn extension_of_a_prefix_member_is_rejected() {
        let st = random_stage(3, 4, 6, 6);
        let err = score_greedy_extension(&st, &Query::one_hot(0), 2, &[1, 2], &w(3)).unwrap_err();
        assert_eq!(err, ConfigError::CandidateInPrefix(2));
    }

    #[test]
    fn single_context_item_adds_one_similarity() {
        let st = random_stage(3, 4, 6, 8);
        let q = Query::one_hot(2);
        let got = score_item_in_context(&st, &q, 4, &[1], &w(3)).unwrap();
        let want = score_query_item(&st, &q, 4).unwrap() + item_similarity(&st, 4, 1);
        assert!((got - want).abs() < 1e-12);
        // the candidate may coincide with a context item
        let got = score_item_in_context(&st, &q, 1, &[1], &w(3)).unwrap();
        let want = score_query_item(&st, &q, 1).unwrap() + item_similarity(&st, 1, 1);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn empty_context_is_rejected() {
        let st = random_stage(3, 4, 6, 8);
        assert_eq!(
            score_item_in_context(&st, &Query::one_hot(0), 1, &[], &w(3)).unwrap_err(),
            ConfigError::EmptyContext
        );
    }

    #[test]
    fn scaling_u_scales_scores() {
        let st = random_stage(4, 5, 7, 9);
        let mut scaled = st.clone();
        scaled.u.scale(2.5);
        let q = Query::one_hot(3);
        for d in 0..7 {
            let a = score_query_item(&st, &q, d).unwrap();
            let b = score_query_item(&scaled, &q, d).unwrap();
            assert!((b - 2.5 * a).abs() < 1e-12);
        }
    }
}
