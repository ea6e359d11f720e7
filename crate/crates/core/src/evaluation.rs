//! Ranking metrics over held-out pairs: recall@k, precision@k, MAP and mean
//! rank, computed from the 1-based position of each positive item in the
//! full ranking of all items.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{PairSet, Vocab};
use crate::error::ConfigError;
use crate::inference::{infer_beam, infer_greedy, infer_iterative, rank_in, InferenceConfig, Strategy};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::scoring::{Query, QueryScorer};

/// Recall cutoffs reported by default.
pub const DEFAULT_KS: [usize; 4] = [5, 10, 30, 50];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub precision_at: BTreeMap<usize, f64>,
    pub map_score: f64,
    pub mean_rank: f64,
    pub pairs_evaluated: usize,
    pub pairs_skipped_oov: usize,
}

impl EvalReport {
    /// Aggregates 1-based ranks of single positives.
    pub fn from_ranks(ranks: &[usize], ks: &[usize], skipped: usize) -> Result<Self, ConfigError> {
        if ranks.is_empty() {
            return Err(ConfigError::Empty("evaluated pair set"));
        }
        let n = ranks.len() as f64;
        let mut recall_at = BTreeMap::new();
        let mut precision_at = BTreeMap::new();
        for &k in ks {
            if k == 0 {
                return Err(ConfigError::NonPositive("recall cutoff"));
            }
            let recall = ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
            recall_at.insert(k, recall);
            precision_at.insert(k, recall / k as f64);
        }
        Ok(EvalReport {
            recall_at,
            precision_at,
            map_score: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            mean_rank: ranks.iter().map(|&r| r as f64).sum::<f64>() / n,
            pairs_evaluated: ranks.len(),
            pairs_skipped_oov: skipped,
        })
    }

    fn entries(&self) -> Vec<(String, serde_json::Value)> {
        let mut out: Vec<(String, serde_json::Value)> = self
            .recall_at
            .iter()
            .map(|(k, v)| (format!("recall@{k}"), (*v).into()))
            .collect();
        out.push(("map".into(), self.map_score.into()));
        out.push(("mean_rank".into(), self.mean_rank.into()));
        out.push(("evaluated".into(), self.pairs_evaluated.into()));
        out.push(("skipped_oov".into(), self.pairs_skipped_oov.into()));
        out
    }

    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self.entries().into_iter().collect();
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("serializable report")
    }
}

/// Scores of every item used to place items that are not in the predicted
/// list, plus the predicted list for list-level strategies.
fn full_ranking<T: Scalar>(
    model: &Model<T>,
    q: &Query,
    config: &InferenceConfig,
) -> Result<(Vec<usize>, Vec<f64>), ConfigError> {
    let t = config.resolve_stage(model)?;
    let w = model.weights();
    match config.strategy {
        Strategy::Unstructured => Ok((Vec::new(), QueryScorer::new(model.stage(0), q)?.score_all())),
        Strategy::Iterative if t == 0 => Ok((Vec::new(), QueryScorer::new(model.stage(0), q)?.score_all())),
        Strategy::Iterative => {
            let ctx = infer_iterative(model, q, t - 1)?.into_final();
            let scorer = QueryScorer::new(model.stage(t), q)?.with_context(&ctx.items, w)?;
            Ok((Vec::new(), scorer.score_all()))
        }
        Strategy::Greedy | Strategy::Beam => {
            let list = if config.strategy == Strategy::Greedy {
                infer_greedy(model.stage(t), q, w)?
            } else {
                infer_beam(model.stage(t), q, w, config.beam_width)?
            };
            let scorer = QueryScorer::new(model.stage(t), q)?.with_context(&list.items, w)?;
            Ok((list.items, scorer.score_all()))
        }
    }
}

fn rank_given(list: &[usize], scores: &[f64], positive: usize) -> usize {
    if let Some(p) = list.iter().position(|&d| d == positive) {
        return p + 1;
    }
    if list.is_empty() {
        return rank_in(scores, positive);
    }
    // items after the list are ordered by their context-conditioned score
    let ahead = rank_in(scores, positive) - 1;
    let listed_ahead = list
        .iter()
        .filter(|&&d| {
            scores[d] > scores[positive] || (scores[d] == scores[positive] && d < positive)
        })
        .count();
    list.len() + ahead - listed_ahead + 1
}

/// 1-based rank of `positive` in the full ranking induced by the strategy.
pub fn rank_of_positive<T: Scalar>(
    model: &Model<T>,
    q: &Query,
    positive: usize,
    config: &InferenceConfig,
) -> Result<usize, ConfigError> {
    if positive >= model.items() {
        return Err(ConfigError::ItemOutOfRange {
            item: positive,
            items: model.items(),
        });
    }
    let (list, scores) = full_ranking(model, q, config)?;
    Ok(rank_given(&list, &scores, positive))
}

/// Ranks of every pair's positive, computing each distinct query's ranking
/// once. Parallel across queries; the result order follows the pairs.
pub fn ranks<T: Scalar>(
    model: &Model<T>,
    test: &PairSet,
    config: &InferenceConfig,
) -> Result<Vec<usize>, ConfigError> {
    let mut by_query: Vec<Vec<usize>> = vec![Vec::new(); test.queries().len()];
    for (i, p) in test.pairs().iter().enumerate() {
        by_query[p.query].push(i);
    }
    let per_query: Vec<Vec<(usize, usize)>> = by_query
        .par_iter()
        .enumerate()
        .filter(|(_, idx)| !idx.is_empty())
        .map(|(qi, idx)| {
            let (list, scores) = full_ranking(model, test.query(qi), config)?;
            Ok(idx
                .iter()
                .map(|&i| (i, rank_given(&list, &scores, test.pairs()[i].item)))
                .collect())
        })
        .collect::<Result<_, ConfigError>>()?;
    let mut out = vec![0; test.len()];
    for (i, r) in per_query.into_iter().flatten() {
        out[i] = r;
    }
    Ok(out)
}

pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    test: &PairSet,
    ks: &[usize],
    config: &InferenceConfig,
) -> Result<EvalReport, ConfigError> {
    evaluate_with_skipped(model, test, ks, config, 0)
}

pub fn evaluate_with_skipped<T: Scalar>(
    model: &Model<T>,
    test: &PairSet,
    ks: &[usize],
    config: &InferenceConfig,
    skipped_oov: usize,
) -> Result<EvalReport, ConfigError> {
    if test.is_empty() {
        return Err(ConfigError::Empty("test pair set"));
    }
    if test.items() != model.items() || test.query_dim() != model.query_dim() {
        return Err(ConfigError::Invalid(format!(
            "pair set dimensions ({} queries, {} items) do not match the model ({}, {})",
            test.query_dim(),
            test.items(),
            model.query_dim(),
            model.items()
        )));
    }
    EvalReport::from_ranks(&ranks(model, test, config)?, ks, skipped_oov)
}

/// Evaluates token pairs, skipping (and counting) pairs whose query or item
/// is outside the model vocabularies.
pub fn evaluate_tokens<T: Scalar>(
    model: &Model<T>,
    pairs: &[(String, String)],
    queries: &Vocab,
    items: &Vocab,
    ks: &[usize],
    config: &InferenceConfig,
) -> Result<EvalReport, ConfigError> {
    let (set, skipped) = PairSet::from_tokens(pairs, queries, items)?;
    if set.is_empty() {
        return Err(ConfigError::Invalid(format!(
            "all {} test pairs are out of vocabulary",
            pairs.len()
        )));
    }
    evaluate_with_skipped(model, &set, ks, config, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ColumnMatrix, StageParams};
    use crate::weights::{PositionWeights, WeightScheme};

    fn scored_model(scores: &[f64]) -> Model<f64> {
        let st = StageParams {
            u: ColumnMatrix::from_rows(&[vec![1.0]]),
            v: ColumnMatrix::from_rows(&[scores.to_vec()]),
            s: ColumnMatrix::zeros(1, scores.len()),
        };
        Model::new(vec![st], PositionWeights::sparse(1).unwrap()).unwrap()
    }

    fn unstructured() -> InferenceConfig {
        InferenceConfig::new(Strategy::Unstructured)
    }

    #[test]
    fn unique_best_ranks_first() {
        let m = scored_model(&[0.1, 0.7, 0.3]);
        assert_eq!(rank_of_positive(&m, &Query::one_hot(0), 1, &unstructured()).unwrap(), 1);
    }

    #[test]
    fn tie_with_lower_id_ranks_second() {
        let m = scored_model(&[0.5, 0.5, 0.1]);
        assert_eq!(rank_of_positive(&m, &Query::one_hot(0), 1, &unstructured()).unwrap(), 2);
    }

    #[test]
    fn out_of_range_positive() {
        let m = scored_model(&[0.5, 0.5]);
        assert!(rank_of_positive(&m, &Query::one_hot(0), 2, &unstructured()).is_err());
    }

    #[test]
    fn single_pair_metrics() {
        let r = EvalReport::from_ranks(&[3], &[5], 0).unwrap();
        assert_eq!(r.recall_at[&5], 1.0);
        assert_eq!(r.precision_at[&5], 0.2);
        assert_eq!(r.map_score, 1.0 / 3.0);
        assert_eq!(r.mean_rank, 3.0);
    }

    #[test]
    fn perfect_ranking() {
        let r = EvalReport::from_ranks(&[1, 1, 1], &DEFAULT_KS, 0).unwrap();
        assert!(r.recall_at.values().all(|&v| v == 1.0));
        assert_eq!((r.map_score, r.mean_rank), (1.0, 1.0));
    }

    #[test]
    fn mixed_ranks() {
        let r = EvalReport::from_ranks(&[1, 11], &[10], 0).unwrap();
        assert_eq!(r.recall_at[&10], 0.5);
        assert_eq!(r.map_score, 0.5 * (1.0 + 1.0 / 11.0));
        assert_eq!(r.mean_rank, 6.0);
    }

    #[test]
    fn empty_rank_list_is_an_error() {
        assert!(EvalReport::from_ranks(&[], &[5], 0).is_err());
    }

    #[test]
    fn report_formats_use_fixed_keys() {
        let r = EvalReport::from_ranks(&[1, 11], &DEFAULT_KS, 4).unwrap();
        let kv = r.to_kv();
        let keys: Vec<&str> = kv.lines().map(|l| l.split('=').next().unwrap()).collect();
        assert_eq!(
            keys,
            vec!["recall@5", "recall@10", "recall@30", "recall@50", "map", "mean_rank", "evaluated", "skipped_oov"]
        );
        assert!(kv.contains("skipped_oov=4\n"));
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["evaluated"], 2);
        assert_eq!(json["recall@10"], 0.5);
    }

    #[test]
    fn matches_full_sort_oracle() {
        let m = Model::<f32>::init(1, 4, 3, 50, 5, WeightScheme::SparseHarmonic, 21).unwrap();
        let q = Query::one_hot(2);
        let scorer = QueryScorer::new(m.stage(0), &q).unwrap();
        let mut order: Vec<usize> = (0..50).collect();
        order.sort_by(|&a, &b| scorer.base(b).total_cmp(&scorer.base(a)).then(a.cmp(&b)));
        for d in 0..50 {
            let want = order.iter().position(|&x| x == d).unwrap() + 1;
            assert_eq!(rank_of_positive(&m, &q, d, &unstructured()).unwrap(), want);
        }
    }

    #[test]
    fn list_strategies_rank_list_members_by_position() {
        let m = Model::<f32>::init(2, 3, 2, 20, 4, WeightScheme::SparseHarmonic, 5).unwrap();
        let q = Query::one_hot(1);
        for strategy in [Strategy::Greedy, Strategy::Beam, Strategy::Iterative] {
            let mut cfg = InferenceConfig::new(strategy);
            cfg.beam_width = 3;
            let list = crate::inference::infer(&m, &q, &cfg).unwrap();
            for (i, &d) in list.items.iter().enumerate() {
                assert_eq!(rank_of_positive(&m, &q, d, &cfg).unwrap(), i + 1);
            }
            let mut all: Vec<usize> = (0..20)
                .map(|d| rank_of_positive(&m, &q, d, &cfg).unwrap())
                .collect();
            all.sort_unstable();
            assert_eq!(all, (1..=20).collect::<Vec<_>>(), "{strategy}");
        }
    }

    #[test]
    fn all_oov_is_an_error() {
        let m = scored_model(&[0.1, 0.2]);
        let mut q = Vocab::default();
        q.insert("a");
        let mut d = Vocab::default();
        d.insert("x");
        d.insert("y");
        let pairs = vec![("zz".to_string(), "x".to_string())];
        assert!(evaluate_tokens(&m, &pairs, &q, &d, &[1], &unstructured()).is_err());
        let pairs = vec![("a".to_string(), "y".to_string()), ("a".to_string(), "nope".to_string())];
        let r = evaluate_tokens(&m, &pairs, &q, &d, &[1], &unstructured()).unwrap();
        assert_eq!((r.pairs_evaluated, r.pairs_skipped_oov), (1, 1));
        assert_eq!(r.recall_at[&1], 1.0);
    }
}
