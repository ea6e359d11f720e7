//! Stage-wise SGD training of the cascade.
//!
//! Stage 0 is trained with the plain query-item score. After each stage the
//! top-k list of every training query is cached, and stage `t > 0` is trained
//! on scores conditioned on that frozen list, so every stage reduces to
//! independent per-item scores and can use the sampled WARP (or AUC) loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::PairSet;
use crate::error::{ConfigError, TrainError};
use crate::inference::{infer_iterative, top_k_of};
use crate::loss::{sample_violator, warp_weight, LossKind};
use crate::model::{project_column, stage_seed, Model, StageParams};
use crate::scalar::Scalar;
use crate::scoring::{context_vector, latent_query, Query, QueryScorer, RankedList};
use crate::weights::{PositionWeights, WeightScheme};

/// Optimization hyperparameters shared by every stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub learning_rate: f64,
    /// Maximum column norm `C` of `U`, `V` and `S`.
    pub max_norm: f64,
    pub margin: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 0.05,
            max_norm: 1.0,
            margin: 1.0,
            loss: LossKind::Warp,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(ConfigError::NonPositive("learning rate"));
        }
        if self.max_norm.is_nan() || self.max_norm <= 0.0 {
            return Err(ConfigError::NonPositive("max column norm C"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Index of the last stage, `T`; the model has `T + 1` stages.
    pub stages: usize,
    pub k: usize,
    pub dim: usize,
    pub weight_scheme: WeightScheme,
    pub hyper: HyperParams,
    /// Sampled training pairs between validation runs.
    pub eval_every: u64,
    /// Consecutive validations without improvement before a stage stops.
    pub patience: usize,
    /// Cap on sampled training pairs per stage.
    pub max_updates: u64,
    /// Do not update the structure columns of cached context items.
    pub freeze_context: bool,
    /// Start `U_t`, `V_t` from the trained stage `t - 1` instead of a fresh
    /// random draw.
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stages: 1,
            k: 20,
            dim: 50,
            weight_scheme: WeightScheme::SparseHarmonic,
            hyper: HyperParams::default(),
            eval_every: 50_000,
            patience: 3,
            max_updates: 10_000_000,
            freeze_context: false,
            warm_start: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.hyper.validate()?;
        if self.k == 0 {
            return Err(ConfigError::NonPositive("k"));
        }
        if self.dim == 0 {
            return Err(ConfigError::NonPositive("latent dimension"));
        }
        if self.eval_every == 0 {
            return Err(ConfigError::NonPositive("eval_every"));
        }
        if self.patience == 0 {
            return Err(ConfigError::NonPositive("patience"));
        }
        Ok(())
    }

    pub fn weights(&self) -> Result<PositionWeights, ConfigError> {
        PositionWeights::new(self.k, self.weight_scheme)
    }
}

/// One validation measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressRecord {
    pub stage: usize,
    pub updates: u64,
    pub k: usize,
    pub valid_recall: f64,
}

impl std::fmt::Display for ProgressRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "stage={} updates={} valid_recall@{}={:.6}",
            self.stage, self.updates, self.k, self.valid_recall
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageReport {
    pub records: Vec<ProgressRecord>,
    pub best_recall: f64,
    pub updates: u64,
    pub gradient_steps: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub stages: Vec<StageReport>,
}

/// Per training query, the top-k list of the previous stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextCache {
    lists: Vec<RankedList>,
}

impl ContextCache {
    pub fn new(lists: Vec<RankedList>) -> Self {
        ContextCache { lists }
    }

    pub fn get(&self, query: usize) -> &RankedList {
        &self.lists[query]
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

/// Iterative-inference list after stage `t` for every distinct training
/// query.
pub fn cache_top_k<T: Scalar>(model: &Model<T>, train: &PairSet, t: usize) -> Result<ContextCache, ConfigError> {
    let lists = train
        .queries()
        .par_iter()
        .map(|q| infer_iterative(model, q, t).map(|o| o.into_final()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ContextCache::new(lists))
}

/// Options of a single gradient step.
#[derive(Debug, Clone, Copy)]
pub struct StepOptions<'a> {
    pub learning_rate: f64,
    /// Loss multiplier `L(rank estimate)`.
    pub multiplier: f64,
    pub max_norm: f64,
    pub weights: &'a PositionWeights,
    pub freeze_context: bool,
}

/// In-place gradient step on `multiplier * (margin - f(q, d+) + f(q, d-))`,
/// followed by projection of every touched column. With a context list the
/// scores include the structure term against that list, and the gradient
/// flows into the structure columns of `d+`, `d-` and (unless frozen) the
/// context items.
pub fn sgd_step<T: Scalar>(
    stage: &mut StageParams<T>,
    q: &Query,
    positive: usize,
    negative: usize,
    context: Option<&[usize]>,
    opts: &StepOptions<'_>,
) {
    let g = opts.learning_rate * opts.multiplier;
    let u = latent_query(stage, q);
    let col = |m: &crate::model::ColumnMatrix<T>, d: usize| -> Vec<f64> {
        m.col(d).iter().map(|x| x.to_acc()).collect()
    };
    let v_pos = col(&stage.v, positive);
    let v_neg = col(&stage.v, negative);

    for (j, qj) in q.entries() {
        for ((x, p), n) in stage.u.col_mut(j).iter_mut().zip(&v_pos).zip(&v_neg) {
            *x = T::from_acc(x.to_acc() + g * qj * (p - n));
        }
    }
    for (d, sign) in [(positive, 1.0), (negative, -1.0)] {
        for (x, ui) in stage.v.col_mut(d).iter_mut().zip(&u) {
            *x = T::from_acc(x.to_acc() + sign * g * ui);
        }
    }

    if let Some(ctx_items) = context {
        let ctx = context_vector(stage, ctx_items, opts.weights);
        let s_pos = col(&stage.s, positive);
        let s_neg = col(&stage.s, negative);
        for (d, sign) in [(positive, 1.0), (negative, -1.0)] {
            for (x, c) in stage.s.col_mut(d).iter_mut().zip(&ctx) {
                *x = T::from_acc(x.to_acc() + sign * g * c);
            }
        }
        if !opts.freeze_context {
            for (pos, &c) in ctx_items.iter().enumerate() {
                let wj = opts.weights.at(pos);
                if wj == 0.0 {
                    continue;
                }
                for ((x, p), n) in stage.s.col_mut(c).iter_mut().zip(&s_pos).zip(&s_neg) {
                    *x = T::from_acc(x.to_acc() + g * wj * (p - n));
                }
            }
        }
        project_column(stage.s.col_mut(positive), opts.max_norm);
        project_column(stage.s.col_mut(negative), opts.max_norm);
        if !opts.freeze_context {
            for &c in ctx_items {
                project_column(stage.s.col_mut(c), opts.max_norm);
            }
        }
    }

    for &j in q.indices() {
        project_column(stage.u.col_mut(j), opts.max_norm);
    }
    project_column(stage.v.col_mut(positive), opts.max_norm);
    project_column(stage.v.col_mut(negative), opts.max_norm);
}

/// Validation recall@k of candidate stage parameters, given each validation
/// query's context from the earlier stages (none for stage 0).
fn validation_recall<T: Scalar>(
    params: &StageParams<T>,
    valid: &PairSet,
    contexts: Option<&[RankedList]>,
    weights: &PositionWeights,
    k: usize,
) -> f64 {
    let mut by_query: Vec<Vec<usize>> = vec![Vec::new(); valid.queries().len()];
    for p in valid.pairs() {
        by_query[p.query].push(p.item);
    }
    let hits: usize = by_query
        .par_iter()
        .enumerate()
        .filter(|(_, pos)| !pos.is_empty())
        .map(|(qi, positives)| {
            let mut scorer = QueryScorer::new(params, valid.query(qi)).expect("validated query");
            if let Some(ctx) = contexts {
                scorer = scorer
                    .with_context(&ctx[qi].items, weights)
                    .expect("non-empty context");
            }
            let top = top_k_of((0..params.items()).map(|d| (d, scorer.score(d))), k);
            positives.iter().filter(|&&d| top.contains(d)).count()
        })
        .sum();
    hits as f64 / valid.len() as f64
}

fn check_sets<T: Scalar>(model: &Model<T>, train: &PairSet, valid: &PairSet) -> Result<(), ConfigError> {
    if train.is_empty() {
        return Err(ConfigError::Empty("training pair set"));
    }
    if valid.is_empty() {
        return Err(ConfigError::Empty("validation pair set"));
    }
    for set in [train, valid] {
        if set.items() != model.items() || set.query_dim() != model.query_dim() {
            return Err(ConfigError::Invalid(format!(
                "pair set dimensions ({} queries, {} items) do not match the model ({}, {})",
                set.query_dim(),
                set.items(),
                model.query_dim(),
                model.items()
            )));
        }
    }
    if model.items() < 2 {
        return Err(ConfigError::Invalid("training needs at least two items".into()));
    }
    Ok(())
}

const TRAIN_STREAM: u64 = 0x5EED_0F5A_3D1E;

/// Trains stage `t` starting from the parameters currently in `model`,
/// returning the parameters with the best validation recall seen.
///
/// Every `eval_every` sampled pairs the validation recall@k of the cascade
/// ending at this stage is measured; training stops after `patience`
/// measurements without improvement or after `max_updates` samples.
pub fn train_stage<T: Scalar>(
    model: &Model<T>,
    train: &PairSet,
    valid: &PairSet,
    t: usize,
    cache: Option<&ContextCache>,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&ProgressRecord),
) -> Result<(StageParams<T>, StageReport), TrainError> {
    config.validate()?;
    check_sets(model, train, valid)?;
    if t > model.last_stage() {
        return Err(ConfigError::TooManyStages {
            requested: t,
            available: model.last_stage(),
        }
        .into());
    }
    match (t, cache) {
        (0, Some(_)) => {
            return Err(ConfigError::Invalid("stage 0 trains without a context cache".into()).into())
        }
        (t, None) if t > 0 => {
            return Err(ConfigError::Invalid(format!("stage {t} needs a context cache")).into())
        }
        (_, Some(c)) if c.len() != train.queries().len() => {
            return Err(ConfigError::Invalid("context cache does not cover every training query".into()).into())
        }
        _ => {}
    }

    let hp = &config.hyper;
    let weights = *model.weights();
    let k = model.k();
    let items = model.items();
    let valid_ctx: Option<Vec<RankedList>> = if t > 0 {
        Some(
            valid
                .queries()
                .par_iter()
                .map(|q| infer_iterative(model, q, t - 1).map(|o| o.into_final()))
                .collect::<Result<_, _>>()?,
        )
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(hp.seed ^ TRAIN_STREAM, t));
    let mut params = model.stage(t).clone();
    let mut report = StageReport::default();

    let mut measure = |params: &StageParams<T>, updates: u64, report: &mut StageReport| {
        let recall = validation_recall(params, valid, valid_ctx.as_deref(), &weights, k);
        let rec = ProgressRecord {
            stage: t,
            updates,
            k,
            valid_recall: recall,
        };
        progress(&rec);
        report.records.push(rec);
        recall
    };

    let mut best = params.clone();
    report.best_recall = measure(&params, 0, &mut report);
    let mut stale = 0;
    let mut updates = 0u64;
    let opts = StepOptions {
        learning_rate: hp.learning_rate,
        multiplier: 1.0,
        max_norm: hp.max_norm,
        weights: &weights,
        freeze_context: config.freeze_context,
    };

    while updates < config.max_updates {
        let pair = train.pairs()[rng.random_range(0..train.len())];
        let q = train.query(pair.query);
        let ctx = cache.map(|c| c.get(pair.query).items.as_slice());

        let sample = {
            let mut scorer = QueryScorer::new(&params, q)?;
            if let Some(ctx) = ctx {
                scorer = scorer.with_context(ctx, &weights)?;
            }
            let f_pos = scorer.score(pair.item);
            sample_violator(|d| scorer.score(d), f_pos, pair.item, items, hp.margin, &mut rng)
        };
        if sample.violating {
            let neg = sample.negative.expect("at least two items");
            let step = StepOptions {
                multiplier: warp_weight(sample.trials, items, hp.loss),
                ..opts
            };
            sgd_step(&mut params, q, pair.item, neg, ctx, &step);
            report.gradient_steps += 1;
        }
        updates += 1;

        if updates.is_multiple_of(config.eval_every) || updates == config.max_updates {
            if !params.is_finite() {
                return Err(TrainError::NonFinite { stage: t, updates });
            }
            let recall = measure(&params, updates, &mut report);
            if recall > report.best_recall {
                report.best_recall = recall;
                best = params.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    report.updates = updates;
    Ok((best, report))
}

/// Trains all `T + 1` stages in sequence.
pub fn train<T: Scalar>(train: &PairSet, valid: &PairSet, config: &TrainConfig) -> Result<Model<T>, TrainError> {
    Ok(train_with_progress(train, valid, config, &mut |_| {})?.0)
}

pub fn train_with_progress<T: Scalar>(
    train: &PairSet,
    valid: &PairSet,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&ProgressRecord),
) -> Result<(Model<T>, TrainReport), TrainError> {
    config.validate()?;
    if config.k > train.items() {
        return Err(ConfigError::KTooLarge {
            k: config.k,
            items: train.items(),
        }
        .into());
    }
    let mut model = Model::init(
        config.stages + 1,
        config.dim,
        train.query_dim(),
        train.items(),
        config.k,
        config.weight_scheme,
        config.hyper.seed,
    )?;
    let mut report = TrainReport::default();
    let mut cache: Option<ContextCache> = None;
    for t in 0..=config.stages {
        if t > 0 && config.warm_start {
            let prev = model.stage(t - 1).clone();
            let cur = model.stage_mut(t);
            cur.u = prev.u;
            cur.v = prev.v;
        }
        let (params, stage_report) = train_stage(&model, train, valid, t, cache.as_ref(), config, progress)?;
        *model.stage_mut(t) = params;
        report.stages.push(stage_report);
        if !model.stage(t).is_finite() {
            return Err(TrainError::NonFinite {
                stage: t,
                updates: report.stages[t].updates,
            });
        }
        if t < config.stages {
            cache = Some(cache_top_k(&model, train, t)?);
        }
    }
    Ok((model, report))
}
