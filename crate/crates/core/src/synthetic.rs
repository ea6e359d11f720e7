//! Planted-cluster benchmark data.
//!
//! Items are split into equal clusters and carry a latent style shared
//! across clusters. Each query has a home cluster and a preferred style, and
//! draws positives only from its home cluster, weighted by popularity times
//! style affinity. A low-rank query-item score cannot express "home cluster
//! AND matching style", so items of other clusters with a matching style
//! become decoys: high query affinity, wrong cluster. A small share of
//! interactions also goes to a query-specific decoy cluster, and some are
//! uniform noise.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::PairSet;
use crate::error::{ConfigError, TrainError};
use crate::evaluation::evaluate;
use crate::inference::{InferenceConfig, Strategy};
use crate::loss::LossKind;
use crate::model::Model;
use crate::trainer::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub items: usize,
    pub clusters: usize,
    pub queries: usize,
    pub train_per_query: usize,
    pub valid_per_query: usize,
    pub test_per_query: usize,
    /// Probability that an interaction comes from the query's decoy cluster.
    pub decoy_rate: f64,
    /// Probability that an interaction is a uniformly random item.
    pub noise_rate: f64,
    /// Exponent of the within-cluster popularity law `1 / (rank + 1)^s`.
    pub popularity_exponent: f64,
    /// Dimension of the latent style shared across clusters.
    pub style_dim: usize,
    /// Inverse temperature of the style affinity inside the home cluster.
    pub style_strength: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            items: 500,
            clusters: 10,
            queries: 1000,
            train_per_query: 10,
            valid_per_query: 1,
            test_per_query: 4,
            decoy_rate: 0.1,
            noise_rate: 0.3,
            popularity_exponent: 0.7,
            style_dim: 4,
            style_strength: 4.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: PairSet,
    pub valid: PairSet,
    pub test: PairSet,
    pub item_cluster: Vec<usize>,
    pub query_cluster: Vec<usize>,
    pub query_decoy_cluster: Vec<usize>,
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData, ConfigError> {
    if config.clusters < 2 {
        return Err(ConfigError::Invalid("at least two clusters are needed".into()));
    }
    if config.items < config.clusters {
        return Err(ConfigError::Invalid("fewer items than clusters".into()));
    }
    if config.queries == 0 {
        return Err(ConfigError::NonPositive("queries"));
    }
    if config.train_per_query == 0 || config.valid_per_query == 0 || config.test_per_query == 0 {
        return Err(ConfigError::NonPositive("pairs per query"));
    }
    if !(0.0..=1.0).contains(&config.decoy_rate) || !(0.0..=1.0).contains(&config.noise_rate) {
        return Err(ConfigError::Invalid("decoy and noise rates must lie in [0, 1]".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let item_cluster: Vec<usize> = (0..config.items).map(|d| d % config.clusters).collect();
    let members: Vec<Vec<usize>> = (0..config.clusters)
        .map(|c| (0..config.items).filter(|&d| item_cluster[d] == c).collect())
        .collect();
    let popularity: Vec<Vec<f64>> = members
        .iter()
        .map(|m| (0..m.len()).map(|r| 1.0 / ((r + 1) as f64).powf(config.popularity_exponent)).collect())
        .collect();
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let v: Vec<f64> = (0..config.style_dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / norm).collect()
    };
    let item_style: Vec<Vec<f64>> = (0..config.items).map(|_| unit(&mut rng)).collect();

    let mut query_cluster = Vec::with_capacity(config.queries);
    let mut query_decoy_cluster = Vec::with_capacity(config.queries);
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for q in 0..config.queries {
        let home = rng.random_range(0..config.clusters);
        let mut decoy = rng.random_range(0..config.clusters - 1);
        if decoy >= home {
            decoy += 1;
        }
        query_cluster.push(home);
        query_decoy_cluster.push(decoy);
        let style = unit(&mut rng);
        let picker = |c: usize| {
            let w = members[c].iter().zip(&popularity[c]).map(|(&d, p)| {
                let affinity: f64 = style.iter().zip(&item_style[d]).map(|(a, b)| a * b).sum();
                p * (config.style_strength * affinity).exp()
            });
            WeightedIndex::new(w).expect("positive weights")
        };
        let (home_pick, decoy_pick) = (picker(home), picker(decoy));
        let draw = |rng: &mut ChaCha8Rng| {
            if rng.random_bool(config.noise_rate) {
                rng.random_range(0..config.items)
            } else if rng.random_bool(config.decoy_rate) {
                members[decoy][decoy_pick.sample(rng)]
            } else {
                members[home][home_pick.sample(rng)]
            }
        };
        for _ in 0..config.train_per_query {
            train.push((q, draw(&mut rng)));
        }
        for _ in 0..config.valid_per_query {
            valid.push((q, draw(&mut rng)));
        }
        for _ in 0..config.test_per_query {
            test.push((q, draw(&mut rng)));
        }
    }
    Ok(SyntheticData {
        train: PairSet::from_one_hot(&train, config.queries, config.items)?,
        valid: PairSet::from_one_hot(&valid, config.queries, config.items)?,
        test: PairSet::from_one_hot(&test, config.queries, config.items)?,
        item_cluster,
        query_cluster,
        query_decoy_cluster,
    })
}

/// Held-out recall@k of one benchmark run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOutcome {
    pub seed: u64,
    /// Unstructured cascade (iteration 0).
    pub recall_t0: f64,
    /// Cascade through the last trained stage; equal to `recall_t0` when
    /// only stage 0 was trained.
    pub recall_t1: f64,
}

impl BenchOutcome {
    pub fn improvement(&self) -> f64 {
        self.recall_t1 - self.recall_t0
    }
}

/// Training settings of the benchmark: one structured stage over the
/// unstructured one, `n = 16`, `k = 5`. Learning rates per loss were picked
/// on seeds 100..110, disjoint from the benchmark seeds.
pub fn bench_train_config(loss: LossKind, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        stages: 1,
        k: 5,
        dim: 16,
        eval_every: 20_000,
        patience: 3,
        max_updates: 400_000,
        ..TrainConfig::default()
    };
    cfg.hyper.loss = loss;
    cfg.hyper.seed = seed;
    cfg.hyper.learning_rate = match loss {
        LossKind::Warp => 0.005,
        LossKind::Auc => 0.000_03,
    };
    cfg.hyper.max_norm = 1.0;
    cfg
}

/// Generates data with `data.seed = seed`, trains with `train_cfg` and
/// reports held-out recall@k for iteration 0 and the last iteration.
pub fn run_benchmark(
    data_cfg: &SyntheticConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<BenchOutcome, TrainError> {
    let data = generate(&SyntheticConfig {
        seed,
        ..data_cfg.clone()
    })?;
    let mut cfg = train_cfg.clone();
    cfg.hyper.seed = seed;
    let model: Model<f32> = train(&data.train, &data.valid, &cfg)?;
    let k = cfg.k;
    let recall_at = |stage: usize| -> Result<f64, ConfigError> {
        let inf = InferenceConfig {
            strategy: Strategy::Iterative,
            beam_width: 1,
            stages_to_run: Some(stage),
        };
        let report = evaluate(&model, &data.test, &[k], &inf)?;
        Ok(report.recall_at[&k])
    };
    Ok(BenchOutcome {
        seed,
        recall_t0: recall_at(0)?,
        recall_t1: recall_at(model.last_stage())?,
    })
}
