//! Margin ranking losses and the sampled rank estimate used to weight them.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Rank-to-loss schedule: `alpha_i = 1/i` (WARP) or `alpha_i = 1` (AUC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Warp,
    Auc,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "warp" => Ok(LossKind::Warp),
            "auc" => Ok(LossKind::Auc),
            other => Err(format!("unknown loss `{other}` (expected warp or auc)")),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Warp => "warp",
            LossKind::Auc => "auc",
        })
    }
}

/// `max(0, margin - f_pos + f_neg)`.
#[inline]
pub fn auc_hinge(f_pos: f64, f_neg: f64, margin: f64) -> f64 {
    (margin - f_pos + f_neg).max(0.0)
}

/// `L(r) = sum_{i=1..r} alpha_i`.
pub fn rank_to_loss(r: usize, kind: LossKind) -> f64 {
    match kind {
        LossKind::Warp => (1..=r).map(|i| 1.0 / i as f64).sum(),
        LossKind::Auc => r as f64,
    }
}

/// Estimated margin rank `floor((D - 1) / N)` after `N` sampling trials.
#[inline]
pub fn estimated_rank(trials: usize, items: usize) -> usize {
    (items - 1) / trials
}

/// Loss multiplier `L(floor((D - 1) / N))`.
pub fn warp_weight(trials: usize, items: usize, kind: LossKind) -> f64 {
    assert!(
        trials >= 1 && trials < items,
        "trial count {trials} outside 1..={}",
        items.saturating_sub(1)
    );
    rank_to_loss(estimated_rank(trials, items), kind)
}

/// Outcome of searching for a margin-violating negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViolationSample {
    /// Last negative drawn; `None` only when there is no other item.
    pub negative: Option<usize>,
    pub trials: usize,
    pub violating: bool,
}

/// Draws uniform negatives (with replacement, never `positive`) until one
/// scores within `margin` of `f_pos` or `D - 1` trials have elapsed.
pub fn sample_violator<R: Rng + ?Sized>(
    mut score: impl FnMut(usize) -> f64,
    f_pos: f64,
    positive: usize,
    items: usize,
    margin: f64,
    rng: &mut R,
) -> ViolationSample {
    if items < 2 {
        return ViolationSample {
            negative: None,
            trials: 0,
            violating: false,
        };
    }
    let mut trials = 0;
    loop {
        let mut neg = rng.random_range(0..items - 1);
        if neg >= positive {
            neg += 1;
        }
        trials += 1;
        let violating = f_pos < score(neg) + margin;
        if violating || trials >= items - 1 {
            return ViolationSample {
                negative: Some(neg),
                trials,
                violating,
            };
        }
    }
}
