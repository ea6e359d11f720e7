//! Latent structured ranking.
//!
//! Items are scored for a query by a low-rank bilinear form `(U q).(V d)`.
//! A ranked list additionally earns a learned item-item term
//! `sum_{i,j} w_i w_j (S d_i).(S d_j)` weighted by position, which lets the
//! model trade consistency against diversity at the top of the list.
//!
//! Training follows a cascade: stage 0 is an unstructured model; stage `t`
//! scores each item against the frozen top-k list of stage `t - 1`, which
//! keeps per-item scores independent and allows sampled WARP/AUC training.
//!
//! Parameter types are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the common instantiations.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod loss;
pub mod model;
pub mod persist;
pub mod scalar;
pub mod scoring;
pub mod synthetic;
pub mod trainer;
pub mod weights;

pub use dataset::{Pair, PairSet, Vocab};
pub use error::{ConfigError, DataError, ModelFileError, TrainError};
pub use evaluation::{evaluate, rank_of_positive, EvalReport};
pub use inference::{infer, InferenceConfig, Strategy};
pub use loss::LossKind;
pub use model::{ColumnMatrix, Model, StageParams};
pub use scalar::Scalar;
pub use scoring::{Query, RankedList};
pub use trainer::{train, HyperParams, TrainConfig};
pub use weights::{PositionWeights, WeightScheme};

/// Cascade with single-precision parameters, the on-disk precision.
pub type ModelF32 = model::Model<f32>;
/// Cascade with double-precision parameters.
pub type ModelF64 = model::Model<f64>;
pub type StageF32 = StageParams<f32>;
pub type StageF64 = StageParams<f64>;
