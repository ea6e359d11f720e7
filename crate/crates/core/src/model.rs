//! Model parameters: per-stage embedding matrices, initialization and the
//! column norm constraint.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::ConfigError;
use crate::scalar::{norm_sq, Scalar};
use crate::weights::{PositionWeights, WeightScheme};

/// Dense `rows x cols` matrix stored column by column, so that the
/// embedding of one item (or query feature) is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> ColumnMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ColumnMatrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds a matrix from column-major data.
    pub fn from_columns(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "column data has the wrong length");
        ColumnMatrix { rows, cols, data }
    }

    /// Builds a matrix from a row-major nested description, mostly for tests.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &x) in row.iter().enumerate() {
                m.set(i, j, x);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: T) {
        self.data[j * self.rows + i] = x;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, x: T) {
        self.data.iter_mut().for_each(|v| *v = x);
    }

    pub fn scale(&mut self, c: T) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn col_norm(&self, j: usize) -> f64 {
        norm_sq(self.col(j)).sqrt()
    }

    pub fn max_col_norm(&self) -> f64 {
        (0..self.cols).map(|j| self.col_norm(j)).fold(0.0, f64::max)
    }

    /// Rescales every column whose norm exceeds `max_norm` onto the ball.
    pub fn project_columns(&mut self, max_norm: f64) {
        for j in 0..self.cols {
            project_column(self.col_mut(j), max_norm);
        }
    }

    pub fn projected(&self, max_norm: f64) -> Self {
        let mut m = self.clone();
        m.project_columns(max_norm);
        m
    }
}

/// Relative slack before a column counts as outside the ball; absorbs the
/// rounding of a previous rescale so projection is idempotent.
const PROJECTION_SLACK: f64 = 1e-9;

/// Projects one column onto the ball of radius `max_norm`. Columns already
/// inside the ball, including zero columns, are left untouched.
#[inline]
pub fn project_column<T: Scalar>(col: &mut [T], max_norm: f64) {
    let norm = norm_sq(col).sqrt();
    if norm > max_norm * (1.0 + PROJECTION_SLACK) {
        let f = max_norm / norm;
        for x in col.iter_mut() {
            *x = T::from_acc(x.to_acc() * f);
        }
    }
}

/// One cascade stage: query map `U` (`n x D_q`), item map `V` and structure
/// map `S` (both `n x D_items`).
#[derive(Debug, Clone, PartialEq)]
pub struct StageParams<T> {
    pub u: ColumnMatrix<T>,
    pub v: ColumnMatrix<T>,
    pub s: ColumnMatrix<T>,
}

impl<T: Scalar> StageParams<T> {
    pub fn zeros(dim: usize, query_dim: usize, items: usize) -> Self {
        StageParams {
            u: ColumnMatrix::zeros(dim, query_dim),
            v: ColumnMatrix::zeros(dim, items),
            s: ColumnMatrix::zeros(dim, items),
        }
    }

    /// Draws every entry i.i.d. from `N(0, 1/sqrt(dim))`, filling `U`, `V`
    /// and `S` in that order from a stream seeded by `seed`.
    pub fn init(dim: usize, query_dim: usize, items: usize, seed: u64) -> Result<Self, ConfigError> {
        if dim == 0 {
            return Err(ConfigError::NonPositive("latent dimension"));
        }
        if query_dim == 0 {
            return Err(ConfigError::NonPositive("query dimension"));
        }
        if items == 0 {
            return Err(ConfigError::NonPositive("item count"));
        }
        let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(dim, query_dim, items);
        for m in [&mut p.u, &mut p.v, &mut p.s] {
            for x in m.as_mut_slice() {
                *x = T::from_acc(normal.sample(&mut rng));
            }
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.v.rows()
    }

    pub fn query_dim(&self) -> usize {
        self.u.cols()
    }

    pub fn items(&self) -> usize {
        self.v.cols()
    }

    pub fn project(&mut self, max_norm: f64) {
        self.u.project_columns(max_norm);
        self.v.project_columns(max_norm);
        self.s.project_columns(max_norm);
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.s.is_finite()
    }

    pub fn max_col_norm(&self) -> f64 {
        self.u
            .max_col_norm()
            .max(self.v.max_col_norm())
            .max(self.s.max_col_norm())
    }
}

/// Seed of stage `t` derived from the run seed.
pub fn stage_seed(seed: u64, stage: usize) -> u64 {
    seed ^ (stage as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// A cascade of `T + 1` stages sharing dimensions and position weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    stages: Vec<StageParams<T>>,
    weights: PositionWeights,
}

impl<T: Scalar> Model<T> {
    pub fn new(stages: Vec<StageParams<T>>, weights: PositionWeights) -> Result<Self, ConfigError> {
        let first = stages.first().ok_or(ConfigError::Empty("stage list"))?;
        let dims = (first.dim(), first.query_dim(), first.items());
        for st in &stages {
            if (st.dim(), st.query_dim(), st.items()) != dims
                || st.s.rows() != dims.0
                || st.s.cols() != dims.2
                || st.u.rows() != dims.0
            {
                return Err(ConfigError::Invalid(
                    "all stages must share the same dimensions".into(),
                ));
            }
        }
        if weights.k() > dims.2 {
            return Err(ConfigError::KTooLarge {
                k: weights.k(),
                items: dims.2,
            });
        }
        Ok(Model { stages, weights })
    }

    /// Randomly initialized cascade with `num_stages` stages.
    pub fn init(
        num_stages: usize,
        dim: usize,
        query_dim: usize,
        items: usize,
        k: usize,
        scheme: WeightScheme,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        if num_stages == 0 {
            return Err(ConfigError::NonPositive("stage count"));
        }
        let stages = (0..num_stages)
            .map(|t| StageParams::init(dim, query_dim, items, stage_seed(seed, t)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(stages, PositionWeights::new(k, scheme)?)
    }

    pub fn stages(&self) -> &[StageParams<T>] {
        &self.stages
    }

    pub fn stage(&self, t: usize) -> &StageParams<T> {
        &self.stages[t]
    }

    pub fn stage_mut(&mut self, t: usize) -> &mut StageParams<T> {
        &mut self.stages[t]
    }

    /// Index of the last stage, `T`.
    pub fn last_stage(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn dim(&self) -> usize {
        self.stages[0].dim()
    }

    pub fn query_dim(&self) -> usize {
        self.stages[0].query_dim()
    }

    pub fn items(&self) -> usize {
        self.stages[0].items()
    }

    pub fn k(&self) -> usize {
        self.weights.k()
    }

    pub fn weights(&self) -> &PositionWeights {
        &self.weights
    }

    pub fn is_finite(&self) -> bool {
        self.stages.iter().all(StageParams::is_finite)
    }

    /// Converts parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let conv = |m: &ColumnMatrix<T>| {
            ColumnMatrix::from_columns(
                m.rows(),
                m.cols(),
                m.as_slice().iter().map(|x| U::from_acc(x.to_acc())).collect(),
            )
        };
        Model {
            stages: self
                .stages
                .iter()
                .map(|s| StageParams {
                    u: conv(&s.u),
                    v: conv(&s.v),
                    s: conv(&s.s),
                })
                .collect(),
            weights: self.weights,
        }
    }
}
