//! Per-position weights of a ranked list.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Rule assigning a weight to each list position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightScheme {
    /// `1/i` for the first `k` positions, zero afterwards.
    SparseHarmonic,
    /// `1/i` at every position.
    DenseHarmonic,
}

impl WeightScheme {
    pub fn tag(self) -> u8 {
        match self {
            WeightScheme::SparseHarmonic => 0,
            WeightScheme::DenseHarmonic => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(WeightScheme::SparseHarmonic),
            1 => Some(WeightScheme::DenseHarmonic),
            _ => None,
        }
    }
}

/// Position weights `w_1 > w_2 > ... > 0`, indexed from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionWeights {
    k: usize,
    scheme: WeightScheme,
}

impl PositionWeights {
    pub fn new(k: usize, scheme: WeightScheme) -> Result<Self, ConfigError> {
        if k < 1 {
            return Err(ConfigError::NonPositive("k"));
        }
        Ok(PositionWeights { k, scheme })
    }

    /// The default truncated harmonic weights.
    pub fn sparse(k: usize) -> Result<Self, ConfigError> {
        Self::new(k, WeightScheme::SparseHarmonic)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    /// Weight of the zero-based position `pos`.
    #[inline]
    pub fn at(&self, pos: usize) -> f64 {
        match self.scheme {
            WeightScheme::SparseHarmonic if pos >= self.k => 0.0,
            _ => 1.0 / (pos + 1) as f64,
        }
    }

    /// The first `len` weights.
    pub fn prefix(&self, len: usize) -> Vec<f64> {
        (0..len).map(|i| self.at(i)).collect()
    }

    /// The `k` leading weights.
    pub fn nonzeros(&self) -> Vec<f64> {
        self.prefix(self.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k3_is_truncated_harmonic() {
        let w = PositionWeights::sparse(3).unwrap();
        assert_eq!(w.prefix(5), vec![1.0, 0.5, 1.0 / 3.0, 0.0, 0.0]);
    }

    #[test]
    fn k1_has_a_single_unit_weight() {
        let w = PositionWeights::sparse(1).unwrap();
        assert_eq!(w.prefix(3), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn k20_has_twenty_nonzeros() {
        let w = PositionWeights::sparse(20).unwrap();
        let p = w.prefix(100);
        assert_eq!(p.iter().filter(|&&x| x > 0.0).count(), 20);
        assert!(p.windows(2).take(19).all(|x| x[0] > x[1]));
        assert_eq!(p[19], 1.0 / 20.0);
    }

    #[test]
    fn dense_scheme_never_vanishes() {
        let w = PositionWeights::new(2, WeightScheme::DenseHarmonic).unwrap();
        assert_eq!(w.at(9), 0.1);
    }

    #[test]
    fn zero_k_is_rejected() {
        assert_eq!(PositionWeights::sparse(0), Err(ConfigError::NonPositive("k")));
    }

    #[test]
    fn scheme_tags_round_trip() {
        for s in [WeightScheme::SparseHarmonic, WeightScheme::DenseHarmonic] {
            assert_eq!(WeightScheme::from_tag(s.tag()), Some(s));
        }
        assert_eq!(WeightScheme::from_tag(7), None);
    }
}
