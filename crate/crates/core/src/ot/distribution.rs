use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution.
pub const MASS_TOL: f64 = 1e-9;

/// Finite weighted point mass over site indices of a [`SiteTable`](super::SiteTable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    support: Vec<usize>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::input(format!(
                "{} support points with {} weights",
                support.len(),
                weights.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::input("distribution with empty support"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::input(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::input(format!("weights sum to {total}, expected 1")));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::input("support indices must be distinct"));
        }
        Ok(DiscreteDistribution { support, weights })
    }

    /// Uniform mass `1/n` on sites `0..n`.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::uniform_on((0..n).collect())
    }

    /// Uniform mass on the given sites.
    pub fn uniform_on(support: Vec<usize>) -> Result<Self> {
        let k = support.len();
        if k == 0 {
            return Err(Error::input("distribution with empty support"));
        }
        let weights = vec![1.0 / k as f64; k];
        Self::new(support, weights)
    }

    /// Dense weight vector over `0..n` (zero weights allowed), e.g. an
    /// adversarial distribution on the candidate points.
    pub fn from_dense(weights: &[f64]) -> Result<Self> {
        Self::new((0..weights.len()).collect(), weights.to_vec())
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Errors unless every support index is below `n`.
    pub fn check_range(&self, n: usize) -> Result<()> {
        match self.support.iter().find(|&&s| s >= n) {
            Some(s) => Err(Error::input(format!("support index {s} out of range for {n} sites"))),
            None => Ok(()),
        }
    }

    /// Drops zero-weight atoms and orders the support ascending.
    pub fn canonical(&self) -> DiscreteDistribution {
        let mut pairs: Vec<(usize, f64)> = self
            .support
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .filter(|&(_, w)| w > 0.0)
            .collect();
        pairs.sort_unstable_by_key(|&(s, _)| s);
        let (support, weights) = pairs.into_iter().unzip();
        DiscreteDistribution { support, weights }
    }

    /// Dense weights over `0..n`.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&s, &w) in self.support.iter().zip(&self.weights) {
            out[s] += w;
        }
        out
    }
}
