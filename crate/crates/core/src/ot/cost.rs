use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent `p` of the Wasserstein distance; costs are `‖x − y‖^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Exponent {
    One,
    Two,
}

impl Exponent {
    pub fn value(self) -> u8 {
        match self {
            Exponent::One => 1,
            Exponent::Two => 2,
        }
    }

    /// Raises a Euclidean distance to the `p`-th power.
    pub fn power(self, dist: f64) -> f64 {
        match self {
            Exponent::One => dist,
            Exponent::Two => dist * dist,
        }
    }

    /// Inverse of [`Exponent::power`] for a transport cost.
    pub fn root(self, cost: f64) -> f64 {
        match self {
            Exponent::One => cost,
            Exponent::Two => cost.max(0.0).sqrt(),
        }
    }
}

impl TryFrom<u8> for Exponent {
    type Error = Error;

    fn try_from(p: u8) -> Result<Self> {
        match p {
            1 => Ok(Exponent::One),
            2 => Ok(Exponent::Two),
            other => Err(Error::input(format!("exponent p must be 1 or 2, got {other}"))),
        }
    }
}

impl From<Exponent> for u8 {
    fn from(p: Exponent) -> u8 {
        p.value()
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Dense `n x m` matrix of `‖a_i − b_j‖^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    p: Exponent,
}

impl CostMatrix {
    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn p(&self) -> Exponent {
        self.p
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub(crate) fn as_slice(&self) -> &[f64] {
        self.entries
            .as_slice()
            .expect("cost matrices are built in standard layout")
    }
}

pub(crate) fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Pairwise costs between the rows of `a` and the rows of `b`.
pub fn pairwise_costs(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, p: Exponent) -> Result<CostMatrix> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::input("pairwise costs need non-empty point sets"));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite coordinate in point set"));
    }
    let entries = Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        p.power(euclidean(a.row(i), b.row(j)))
    });
    Ok(CostMatrix { entries, p })
}
