use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column affine map applied by [`SiteTable::standardized`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub scale: f64,
}

/// Candidate sites and their covariates.
///
/// Rows of `x` are index-aligned with `ids`. Construction rejects empty
/// tables, duplicate identifiers and non-finite covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTable {
    ids: Vec<String>,
    x: Array2<f64>,
    standardization: Option<Vec<ColumnScale>>,
}

impl SiteTable {
    pub fn new(ids: Vec<String>, x: Array2<f64>) -> Result<Self> {
        let (n, d) = x.dim();
        if n == 0 || d == 0 {
            return Err(Error::input(format!("site table must be non-empty, got {n}x{d}")));
        }
        if ids.len() != n {
            return Err(Error::input(format!("{} ids for {} covariate rows", ids.len(), n)));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::input(format!("duplicate site id {id:?}")));
            }
        }
        if let Some(((r, c), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::input(format!("non-finite covariate {v} at row {r}, column {c}")));
        }
        Ok(SiteTable {
            ids,
            x,
            standardization: None,
        })
    }

    /// Builds a table from row vectors, naming sites `s0, s1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
        SiteTable::from_named_rows(ids, rows)
    }

    pub fn from_named_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::input("ragged covariate rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::input(e.to_string()))?;
        SiteTable::new(ids, x)
    }

    /// One-dimensional table with the given coordinates.
    pub fn from_line(coords: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = coords.iter().map(|&c| vec![c]).collect();
        SiteTable::from_rows(&rows)
    }

    /// Z-scores every column with the sample standard deviation. Constant
    /// columns (and single-row tables) are centred with scale 1.
    pub fn standardized(&self) -> SiteTable {
        let n = self.len();
        let mut x = self.x.clone();
        let mut scales = Vec::with_capacity(self.dim());
        for mut col in x.axis_iter_mut(Axis(1)) {
            let mean = col.sum() / n as f64;
            let var = if n > 1 {
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            let sd = var.sqrt();
            let scale = if sd > 1e-12 * (1.0 + mean.abs()) { sd } else { 1.0 };
            col.mapv_inplace(|v| (v - mean) / scale);
            scales.push(ColumnScale { mean, scale });
        }
        SiteTable {
            ids: self.ids.clone(),
            x,
            standardization: Some(scales),
        }
    }

    /// Same sites with replacement covariates (used by shift inducement).
    pub fn with_covariates(&self, x: Array2<f64>) -> Result<SiteTable> {
        if x.dim() != self.x.dim() {
            return Err(Error::input("replacement covariates change the table shape"));
        }
        SiteTable::new(self.ids.clone(), x)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn covariates(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn standardization(&self) -> Option<&[ColumnScale]> {
        self.standardization.as_deref()
    }
}
