use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dgp::Population;
use crate::error::{Error, Result};

/// Penalty used when the selected sites do not identify the linear CATE.
pub const RIDGE_FALLBACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Squared error of the selected-site mean effect against the PATE.
    Pate,
    /// PEHE of a linear CATE fit on the selected sites' units.
    Cate,
}

fn check(selection: &[usize], pop: &Population) -> Result<()> {
    if selection.is_empty() {
        return Err(Error::input("empty selection"));
    }
    if let Some(&bad) = selection.iter().find(|&&s| s >= pop.table.len()) {
        return Err(Error::input(format!("site {bad} outside the population")));
    }
    Ok(())
}

/// Mean unit effect over the selected sites' units (every site has the
/// same number of units).
pub fn pate_estimate(selection: &[usize], pop: &Population) -> Result<f64> {
    check(selection, pop)?;
    let total: f64 = selection.iter().map(|&s| pop.unit_effects.row(s).sum()).sum();
    Ok(total / (selection.len() * pop.unit_effects.ncols()) as f64)
}

/// Coefficients `(intercept, slopes)` of the least-squares fit of unit
/// effects on site covariates; falls back to ridge when the design is
/// rank deficient.
pub fn fit_linear_cate(selection: &[usize], pop: &Population) -> Result<Vec<f64>> {
    check(selection, pop)?;
    let d = pop.table.dim();
    let m = pop.unit_effects.ncols() as f64;
    // units of a site share its covariates, so the normal equations
    // aggregate per site
    let mut gram = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut rhs = DVector::<f64>::zeros(d + 1);
    for &s in selection {
        let mut z = DVector::<f64>::zeros(d + 1);
        z[0] = 1.0;
        for (j, v) in pop.table.row(s).iter().enumerate() {
            z[j + 1] = *v;
        }
        gram += m * &z * z.transpose();
        rhs += pop.unit_effects.row(s).sum() * z;
    }
    // rank of the design equals the affine rank of the selected points plus one
    let rank = gram.clone().svd(false, false).rank(1e-10 * gram.norm().max(1.0));
    let system = if rank == d + 1 {
        gram
    } else {
        gram + DMatrix::<f64>::identity(d + 1, d + 1) * RIDGE_FALLBACK
    };
    let coef = system
        .cholesky()
        .ok_or_else(|| Error::internal("CATE normal equations are not positive definite"))?
        .solve(&rhs);
    Ok(coef.iter().copied().collect())
}

/// PEHE of the fitted linear CATE: mean over all units of
/// `(tau_is - tau_hat(X_s))^2`.
pub fn pehe(selection: &[usize], pop: &Population) -> Result<f64> {
    let coef = fit_linear_cate(selection, pop)?;
    let n = pop.table.len();
    let mut total = 0.0;
    for s in 0..n {
        let pred = coef[0] + pop.table.row(s).iter().zip(&coef[1..]).map(|(x, b)| x * b).sum::<f64>();
        total += pop.unit_effects.row(s).iter().map(|t| (t - pred).powi(2)).sum::<f64>();
    }
    Ok(total / (n * pop.unit_effects.ncols()) as f64)
}

pub fn evaluate_selection(selection: &[usize], pop: &Population, estimator: Estimator) -> Result<f64> {
    match estimator {
        Estimator::Pate => Ok((pate_estimate(selection, pop)? - pop.pate).powi(2)),
        Estimator::Cate => pehe(selection, pop),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::dgp::{generate_population, DgpConfig, Link};

    #[test]
    fn select_all_is_exact() {
        let cfg = DgpConfig { n_sites: 12, sigma: 0.0, ..DgpConfig::default() };
        let pop = generate_population(&cfg).unwrap();
        let all: Vec<usize> = (0..12).collect();
        assert!(evaluate_selection(&all, &pop, Estimator::Pate).unwrap() < 1e-24);

        let linear = DgpConfig { n_sites: 12, sigma: 0.0, gamma: 0.0, link: Link::Linear, ..DgpConfig::default() };
        let pop = generate_population(&linear).unwrap();
        assert!(evaluate_selection(&all, &pop, Estimator::Cate).unwrap() < 1e-20);
    }

    #[test]
    fn rank_deficient_fit_is_finite() {
        let pop = generate_population(&DgpConfig::default()).unwrap();
        let v = evaluate_selection(&[0, 1, 2], &pop, Estimator::Cate).unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }
}
