//! Two-level treatment-effect population:
//!
//! `U_s = sqrt(1 - eta^2) f(X_s) + eta eps_s`,
//! `tau_is = beta' X_s + gamma U_s + xi_is`, with `X_s ~ N(0, I_d)`,
//! `eps_s ~ N(0, 1)` and `xi_is ~ N(0, sigma^2)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{Exponent, SiteTable};
use crate::radius::empirical_distance_pool;

/// Nonlinear link `f` in the explained part of `U_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// `f(x) = sum_j sin(x_j)`.
    #[default]
    Sine,
    /// `f(x) = sum_j x_j / sqrt(d)`.
    Linear,
}

impl Link {
    pub fn apply(self, x: ArrayView1<'_, f64>) -> f64 {
        match self {
            Link::Sine => x.iter().map(|v| v.sin()).sum(),
            Link::Linear => x.sum() / (x.len() as f64).sqrt(),
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(Link::Sine),
            "linear" => Ok(Link::Linear),
            other => Err(Error::input(format!("unknown link {other:?} (sine, linear)"))),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Sine => "sine",
            Link::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpConfig {
    pub n_sites: usize,
    pub dim: usize,
    /// Fraction of effect heterogeneity not explained by covariates.
    pub eta: f64,
    /// Defaults to `(1, ..., 1) / sqrt(d)` when absent.
    pub beta: Option<Vec<f64>>,
    pub gamma: f64,
    pub sigma: f64,
    pub link: Link,
    pub units_per_site: usize,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n_sites: 30,
            dim: 5,
            eta: 0.0,
            beta: None,
            gamma: 1.0,
            sigma: 0.5,
            link: Link::Sine,
            units_per_site: 50,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 || self.dim == 0 || self.units_per_site == 0 {
            return Err(Error::input("n_sites, dim and units_per_site must be positive"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::input(format!("eta = {} outside [0, 1]", self.eta)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::input(format!("sigma = {} must be finite and nonnegative", self.sigma)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::input("gamma must be finite"));
        }
        if let Some(b) = &self.beta {
            if b.len() != self.dim || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("beta needs {} finite entries", self.dim)));
            }
        }
        Ok(())
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta
            .clone()
            .unwrap_or_else(|| vec![1.0 / (self.dim as f64).sqrt(); self.dim])
    }
}

/// A drawn population with its realised effects. The standard-normal
/// draws are kept so the same population can be re-evaluated at another
/// `eta` or with shifted covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub config: DgpConfig,
    pub table: SiteTable,
    /// `eps_s`.
    pub site_noise: Vec<f64>,
    /// Standard-normal `xi_is / sigma`, `n x units_per_site`.
    pub unit_noise: Array2<f64>,
    /// `tau_s = beta' X_s + gamma U_s`.
    pub site_effects: Vec<f64>,
    /// `tau_is`, `n x units_per_site`.
    pub unit_effects: Array2<f64>,
    /// Mean of `tau_is` over all units.
    pub pate: f64,
}

impl Population {
    fn realize(config: DgpConfig, table: SiteTable, site_noise: Vec<f64>, unit_noise: Array2<f64>) -> Population {
        let beta = config.beta();
        let explained = (1.0 - config.eta * config.eta).sqrt();
        let site_effects: Vec<f64> = (0..table.len())
            .map(|s| {
                let x = table.row(s);
                let u = explained * config.link.apply(x) + config.eta * site_noise[s];
                x.dot(&ArrayView1::from(&beta)) + config.gamma * u
            })
            .collect();
        let mut unit_effects = unit_noise.mapv(|z| config.sigma * z);
        for (mut row, tau) in unit_effects.axis_iter_mut(Axis(0)).zip(&site_effects) {
            row += *tau;
        }
        let pate = unit_effects.mean().expect("non-empty population");
        Population {
            config,
            table,
            site_noise,
            unit_noise,
            site_effects,
            unit_effects,
            pate,
        }
    }

    /// Population CATE `tau(x) = beta' x + gamma sqrt(1 - eta^2) f(x)`.
    pub fn cate(&self, x: ArrayView1<'_, f64>) -> f64 {
        let beta = self.config.beta();
        let explained = (1.0 - self.config.eta * self.config.eta).sqrt();
        x.dot(&ArrayView1::from(&beta)) + self.config.gamma * explained * self.config.link.apply(x)
    }

    /// Same draws under another heterogeneity level.
    pub fn with_eta(&self, eta: f64) -> Result<Population> {
        let config = DgpConfig { eta, ..self.config.clone() };
        config.validate()?;
        Ok(Population::realize(config, self.table.clone(), self.site_noise.clone(), self.unit_noise.clone()))
    }

    /// Same draws with the covariates moved by [`induce_shift`]; effects are
    /// recomputed at the shifted covariates.
    pub fn shifted(&self, varsigma: f64) -> Result<Population> {
        let table = induce_shift(&self.table, varsigma)?;
        Ok(Population::realize(self.config.clone(), table, self.site_noise.clone(), self.unit_noise.clone()))
    }
}

/// Draws `X` (row-major), then `eps`, then `xi` from one seeded stream.
pub fn generate_population(config: &DgpConfig) -> Result<Population> {
    config.validate()?;
    let (n, d, m) = (config.n_sites, config.dim, config.units_per_site);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let x = Array2::from_shape_simple_fn((n, d), &mut normal);
    let site_noise: Vec<f64> = (0..n).map(|_| normal()).collect();
    let unit_noise = Array2::from_shape_simple_fn((n, m), &mut normal);
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    let table = SiteTable::new(ids, x)?;
    Ok(Population::realize(config.clone(), table, site_noise, unit_noise))
}

/// Scales below which a site counts as sitting on the covariate mean.
const AT_MEAN_TOL: f64 = 1e-12;

/// Moves every site radially away from the covariate mean by
/// `varsigma * d_med / 2`, `d_med` the median pairwise distance. Sites on
/// the mean stay put; `varsigma = 0` returns the table unchanged.
pub fn induce_shift(table: &SiteTable, varsigma: f64) -> Result<SiteTable> {
    if !(varsigma >= 0.0 && varsigma.is_finite()) {
        return Err(Error::input(format!("shift multiplier {varsigma} must be finite and nonnegative")));
    }
    if table.len() < 2 {
        return Err(Error::input("shift needs at least two sites"));
    }
    if varsigma == 0.0 {
        return Ok(table.clone());
    }
    let d_med = empirical_distance_pool(table, Exponent::One)?.median();
    let step = varsigma * d_med / 2.0;
    let x = table.covariates();
    let mean = x.mean_axis(Axis(0)).expect("non-empty table");
    let mut shifted = x.to_owned();
    for mut row in shifted.axis_iter_mut(Axis(0)) {
        let offset = &row - &mean;
        let norm = offset.dot(&offset).sqrt();
        if norm > AT_MEAN_TOL {
            row.scaled_add(step / norm, &offset);
        }
    }
    table.with_covariates(shifted)
}
