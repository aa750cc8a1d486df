use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::dgp::{generate_population, DgpConfig, Link, Population};
use super::metrics::{evaluate_selection, Estimator};
use crate::baselines::{random_select, stratified_select};
use crate::dro::{robust_select, DroOptions};
use crate::error::{Error, Result};
use crate::ot::{Exponent, SiteTable};
use crate::radius::{empirical_distance_pool, quantile_sorted, select_radius, Band};
use crate::select::{select_sites, SolveMode};

/// Grid points used when a method calibrates its radius by Jaccard level.
const LEVEL_GRID: usize = 12;

/// A selection method compared by the harness. PATE-oriented methods use
/// `p = 1`, the CATE-oriented one `p = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    OptPate,
    OptCate,
    Random,
    Stratified,
    /// Robust selection at the given percentile of pairwise site distances.
    DroQuantile(u8),
    /// Robust selection at a Jaccard-calibrated radius.
    DroLevel(Band),
}

impl Method {
    fn is_stochastic(self) -> bool {
        matches!(self, Method::Random | Method::Stratified)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::OptPate => f.write_str("opt-pate"),
            Method::OptCate => f.write_str("opt-cate"),
            Method::Random => f.write_str("random"),
            Method::Stratified => f.write_str("stratified"),
            Method::DroQuantile(q) => write!(f, "dro-q{q}"),
            Method::DroLevel(Band::Moderate) => f.write_str("dro-moderate"),
            Method::DroLevel(Band::High) => f.write_str("dro-high"),
            Method::DroLevel(Band::Maximum) => f.write_str("dro-maximum"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::input(format!(
                "unknown method {s:?} (opt-pate, opt-cate, random, stratified, dro-qNN, dro-moderate, dro-high, dro-maximum)"
            ))
        };
        match s {
            "opt-pate" => Ok(Method::OptPate),
            "opt-cate" => Ok(Method::OptCate),
            "random" => Ok(Method::Random),
            "stratified" => Ok(Method::Stratified),
            _ => {
                let rest = s.strip_prefix("dro-").ok_or_else(bad)?;
                if let Some(q) = rest.strip_prefix('q') {
                    let q: u8 = q.parse().map_err(|_| bad())?;
                    if q > 100 {
                        return Err(bad());
                    }
                    Ok(Method::DroQuantile(q))
                } else {
                    rest.parse::<Band>().map(Method::DroLevel).map_err(|_| bad())
                }
            }
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Population parameters shared by every cell; `eta` and the seed are set
/// per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSpec {
    pub n_sites: usize,
    pub dim: usize,
    pub beta: Option<Vec<f64>>,
    pub gamma: f64,
    pub sigma: f64,
    pub link: Link,
    pub units_per_site: usize,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        let d = DgpConfig::default();
        PopulationSpec {
            n_sites: d.n_sites,
            dim: d.dim,
            beta: d.beta,
            gamma: d.gamma,
            sigma: d.sigma,
            link: d.link,
            units_per_site: d.units_per_site,
        }
    }
}

impl PopulationSpec {
    fn dgp(&self, eta: f64, seed: u64) -> DgpConfig {
        DgpConfig {
            n_sites: self.n_sites,
            dim: self.dim,
            eta,
            beta: self.beta.clone(),
            gamma: self.gamma,
            sigma: self.sigma,
            link: self.link,
            units_per_site: self.units_per_site,
            seed,
        }
    }
}

/// Full factorial sweep `eta x shift x method x replication`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub seed: u64,
    pub replications: usize,
    /// Sites selected per method, `K`.
    pub budget: usize,
    pub etas: Vec<f64>,
    pub shifts: Vec<f64>,
    pub methods: Vec<Method>,
    /// Draws averaged per replication for the stochastic baselines.
    pub stochastic_draws: usize,
    /// Bootstrap resamples for the aggregate intervals.
    pub bootstrap: usize,
    pub population: PopulationSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            seed: 0,
            replications: 200,
            budget: 5,
            etas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            shifts: vec![0.0],
            methods: vec![Method::OptPate, Method::Random, Method::Stratified],
            stochastic_draws: 15,
            bootstrap: 1000,
            population: PopulationSpec::default(),
        }
    }
}

impl SweepConfig {
    /// Parses a TOML sweep description; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::input(format!("sweep config: {e}")))?;
        let unknown = unknown_keys(&table);
        if !unknown.is_empty() {
            return Err(Error::input(format!("sweep config: unknown keys {}", unknown.join(", "))));
        }
        let cfg: SweepConfig = table.try_into().map_err(|e| Error::input(format!("sweep config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.stochastic_draws == 0 || self.bootstrap == 0 {
            return Err(Error::input("replications, stochastic_draws and bootstrap must be positive"));
        }
        if self.methods.is_empty() || self.etas.is_empty() || self.shifts.is_empty() {
            return Err(Error::input("methods, etas and shifts must be non-empty"));
        }
        if self.budget == 0 || self.budget > self.population.n_sites {
            return Err(Error::input(format!(
                "budget {} must lie in 1..={}",
                self.budget, self.population.n_sites
            )));
        }
        if self.population.n_sites < 2 {
            return Err(Error::input("the sweep needs at least two sites"));
        }
        if let Some(s) = self.shifts.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::input(format!("shift {s} must be finite and nonnegative")));
        }
        for &eta in &self.etas {
            self.population.dgp(eta, 0).validate()?;
        }
        Ok(())
    }
}

const SWEEP_KEYS: [&str; 9] = [
    "seed",
    "replications",
    "budget",
    "etas",
    "shifts",
    "methods",
    "stochastic_draws",
    "bootstrap",
    "population",
];
const POPULATION_KEYS: [&str; 7] = ["n_sites", "dim", "beta", "gamma", "sigma", "link", "units_per_site"];

/// Every key outside the documented schema, as dotted paths.
fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    for (key, value) in table {
        if !SWEEP_KEYS.contains(&key.as_str()) {
            out.push(key.clone());
        } else if key == "population" {
            if let Some(inner) = value.as_table() {
                out.extend(
                    inner
                        .keys()
                        .filter(|k| !POPULATION_KEYS.contains(&k.as_str()))
                        .map(|k| format!("population.{k}")),
                );
            }
        }
    }
    out
}

/// One `(replication, eta, shift, method)` cell. Stochastic methods report
/// metrics averaged over their draws and list their first draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub replication: usize,
    pub eta: f64,
    pub shift: f64,
    pub method: Method,
    pub mse_pate: Option<f64>,
    pub pehe: Option<f64>,
    /// Space-separated site indices.
    pub selection: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub eta: f64,
    pub shift: f64,
    pub method: Method,
    pub replications: usize,
    pub failures: usize,
    /// Percentile-bootstrap 95% intervals of the mean over replications.
    pub mse_pate: Option<Interval>,
    pub pehe: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimTiming {
    pub wall_time_ms: f64,
    /// Total selection time per method across replications.
    pub selection_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SweepConfig,
    pub rows: Vec<SimRow>,
    pub aggregates: Vec<Aggregate>,
    pub timing: SimTiming,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, stable across platforms and releases.
fn tag(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Stable seed for the cell at `coords` under `master`.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix(master), |h, &c| splitmix(h ^ splitmix(c)))
}

fn dro_options() -> DroOptions {
    DroOptions::default()
}

/// Site sets a method picks on the observed table: one for deterministic
/// methods, `draws` for stochastic ones.
fn method_selections(method: Method, table: &SiteTable, k: usize, draws: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    match method {
        Method::OptPate => Ok(vec![select_sites(table, k, Exponent::One, SolveMode::Auto)?.0.indices]),
        Method::OptCate => Ok(vec![select_sites(table, k, Exponent::Two, SolveMode::Auto)?.0.indices]),
        Method::Random => Ok(random_select(table, k, Exponent::One, seed, draws)?
            .into_iter()
            .map(|s| s.indices)
            .collect()),
        Method::Stratified => (0..draws)
            .map(|t| Ok(stratified_select(table, k, Exponent::One, derive_seed(seed, &[t as u64]))?.0.indices))
            .collect(),
        Method::DroQuantile(q) => {
            let rho = empirical_distance_pool(table, Exponent::One)?.quantile(q as f64 / 100.0);
            Ok(vec![robust_select(table, k, Exponent::One, rho, &dro_options())?.selection.indices])
        }
        Method::DroLevel(band) => {
            let levels = select_radius(table, k, Exponent::One, LEVEL_GRID, &dro_options())?;
            let rho = levels
                .level(band)
                .ok_or_else(|| Error::input(format!("no radius reaches the {band:?} Jaccard band")))?;
            Ok(vec![robust_select(table, k, Exponent::One, rho, &dro_options())?.selection.indices])
        }
    }
}

fn format_selection(s: &[usize]) -> String {
    s.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn mean_metric(draws: &[Vec<usize>], pop: &Population, est: Estimator) -> Result<f64> {
    let mut total = 0.0;
    for d in draws {
        total += evaluate_selection(d, pop, est)?;
    }
    Ok(total / draws.len() as f64)
}

struct Replication {
    rows: Vec<SimRow>,
    selection_ms: Vec<f64>,
}

/// Selections depend only on the observed (unshifted) covariates, so they
/// are computed once per replication and scored at every `(eta, shift)`.
fn run_replication(cfg: &SweepConfig, r: usize) -> Result<Replication> {
    let pop = generate_population(&cfg.population.dgp(0.0, derive_seed(cfg.seed, &[tag("population"), r as u64])))?;
    let mut selections = Vec::with_capacity(cfg.methods.len());
    let mut selection_ms = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let start = Instant::now();
        let seed = derive_seed(cfg.seed, &[tag(&m.to_string()), r as u64]);
        let draws = if m.is_stochastic() { cfg.stochastic_draws } else { 1 };
        selections.push(method_selections(m, &pop.table, cfg.budget, draws, seed));
        selection_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mut rows = Vec::with_capacity(cfg.etas.len() * cfg.shifts.len() * cfg.methods.len());
    for &eta in &cfg.etas {
        let at_eta = pop.with_eta(eta)?;
        for &shift in &cfg.shifts {
            let truth = at_eta.shifted(shift)?;
            for (&method, sel) in cfg.methods.iter().zip(&selections) {
                let scored = sel.as_ref().map_err(Clone::clone).and_then(|draws| {
                    Ok((mean_metric(draws, &truth, Estimator::Pate)?, mean_metric(draws, &truth, Estimator::Cate)?))
                });
                let selection = sel.as_ref().map(|d| format_selection(&d[0])).unwrap_or_default();
                rows.push(match scored {
                    Ok((mse, pehe)) => SimRow {
                        replication: r,
                        eta,
                        shift,
                        method,
                        mse_pate: Some(mse),
                        pehe: Some(pehe),
                        selection,
                        error: None,
                    },
                    Err(e) => SimRow {
                        replication: r,
                        eta,
                        shift,
                        method,
                        mse_pate: None,
                        pehe: None,
                        selection,
                        error: Some(e.to_string()),
                    },
                });
            }
        }
    }
    Ok(Replication { rows, selection_ms })
}

/// Percentile-bootstrap 95% interval of the mean.
fn bootstrap_mean(values: &[f64], resamples: usize, seed: u64) -> Interval {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Interval {
        mean,
        lower: quantile_sorted(&means, 0.025),
        upper: quantile_sorted(&means, 0.975),
    }
}

fn aggregate(cfg: &SweepConfig, rows: &[SimRow]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    let mut cell = 0u64;
    for &eta in &cfg.etas {
        for &shift in &cfg.shifts {
            for &method in &cfg.methods {
                let here: Vec<&SimRow> = rows
                    .iter()
                    .filter(|r| r.eta == eta && r.shift == shift && r.method == method)
                    .collect();
                let mse: Vec<f64> = here.iter().filter_map(|r| r.mse_pate).collect();
                let pehe: Vec<f64> = here.iter().filter_map(|r| r.pehe).collect();
                let seed = derive_seed(cfg.seed, &[tag("bootstrap"), cell]);
                out.push(Aggregate {
                    eta,
                    shift,
                    method,
                    replications: mse.len(),
                    failures: here.len() - mse.len(),
                    mse_pate: (!mse.is_empty()).then(|| bootstrap_mean(&mse, cfg.bootstrap, seed)),
                    pehe: (!pehe.is_empty()).then(|| bootstrap_mean(&pehe, cfg.bootstrap, splitmix(seed))),
                });
                cell += 1;
            }
        }
    }
    out
}

/// Runs the sweep. Replications run in parallel; a failing method is
/// recorded in its rows and the sweep continues.
pub fn run_comparison(cfg: &SweepConfig) -> Result<SimResult> {
    cfg.validate()?;
    let start = Instant::now();
    let reps: Vec<Result<Replication>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect();
    let mut rows = Vec::new();
    let mut selection_ms: BTreeMap<String, f64> = BTreeMap::new();
    for rep in reps {
        let rep = rep?;
        for (m, ms) in cfg.methods.iter().zip(&rep.selection_ms) {
            *selection_ms.entry(m.to_string()).or_default() += ms;
        }
        rows.extend(rep.rows);
    }
    let aggregates = aggregate(cfg, &rows);
    Ok(SimResult {
        config: cfg.clone(),
        rows,
        aggregates,
        timing: SimTiming {
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            selection_ms,
        },
    })
}

impl SimResult {
    /// Tidy CSV, one row per cell and replication.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::internal(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::internal(format!("csv: {e}")))
    }

    pub fn aggregate(&self, eta: f64, shift: f64, method: Method) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.eta == eta && a.shift == shift && a.method == method)
    }

    /// Metric per replication at a cell, `None` where the method failed.
    fn metric_by_replication(&self, eta: f64, shift: f64, method: Method) -> Vec<Option<f64>> {
        let mut out = vec![None; self.config.replications];
        for r in self.rows.iter().filter(|r| r.eta == eta && r.shift == shift && r.method == method) {
            out[r.replication] = r.mse_pate;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub optimized: Method,
    pub baseline: Method,
    pub shift: f64,
    /// Smallest grid `eta` where the baseline's mean MSE is at most the
    /// optimized method's; `None` when there is no crossover on the grid.
    pub eta_star: Option<f64>,
    /// Percentile-bootstrap 95% interval over replications. A `None` bound
    /// lies beyond the grid (no crossover in that resample).
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Share of bootstrap resamples with a crossover on the grid.
    pub crossover_share: f64,
    pub diagnostic: Option<String>,
}

fn crossover(etas: &[f64], opt: &[Vec<f64>], base: &[Vec<f64>], reps: &[usize]) -> Option<f64> {
    let m = reps.len() as f64;
    etas.iter().enumerate().find_map(|(e, &eta)| {
        let o: f64 = reps.iter().map(|&r| opt[e][r]).sum::<f64>() / m;
        let b: f64 = reps.iter().map(|&r| base[e][r]).sum::<f64>() / m;
        (b <= o).then_some(eta)
    })
}

/// Type-7 percentile of a sample where `None` means `+inf`.
fn percentile(sorted: &[Option<f64>], q: f64) -> Option<f64> {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    match (sorted[lo], sorted[hi]) {
        (Some(a), Some(b)) => Some(a + (h - lo as f64) * (b - a)),
        _ => None,
    }
}

/// Breakdown point of `optimized` against `baseline` on MSE_PATE at the
/// smallest configured shift, with a paired bootstrap over replications.
pub fn estimate_breakdown(result: &SimResult, optimized: Method, baseline: Method, resamples: usize, seed: u64) -> Breakdown {
    let shift = result.config.shifts.iter().copied().fold(f64::INFINITY, f64::min);
    let mut etas = result.config.etas.clone();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    let mut out = Breakdown {
        optimized,
        baseline,
        shift,
        eta_star: None,
        lower: None,
        upper: None,
        crossover_share: 0.0,
        diagnostic: None,
    };
    let has = |m: Method| result.config.methods.contains(&m);
    if !has(optimized) || !has(baseline) {
        out.diagnostic = Some(format!("sweep lacks {optimized} or {baseline}"));
        return out;
    }
    if etas.len() < 2 {
        out.diagnostic = Some("breakdown needs at least two eta grid points".into());
        return out;
    }
    let opt: Vec<Vec<Option<f64>>> = etas.iter().map(|&e| result.metric_by_replication(e, shift, optimized)).collect();
    let base: Vec<Vec<Option<f64>>> = etas.iter().map(|&e| result.metric_by_replication(e, shift, baseline)).collect();
    let complete: Vec<usize> = (0..result.config.replications)
        .filter(|&r| (0..etas.len()).all(|e| opt[e][r].is_some() && base[e][r].is_some()))
        .collect();
    if complete.is_empty() {
        out.diagnostic = Some("no replication has both methods at every eta".into());
        return out;
    }
    let unwrap = |v: &Vec<Vec<Option<f64>>>| -> Vec<Vec<f64>> {
        v.iter().map(|row| row.iter().map(|x| x.unwrap_or(f64::NAN)).collect()).collect()
    };
    let (opt, base) = (unwrap(&opt), unwrap(&base));
    out.eta_star = crossover(&etas, &opt, &base, &complete);
    if out.eta_star.is_none() {
        out.diagnostic = Some("no crossover on grid".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = complete.len();
    let mut stars: Vec<Option<f64>> = (0..resamples.max(1))
        .map(|_| {
            let sample: Vec<usize> = (0..m).map(|_| complete[rng.gen_range(0..m)]).collect();
            crossover(&etas, &opt, &base, &sample)
        })
        .collect();
    out.crossover_share = stars.iter().filter(|s| s.is_some()).count() as f64 / stars.len() as f64;
    stars.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    out.lower = percentile(&stars, 0.025);
    out.upper = percentile(&stars, 0.975);
    out
}
