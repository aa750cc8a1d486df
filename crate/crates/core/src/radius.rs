//! Data-adaptive robustness radius: sweep `rho` over pairwise-distance
//! quantiles, track the Jaccard similarity between the robust and non-robust
//! selections, and report the smallest radius in each similarity band.
//!
//! Bands (on `J(S(0), S(rho))`): moderate `[0.75, 0.90]`, high `[0.50, 0.75)`,
//! maximum `< 0.50`. Reported radii are non-decreasing in that order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dro::{robust_select, DroOptions};
use crate::error::{Error, Result};
use crate::ot::{euclidean, Exponent, SiteTable};
use crate::select::{select_sites, Selection};

/// Sweep samples with identical (non-baseline) selections that end the
/// search for the largest useful radius.
const PLATEAU_RUN: usize = 3;
const SWEEP_QUANTILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// `|a ∩ b| / |a ∪ b|` on sorted or unsorted index lists; two empty sets
/// have similarity 1.
pub fn jaccard_indices(a: &[usize], b: &[usize]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    let inter = a.iter().filter(|x| b.binary_search(x).is_ok()).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn jaccard(a: &Selection, b: &Selection) -> f64 {
    jaccard_indices(&a.indices, &b.indices)
}

/// Type-7 (linear interpolation) quantile of ascending, non-empty data;
/// `q` is clamped to `[0, 1]`.
pub(crate) fn quantile_sorted(d: &[f64], q: f64) -> f64 {
    let h = (d.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    d[lo] + (h - lo as f64) * (d[hi] - d[lo])
}

/// Sorted off-diagonal pairwise distances `‖x_i − x_j‖` (the `p`-th root of
/// the `W_p` cost between the two point masses).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistancePool {
    pub distances: Vec<f64>,
}

impl DistancePool {
    pub fn quantile(&self, q: f64) -> f64 {
        quantile_sorted(&self.distances, q)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

/// All `n(n−1)/2` pairwise distances of the table, ascending. The point-mass
/// `W_p` distance is the Euclidean distance for either exponent.
pub fn empirical_distance_pool(table: &SiteTable, _p: Exponent) -> Result<DistancePool> {
    let n = table.len();
    if n < 2 {
        return Err(Error::input("distance pool needs at least two sites"));
    }
    let mut distances = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            distances.push(euclidean(table.row(i), table.row(j)));
        }
    }
    distances.sort_by(f64::total_cmp);
    Ok(DistancePool { distances })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Moderate,
    High,
    Maximum,
}

impl Band {
    pub fn contains(self, j: f64) -> bool {
        match self {
            Band::Moderate => (0.75..=0.90).contains(&j),
            Band::High => (0.50..0.75).contains(&j),
            Band::Maximum => j < 0.50,
        }
    }

    /// Similarity band of `j`, if any (`(0.90, 1]` is unbanded).
    pub fn of(j: f64) -> Option<Band> {
        [Band::Moderate, Band::High, Band::Maximum].into_iter().find(|b| b.contains(j))
    }

    fn above(self, j: f64) -> bool {
        match self {
            Band::Moderate => j > 0.90,
            Band::High => j >= 0.75,
            Band::Maximum => j >= 0.50,
        }
    }
}

impl std::str::FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moderate" => Ok(Band::Moderate),
            "high" => Ok(Band::High),
            "maximum" => Ok(Band::Maximum),
            other => Err(Error::input(format!("unknown robustness level {other:?} (moderate, high, maximum)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSample {
    pub rho: f64,
    pub jaccard: f64,
    pub selection: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusLevels {
    pub rho_moderate: Option<f64>,
    pub rho_high: Option<f64>,
    pub rho_maximum: Option<f64>,
    /// End point of the quantile sweep; the grid covers `[0, rho_max_search]`.
    pub rho_max_search: f64,
    pub baseline: Vec<usize>,
    /// Every solved radius, ascending, starting at `(0, 1)`.
    pub curve: Vec<RadiusSample>,
    pub diagnostic: Option<String>,
}

impl RadiusLevels {
    pub fn level(&self, band: Band) -> Option<f64> {
        match band {
            Band::Moderate => self.rho_moderate,
            Band::High => self.rho_high,
            Band::Maximum => self.rho_maximum,
        }
    }
}

fn sample_at(table: &SiteTable, k: usize, p: Exponent, rho: f64, baseline: &[usize], opts: &DroOptions) -> Result<RadiusSample> {
    let r = robust_select(table, k, p, rho, opts)?;
    Ok(RadiusSample {
        rho,
        jaccard: jaccard_indices(baseline, &r.selection.indices),
        selection: r.selection.indices,
    })
}

/// Smallest sampled radius per band, each at least the previous level.
fn classify(samples: &[RadiusSample]) -> [Option<f64>; 3] {
    let mut out = [None; 3];
    let mut floor = 0.0;
    for (slot, band) in [Band::Moderate, Band::High, Band::Maximum].into_iter().enumerate() {
        out[slot] = samples
            .iter()
            .filter(|s| s.rho > 0.0 && s.rho >= floor && band.contains(s.jaccard))
            .map(|s| s.rho)
            .next();
        if let Some(r) = out[slot] {
            floor = r;
        }
    }
    out
}

fn insert_sorted(samples: &mut Vec<RadiusSample>, s: RadiusSample) {
    match samples.iter().position(|x| x.rho >= s.rho) {
        Some(i) if samples[i].rho == s.rho => {}
        Some(i) => samples.insert(i, s),
        None => samples.push(s),
    }
}

/// Runs the quantile sweep, the refined grid over `[0, rho_max]`, one
/// bisection per empty band, and the monotone band classification.
pub fn select_radius(table: &SiteTable, k: usize, p: Exponent, n_grid: usize, opts: &DroOptions) -> Result<RadiusLevels> {
    if n_grid < 3 {
        return Err(Error::input(format!("radius grid needs at least 3 points, got {n_grid}")));
    }
    let (base, _) = select_sites(table, k, p, opts.mode)?;
    let baseline = base.indices.clone();
    let origin = RadiusSample {
        rho: 0.0,
        jaccard: 1.0,
        selection: baseline.clone(),
    };
    if table.len() < 2 || k == table.len() {
        return Ok(RadiusLevels {
            rho_moderate: None,
            rho_high: None,
            rho_maximum: None,
            rho_max_search: 0.0,
            baseline,
            curve: vec![origin],
            diagnostic: Some("selection cannot change: every site is selected".into()),
        });
    }
    let pool = empirical_distance_pool(table, p)?;

    let mut curve = vec![origin];
    let mut rho_max = pool.quantile(0.9);
    let mut run: Option<(Vec<usize>, usize)> = None;
    for &q in &SWEEP_QUANTILES {
        let rho = pool.quantile(q);
        let s = sample_at(table, k, p, rho, &baseline, opts)?;
        let stop_low = s.jaccard < 0.5;
        let plateau = if s.selection == baseline {
            run = None;
            false
        } else {
            let count = match &run {
                Some((sel, c)) if *sel == s.selection => c + 1,
                _ => 1,
            };
            run = Some((s.selection.clone(), count));
            count >= PLATEAU_RUN
        };
        insert_sorted(&mut curve, s);
        if stop_low || plateau {
            rho_max = rho;
            break;
        }
    }

    let grid: Vec<f64> = (1..=n_grid).map(|i| rho_max * i as f64 / n_grid as f64).collect();
    let solved: Vec<Result<RadiusSample>> = grid
        .par_iter()
        .map(|&rho| sample_at(table, k, p, rho, &baseline, opts))
        .collect();
    let mut samples: Vec<RadiusSample> = vec![curve[0].clone()];
    for s in solved {
        let s = s?;
        insert_sorted(&mut samples, s.clone());
        insert_sorted(&mut curve, s);
    }

    // one bisection between the samples straddling each empty band
    for band in [Band::Moderate, Band::High, Band::Maximum] {
        if samples.iter().any(|s| s.rho > 0.0 && band.contains(s.jaccard)) {
            continue;
        }
        let straddle = samples
            .windows(2)
            .find(|w| band.above(w[0].jaccard) && !band.above(w[1].jaccard) && !band.contains(w[1].jaccard));
        if let Some(w) = straddle {
            let mid = 0.5 * (w[0].rho + w[1].rho);
            let s = sample_at(table, k, p, mid, &baseline, opts)?;
            insert_sorted(&mut samples, s.clone());
            insert_sorted(&mut curve, s);
        }
    }

    let [rho_moderate, rho_high, rho_maximum] = classify(&samples);
    let diagnostic = if samples.iter().all(|s| s.selection == baseline) {
        Some("robust selection equals the baseline at every sampled radius".into())
    } else {
        None
    };
    Ok(RadiusLevels {
        rho_moderate,
        rho_high,
        rho_maximum,
        rho_max_search: rho_max,
        baseline,
        curve,
        diagnostic,
    })
}
