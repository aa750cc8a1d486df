use std::fs::File;
use std::io::BufWriter;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sitesel::baselines::balanced_stratification_oracle;
use sitesel::dro::{grid_minimax_oracle, robust_select, DroOptions};
use sitesel::ot::{Exponent, PairCosts, SiteTable};
use sitesel::radius::{select_radius, Band};
use sitesel::select::{enumerate_oracle, lp_relax_and_round, select_sites, Selection, SolveMode};
use sitesel::sim::{derive_seed, estimate_breakdown, run_comparison, Method, SweepConfig};
use sitesel::Error;

use crate::envelope::Envelope;
use crate::input::{self, fingerprint};
use crate::{DroArgs, OracleArgs, OracleKind, RadiusArgs, SelectArgs, SimulateArgs};

/// Sub-stream tag for the breakdown bootstrap of `simulate`.
const BREAKDOWN_STREAM: u64 = 0xB4EA_0D0E;

fn json_value<T: Serialize>(v: &T) -> Result<Value, Error> {
    serde_json::to_value(v).map_err(|e| Error::Internal(format!("json: {e}")))
}

/// Flag echo with the effective seed.
fn parameters<T: Serialize>(args: &T, seed: Option<u64>) -> Result<Value, Error> {
    let mut v = json_value(args)?;
    if let Value::Object(map) = &mut v {
        map.insert("seed".into(), json!(seed.unwrap_or(0)));
    }
    Ok(v)
}

fn exponent(p: u8) -> Result<Exponent, Error> {
    Exponent::try_from(p)
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn selection_json(sel: &Selection, table: &SiteTable) -> Value {
    let ids: Vec<&str> = sel.indices.iter().map(|&i| table.ids()[i].as_str()).collect();
    json!({
        "indices": sel.indices,
        "site_ids": ids,
        "objective": sel.objective,
        "p": sel.p,
        "method": sel.method,
        "budget": sel.budget,
    })
}

/// Population-to-selection plan as `(from, to, mass)` site-id triplets.
fn plan_json(table: &SiteTable, sel: &[usize], p: Exponent) -> Result<Value, Error> {
    let n = table.len();
    let plan = PairCosts::new(table, p).plan_to_uniform(&vec![1.0 / n as f64; n], sel)?;
    let ids = table.ids();
    Ok(Value::Array(
        plan.triplets
            .iter()
            .map(|&(i, j, mass)| json!({"from": ids[i], "to": ids[sel[j]], "mass": mass}))
            .collect(),
    ))
}

fn finish(mut env: Envelope, start: Instant, out: Option<&std::path::Path>) -> Result<(), Error> {
    env.timing.wall_time_ms = ms(start);
    env.emit(out)
}

pub fn select(a: &SelectArgs, seed: Option<u64>) -> Result<(), Error> {
    let start = Instant::now();
    let loaded = input::load(&a.table.input, !a.table.no_standardize)?;
    let t = &loaded.table;
    let p = exponent(a.problem.p)?;
    let k = a.problem.k;
    let (sel, report, scores) = if a.problem.mode.resolve(t.len()) == SolveMode::Relaxed {
        let (scores, sel, report) = lp_relax_and_round(t, k, p)?;
        (sel, report, Some(scores))
    } else {
        let (sel, report) = select_sites(t, k, p, a.problem.mode)?;
        (sel, report, None)
    };
    let mut report_json = json_value(&report)?;
    if let Value::Object(m) = &mut report_json {
        m.remove("wall_time_ms");
    }
    let mut result = Map::new();
    result.insert("selection".into(), selection_json(&sel, t));
    result.insert("report".into(), report_json);
    if let Some(s) = scores {
        result.insert("scores".into(), json!(s));
    }
    if a.emit_plan {
        result.insert("plan".into(), plan_json(t, &sel.indices, p)?);
    }
    let mut env = Envelope::new("select", parameters(a, seed)?, Some(loaded.info), Value::Object(result));
    env.timing.phases_ms.insert("solve".into(), report.wall_time_ms);
    finish(env, start, a.table.out.as_deref())
}

pub fn dro(a: &DroArgs, seed: Option<u64>) -> Result<(), Error> {
    let start = Instant::now();
    let loaded = input::load(&a.table.input, !a.table.no_standardize)?;
    let t = &loaded.table;
    let p = exponent(a.problem.p)?;
    let k = a.problem.k;
    let opts = DroOptions {
        epsilon: a.solver.epsilon,
        max_iter: a.solver.max_iter,
        mode: a.problem.mode,
    };
    let mut phases = Vec::new();
    let (rho, level) = match (a.rho, a.rho_level) {
        (Some(rho), _) => (rho, Value::Null),
        (None, Some(level)) => {
            let at = Instant::now();
            let band: Band = level.into();
            let levels = select_radius(t, k, p, a.grid, &opts)?;
            phases.push(("radius", ms(at)));
            let rho = levels
                .level(band)
                .ok_or_else(|| Error::Input(format!("no radius on the grid reaches the {band:?} Jaccard band")))?;
            let jaccard = levels.curve.iter().find(|s| s.rho == rho).map(|s| s.jaccard);
            (rho, json!({"band": band, "rho": rho, "jaccard": jaccard}))
        }
        (None, None) => return Err(Error::Input("one of --rho or --rho-level is required".into())),
    };
    let at = Instant::now();
    let res = robust_select(t, k, p, rho, &opts)?;
    phases.push(("solve", ms(at)));
    let mut result = Map::new();
    result.insert("rho".into(), json!(rho));
    result.insert("rho_level".into(), level);
    result.insert("selection".into(), selection_json(&res.selection, t));
    result.insert("nonrobust".into(), selection_json(&res.nonrobust, t));
    result.insert("converged".into(), json!(res.converged));
    result.insert("gap".into(), json!(res.gap));
    result.insert("iterations".into(), json!(res.iterations));
    result.insert("ub_trace".into(), json!(res.ub_trace));
    result.insert("lb_trace".into(), json!(res.lb_trace));
    result.insert("scenarios".into(), json_value(&res.scenario_set)?);
    if a.emit_plan {
        result.insert("plan".into(), plan_json(t, &res.selection.indices, p)?);
    }
    let mut env = Envelope::new("dro", parameters(a, seed)?, Some(loaded.info), Value::Object(result));
    env.timing.phases_ms.extend(phases.into_iter().map(|(k, v)| (k.to_string(), v)));
    finish(env, start, a.table.out.as_deref())
}

pub fn radius(a: &RadiusArgs, seed: Option<u64>) -> Result<(), Error> {
    let start = Instant::now();
    let loaded = input::load(&a.table.input, !a.table.no_standardize)?;
    let opts = DroOptions {
        epsilon: a.solver.epsilon,
        max_iter: a.solver.max_iter,
        mode: a.problem.mode,
    };
    let levels = select_radius(&loaded.table, a.problem.k, exponent(a.problem.p)?, a.grid, &opts)?;
    let env = Envelope::new("radius", parameters(a, seed)?, Some(loaded.info), json_value(&levels)?);
    finish(env, start, a.table.out.as_deref())
}

pub fn simulate(a: &SimulateArgs, seed: Option<u64>) -> Result<(), Error> {
    let start = Instant::now();
    let bytes = std::fs::read(&a.config)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", a.config.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Input(format!("{} is not UTF-8", a.config.display())))?;
    let mut cfg = SweepConfig::from_toml(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| Error::Input(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let res = run_comparison(&cfg)?;

    let csv_path = a.out_dir.join("results.csv");
    let file = File::create(&csv_path).map_err(|e| Error::Input(format!("cannot write {}: {e}", csv_path.display())))?;
    res.write_csv(BufWriter::new(file))?;

    let mut breakdowns = Vec::new();
    if cfg.methods.contains(&Method::OptPate) && cfg.etas.len() >= 2 {
        for baseline in [Method::Random, Method::Stratified] {
            if cfg.methods.contains(&baseline) {
                let stream = derive_seed(cfg.seed, &[BREAKDOWN_STREAM, breakdowns.len() as u64]);
                breakdowns.push(estimate_breakdown(&res, Method::OptPate, baseline, cfg.bootstrap, stream));
            }
        }
    }
    let summary_path = a.out_dir.join("summary.json");
    let result = json!({
        "config_path": a.config.display().to_string(),
        "config_sha256": fingerprint(&bytes),
        "config": cfg,
        "rows": res.rows.len(),
        "failures": res.rows.iter().filter(|r| r.error.is_some()).count(),
        "aggregates": res.aggregates,
        "breakdowns": breakdowns,
        "outputs": {
            "csv": csv_path.display().to_string(),
            "summary": summary_path.display().to_string(),
        },
    });
    let mut env = Envelope::new("simulate", parameters(a, seed)?, None, result);
    env.timing.phases_ms.extend(res.timing.selection_ms.iter().map(|(m, v)| (format!("select:{m}"), *v)));
    env.timing.wall_time_ms = ms(start);
    env.emit(Some(&summary_path))?;
    env.emit(None)
}

pub fn oracle(a: &OracleArgs, seed: Option<u64>) -> Result<(), Error> {
    let start = Instant::now();
    let loaded = input::load(&a.table.input, !a.table.no_standardize)?;
    let t = &loaded.table;
    let p = exponent(a.p)?;
    let ids = t.ids();
    let result = match a.kind {
        OracleKind::Select => json!({"selection": selection_json(&enumerate_oracle(t, a.k, p)?, t)}),
        OracleKind::Dro => {
            let g = grid_minimax_oracle(t, a.k, p, a.rho, a.steps)?;
            let site_ids: Vec<&str> = g.selection.iter().map(|&i| ids[i].as_str()).collect();
            json!({
                "selection": g.selection,
                "site_ids": site_ids,
                "value": g.value,
                "ball_size": g.ball_size,
                "steps": g.steps,
            })
        }
        OracleKind::Stratification => {
            let b = balanced_stratification_oracle(t, a.k)?;
            let strata: Vec<Vec<&str>> = b.partition.iter().map(|g| g.iter().map(|&i| ids[i].as_str()).collect()).collect();
            let reps: Vec<&str> = b.representatives.iter().map(|&i| ids[i].as_str()).collect();
            json!({
                "objective": b.objective,
                "partition": b.partition,
                "representatives": b.representatives,
                "strata_site_ids": strata,
                "representative_site_ids": reps,
            })
        }
    };
    let env = Envelope::new("oracle", parameters(a, seed)?, Some(loaded.info), result);
    finish(env, start, a.table.out.as_deref())
}
