//! Browser bindings: acceptance regions of a bundle, the best bundle on a grid,
//! and a regret curve for a short simulated episode.
//!
//! Every entry point takes and returns JSON strings. The `*_json` functions are
//! plain Rust so they can be tested off the browser.

use contract_learn::contract::acceptance_map;
use contract_learn::oracle::{dp_best, BundleSpace};
use contract_learn::sim::PreparedRun;
use contract_learn::{make_grid, Bundle, BuyerModel, DistSpec, Revenue, SimulationConfig};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Longest episode the page will simulate.
pub const MAX_DEMO_HORIZON: u64 = 2_000_000;
/// Ceiling on `m n²`, the dynamic program's work.
pub const MAX_DEMO_WORK: usize = 200_000_000;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleRequest {
    model: BuyerModel,
    dist: DistSpec,
    m: usize,
    n: usize,
    #[serde(default)]
    revenue: Option<Revenue>,
}

#[derive(Serialize)]
struct Region {
    contract: f64,
    lo: f64,
    hi: f64,
    probability: f64,
}

#[derive(Serialize)]
struct RegionsReply {
    rejection: (f64, f64),
    regions: Vec<Region>,
    expected_revenue: f64,
}

#[derive(Serialize)]
struct CurvePoint {
    t: u64,
    cum_regret: f64,
    cum_profit: f64,
    explorations: u64,
}

#[derive(Serialize)]
struct CurveReply {
    n: usize,
    benchmark_bundle: Bundle,
    benchmark_value: f64,
    points: Vec<CurvePoint>,
    final_regret: f64,
}

fn parse<'a, T: Deserialize<'a>>(what: &str, text: &'a str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("{what}: {e}"))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("reply serializes")
}

/// Regions of `bundle` (a JSON array) under `model`, with their probabilities
/// under `dist` and the bundle's expected revenue.
pub fn acceptance_regions_json(model: &str, dist: &str, bundle: &str) -> Result<String, String> {
    let model: BuyerModel = parse("model", model)?;
    model.validate().map_err(|e| e.to_string())?;
    let dist = parse::<DistSpec>("dist", dist)?
        .build()
        .map_err(|e| e.to_string())?;
    let bundle: Bundle = parse("bundle", bundle)?;
    let map = acceptance_map(&bundle, &model).map_err(|e| e.to_string())?;
    let revenue = model.default_revenue();
    let regions: Vec<Region> = bundle
        .contracts()
        .iter()
        .zip(&map.regions)
        .map(|(&contract, r)| Region {
            contract,
            lo: r.lo,
            hi: r.hi,
            probability: dist.cdf_unchecked(r.hi) - dist.cdf_unchecked(r.lo),
        })
        .collect();
    let expected_revenue = regions
        .iter()
        .map(|r| revenue.of(r.contract) * r.probability)
        .sum();
    Ok(to_json(&RegionsReply {
        rejection: (map.rejection.lo, map.rejection.hi),
        regions,
        expected_revenue,
    }))
}

/// Best `m`-bundle on the grid `{k / n}` for the request
/// `{"model": …, "dist": …, "m": …, "n": …}`.
pub fn best_bundle_json(request: &str) -> Result<String, String> {
    let req: OracleRequest = parse("request", request)?;
    req.model.validate().map_err(|e| e.to_string())?;
    let dist = req.dist.build().map_err(|e| e.to_string())?;
    let space = BundleSpace::new(make_grid(req.n).map_err(|e| e.to_string())?, req.m)
        .map_err(|e| e.to_string())?;
    if req.m.saturating_mul(req.n).saturating_mul(req.n) > MAX_DEMO_WORK {
        return Err(format!(
            "grid {} with m = {} is too large for the page",
            req.n, req.m
        ));
    }
    let revenue = req.revenue.unwrap_or_else(|| req.model.default_revenue());
    let report = dp_best(&space, &req.model, &dist, revenue).map_err(|e| e.to_string())?;
    Ok(to_json(&report))
}

/// Runs one episode of `config` and returns about `points` samples of its
/// cumulative regret.
pub fn regret_curve_json(config: &str, seed: u64, points: usize) -> Result<String, String> {
    let cfg = SimulationConfig::from_json(config).map_err(|e| e.to_string())?;
    if cfg.horizon > MAX_DEMO_HORIZON {
        return Err(format!("T is capped at {MAX_DEMO_HORIZON} in the browser"));
    }
    let run = PreparedRun::new(&cfg).map_err(|e| e.to_string())?;
    let stride = (cfg.horizon / points.max(1) as u64).max(1);
    let mut explorations = 0u64;
    let mut out = Vec::with_capacity(points + 1);
    let summary = run
        .run_with(seed, |row| {
            if row.phase == contract_learn::sim::Phase::Explore {
                explorations += 1;
            }
            if row.t % stride == 0 || row.t == cfg.horizon {
                out.push(CurvePoint {
                    t: row.t,
                    cum_regret: row.cum_regret,
                    cum_profit: row.cum_profit,
                    explorations,
                });
            }
        })
        .map_err(|e| e.to_string())?;
    Ok(to_json(&CurveReply {
        n: summary.n,
        benchmark_bundle: summary.benchmark_bundle,
        benchmark_value: summary.benchmark_value,
        points: out,
        final_regret: summary.final_regret,
    }))
}

#[wasm_bindgen(js_name = acceptanceRegions)]
pub fn acceptance_regions(model: &str, dist: &str, bundle: &str) -> Result<String, JsValue> {
    acceptance_regions_json(model, dist, bundle).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = bestBundle)]
pub fn best_bundle(request: &str) -> Result<String, JsValue> {
    best_bundle_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = regretCurve)]
pub fn regret_curve(config: &str, seed: u64, points: usize) -> Result<String, JsValue> {
    regret_curve_json(config, seed, points).map_err(|e| JsValue::from_str(&e))
}
