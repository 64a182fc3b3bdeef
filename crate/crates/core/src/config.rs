//! Experiment configuration files and output formatting.
//!
//! ```json
//! {
//!   "algorithm": "tlvo",
//!   "T": 100000,
//!   "m": 2,
//!   "model": {"kind": "spectrum", "a": 2.0},
//!   "dist": {"kind": "uniform"},
//!   "revenue": "value",
//!   "cost": {"kappa": 0.001, "gamma": 1.0},
//!   "params": "auto",
//!   "seed": 7,
//!   "replications": 10,
//!   "benchmark": "grid"
//! }
//! ```

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::buyer::BuyerModel;
use crate::contract::Revenue;
use crate::distribution::DistSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Explores by offering the whole grid at once.
    Tlvo,
    /// Always offers exactly `m` contracts.
    Tlfo,
}

/// Cost of offering `k` contracts at once: `κ k^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub kappa: f64,
    pub gamma: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            kappa: 0.0,
            gamma: 1.0,
        }
    }
}

impl CostModel {
    pub fn cost(&self, offered: usize) -> f64 {
        if self.kappa == 0.0 {
            0.0
        } else {
            self.kappa * (offered as f64).powf(self.gamma)
        }
    }
}

/// Which optimum regret is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    /// Best bundle on the learner's own grid.
    #[default]
    Grid,
    /// Best bundle on a grid ten times finer, a proxy for the continuum optimum.
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AutoTag {
    Auto,
}

/// Grid resolution and exploration coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamMode {
    /// Horizon-tuned values.
    Auto(#[serde(with = "auto_tag")] ()),
    /// Fixed grid `n` and `z(t) = cz ln t + 1`.
    Manual { n: usize, cz: f64 },
}

mod auto_tag {
    use super::AutoTag;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(_: &(), s: S) -> Result<S::Ok, S::Error> {
        AutoTag::Auto.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        AutoTag::deserialize(d).map(|_| ())
    }
}

impl ParamMode {
    pub const AUTO: ParamMode = ParamMode::Auto(());
}

impl Default for ParamMode {
    fn default() -> Self {
        ParamMode::AUTO
    }
}

fn one() -> usize {
    1
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// One experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub algorithm: Algorithm,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub m: usize,
    pub model: BuyerModel,
    pub dist: DistSpec,
    /// Defaults to unit revenue for recommendation buyers, contract value otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revenue: Option<Revenue>,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub params: ParamMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default, skip_serializing_if = "is_default")]
    pub benchmark: Benchmark,
}

impl SimulationConfig {
    pub fn revenue(&self) -> Revenue {
        self.revenue.unwrap_or_else(|| self.model.default_revenue())
    }

    /// Checks everything the schema cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("T", "must be at least 1"));
        }
        if self.m < 1 {
            return Err(Error::config("m", "must be at least 1"));
        }
        if self.algorithm == Algorithm::Tlfo && self.m < 3 {
            return Err(Error::config("m", "tlfo requires m ≥ 3"));
        }
        self.model
            .validate()
            .map_err(|e| Error::config("model", e.to_string()))?;
        self.dist
            .build()
            .map_err(|e| Error::config("dist", e.to_string()))?;
        let CostModel { kappa, gamma } = self.cost;
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::config("cost.kappa", "must be finite and >= 0"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::config("cost.gamma", "must be finite and > 0"));
        }
        if let ParamMode::Manual { n, cz } = self.params {
            if n < 2 {
                return Err(Error::config("params.n", "must be at least 2"));
            }
            if !(cz >= 0.0 && cz.is_finite()) {
                return Err(Error::config("params.cz", "must be finite and >= 0"));
            }
            if self.algorithm == Algorithm::Tlfo && n - 1 < self.m {
                return Err(Error::config("params.n", "tlfo requires n - 1 >= m"));
            }
        }
        if self.params == ParamMode::AUTO && self.horizon < 3 {
            return Err(Error::config("T", "auto params require T >= 3"));
        }
        if self.replications < 1 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_with_path(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// A family of runs differing only in the horizon: a simulation config with
/// `horizons` in place of `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub algorithm: Algorithm,
    pub m: usize,
    pub model: BuyerModel,
    pub dist: DistSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revenue: Option<Revenue>,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub params: ParamMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default, skip_serializing_if = "is_default")]
    pub benchmark: Benchmark,
    pub horizons: Vec<u64>,
    /// Upper bound on the fitted log-log slope.
    #[serde(default = "default_slope_ceiling")]
    pub slope_ceiling: f64,
    /// Per-horizon replacements of `params`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<HorizonOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonOverride {
    #[serde(rename = "T")]
    pub horizon: u64,
    pub params: ParamMode,
}

fn default_slope_ceiling() -> f64 {
    0.95
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let sweep: Self = parse_with_path(text)?;
        sweep.validate()?;
        Ok(sweep)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.len() < 2 {
            return Err(Error::config("horizons", "need ≥ 2 horizons"));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("horizons", "must be strictly increasing"));
        }
        if !(self.slope_ceiling.is_finite()) {
            return Err(Error::config("slope_ceiling", "must be finite"));
        }
        for (i, o) in self.overrides.iter().enumerate() {
            if !self.horizons.contains(&o.horizon) {
                return Err(Error::config(
                    format!("overrides[{i}].T"),
                    "does not match any horizon",
                ));
            }
        }
        for (i, cfg) in self.configs().iter().enumerate() {
            cfg.validate().map_err(|e| match e {
                Error::Config { path, message } => {
                    Error::config(format!("horizons[{i}]/{path}"), message)
                }
                other => other,
            })?;
        }
        Ok(())
    }

    /// One simulation config per horizon.
    pub fn configs(&self) -> Vec<SimulationConfig> {
        let b = self;
        self.horizons
            .iter()
            .map(|&horizon| {
                let params = self
                    .overrides
                    .iter()
                    .find(|o| o.horizon == horizon)
                    .map_or(b.params, |o| o.params);
                SimulationConfig {
                    algorithm: b.algorithm,
                    horizon,
                    m: b.m,
                    model: b.model,
                    dist: b.dist.clone(),
                    revenue: b.revenue,
                    cost: b.cost,
                    params,
                    seed: b.seed,
                    replications: b.replications,
                    benchmark: b.benchmark,
                }
            })
            .collect()
    }
}

fn parse_with_path<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })
}

/// `%.17g`: 17 significant digits, trailing zeros dropped.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        strip_zeros(format!("{:.*}", decimals, x))
    } else {
        let m = strip_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn strip_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub const CSV_HEADER: &str =
    "t,phase,offered_count,accepted_value,revenue,cost,cum_profit,cum_regret";

/// Writes trace rows in the CSV layout of [`CSV_HEADER`].
pub struct TraceCsv<W: Write> {
    out: W,
}

impl<W: Write> TraceCsv<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{CSV_HEADER}")?;
        Ok(TraceCsv { out })
    }

    pub fn row(&mut self, r: &crate::sim::TraceRow) -> std::io::Result<()> {
        let accepted = r.accepted.map(fmt_g17).unwrap_or_default();
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.phase.as_str(),
            r.offered,
            accepted,
            fmt_g17(r.revenue),
            fmt_g17(r.cost),
            fmt_g17(r.cum_profit),
            fmt_g17(r.cum_regret)
        )
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Writes a mean regret curve: `t,mean_cum_regret,stderr`.
pub fn write_regret_curve<W: Write>(
    mut out: W,
    mean: &[f64],
    stderr: &[f64],
) -> std::io::Result<()> {
    writeln!(out, "t,mean_cum_regret,stderr")?;
    for (i, (m, s)) in mean.iter().zip(stderr).enumerate() {
        writeln!(out, "{},{},{}", i + 1, fmt_g17(*m), fmt_g17(*s))?;
    }
    out.flush()
}
