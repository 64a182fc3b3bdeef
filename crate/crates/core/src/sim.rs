//! Episodes of a learning seller against a stream of buyers, with regret
//! measured against the best fixed bundle.

use serde::Serialize;

use crate::config::{Algorithm, Benchmark, ParamMode, SimulationConfig, SweepConfig};
use crate::contract::{acceptance_map, AcceptanceMap, Bundle, Choice, ContractGrid};
use crate::distribution::TypeDistribution;
use crate::error::{Error, Result};
use crate::learner::{
    horizon_params, is_exploration, tlfo_schedule, ControlFunction, EstimatorState, GridLearner,
    PhaseStep,
};
use crate::oracle::{dp_best, BundleSpace, PayoffReport};
use crate::rng::{episode_rng, replication_seed};

/// The benchmark grid is this many times finer than the learner's in
/// [`Benchmark::Fine`] mode.
pub const FINE_GRID_FACTOR: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Explore,
    Exploit,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
        }
    }
}

/// One time step of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: u64,
    pub phase: Phase,
    pub offered: usize,
    pub accepted: Option<f64>,
    pub revenue: f64,
    pub cost: f64,
    pub cum_profit: f64,
    /// `t (U* - c(m)) - cum_profit`.
    pub cum_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub n: usize,
    pub cz: f64,
    pub benchmark_bundle: Bundle,
    pub benchmark_value: f64,
    pub benchmark_cost: f64,
    pub exploration_steps: u64,
    pub exploitation_steps: u64,
    pub exploration_units: u64,
    pub cum_profit: f64,
    pub final_regret: f64,
}

impl EpisodeSummary {
    pub fn average_profit(&self) -> f64 {
        self.cum_profit / (self.exploration_steps + self.exploitation_steps) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretTrace {
    pub summary: EpisodeSummary,
    pub rows: Vec<TraceRow>,
}

/// A configuration resolved into a learner, a schedule and a benchmark.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    algorithm: Algorithm,
    horizon: u64,
    m: usize,
    dist: TypeDistribution,
    learner: GridLearner,
    control: ControlFunction,
    cz: f64,
    cost: crate::config::CostModel,
    benchmark: PayoffReport,
    phase: Vec<PhaseStep>,
}

impl PreparedRun {
    pub fn new(cfg: &SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let dist = cfg.dist.build()?;
        let revenue = cfg.revenue();
        let (n, cz) = match cfg.params {
            ParamMode::Auto(()) => {
                // recommendation buyers have no boundary function; unit constants stand in
                let (l, alpha) = cfg.model.holder().unwrap_or((1.0, 1.0));
                let p = horizon_params(cfg.horizon, dist.f_max(), l, alpha)?;
                let n = match cfg.algorithm {
                    Algorithm::Tlvo => p.n,
                    Algorithm::Tlfo => p.n.max(cfg.m + 1),
                };
                (n, p.cz)
            }
            ParamMode::Manual { n, cz } => (n, cz),
        };
        let grid = ContractGrid::new(n)?;
        let learner = GridLearner::new(grid, cfg.model, revenue)?;
        let phase = match cfg.algorithm {
            Algorithm::Tlvo => Vec::new(),
            Algorithm::Tlfo => learner.prepare_phase(&tlfo_schedule(n, cfg.m)?)?,
        };
        let bench_grid = match cfg.benchmark {
            Benchmark::Grid => grid,
            Benchmark::Fine => ContractGrid::new(n * FINE_GRID_FACTOR)?,
        };
        let benchmark = dp_best(
            &BundleSpace::new(bench_grid, cfg.m)?,
            &cfg.model,
            &dist,
            revenue,
        )?;
        Ok(PreparedRun {
            algorithm: cfg.algorithm,
            horizon: cfg.horizon,
            m: cfg.m,
            dist,
            learner,
            control: ControlFunction::log(cz)?,
            cz,
            cost: cfg.cost,
            benchmark,
            phase,
        })
    }

    /// Replaces the exploration threshold.
    pub fn with_control(mut self, control: ControlFunction) -> Self {
        self.control = control;
        if let ControlFunction::Log { coefficient } = control {
            self.cz = coefficient;
        } else {
            self.cz = f64::INFINITY;
        }
        self
    }

    pub fn learner(&self) -> &GridLearner {
        &self.learner
    }

    pub fn benchmark(&self) -> &PayoffReport {
        &self.benchmark
    }

    pub fn resolution(&self) -> usize {
        self.learner.grid().resolution()
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// `U* - c(m)`: the benchmark's profit per step.
    pub fn benchmark_profit(&self) -> f64 {
        self.benchmark.value - self.cost.cost(self.m)
    }

    /// Runs one episode, handing each row to `sink` as it is produced.
    pub fn run_with<F: FnMut(&TraceRow)>(&self, seed: u64, mut sink: F) -> Result<EpisodeSummary> {
        let mut rng = episode_rng(seed);
        let mut state = EstimatorState::new(self.learner.grid());
        let per_step = self.benchmark_profit();
        let exploit_cost = self.cost.cost(self.m);
        let mut cum_profit = 0.0;
        let mut explore_steps = 0u64;
        let mut exploit: Option<(u64, Bundle, AcceptanceMap)> = None;

        let mut emit =
            |t: u64, phase: Phase, offered: usize, choice: Choice, revenue: f64, cost: f64| {
                cum_profit += revenue - cost;
                let row = TraceRow {
                    t,
                    phase,
                    offered,
                    accepted: choice.value(),
                    revenue,
                    cost,
                    cum_profit,
                    cum_regret: t as f64 * per_step - cum_profit,
                };
                sink(&row);
            };

        let mut t = 1u64;
        while t <= self.horizon {
            if is_exploration(&state, t, &self.control) {
                match self.algorithm {
                    Algorithm::Tlvo => {
                        let out = self.learner.tlvo_explore(&mut state, &self.dist, &mut rng);
                        let cost = self.cost.cost(out.offered);
                        emit(
                            t,
                            Phase::Explore,
                            out.offered,
                            out.choice,
                            out.revenue,
                            cost,
                        );
                        explore_steps += 1;
                        t += 1;
                    }
                    Algorithm::Tlfo => {
                        let mut completed = true;
                        for step in &self.phase {
                            if t > self.horizon {
                                completed = false;
                                break;
                            }
                            let theta = self.dist.sample(&mut rng);
                            let out = self
                                .learner
                                .tlfo_step_type(&mut state, step, theta, &mut rng);
                            let cost = self.cost.cost(out.offered);
                            emit(
                                t,
                                Phase::Explore,
                                out.offered,
                                out.choice,
                                out.revenue,
                                cost,
                            );
                            explore_steps += 1;
                            t += 1;
                        }
                        if completed {
                            self.learner.finish_phase(&mut state);
                        }
                    }
                }
            } else {
                let units = state.explorations();
                if exploit.as_ref().is_none_or(|(n, _, _)| *n != units) {
                    let bundle = self.learner.tlvo_exploit(&state, self.m)?;
                    let map = acceptance_map(&bundle, self.learner.model())?;
                    exploit = Some((units, bundle, map));
                }
                let (_, bundle, map) = exploit.as_ref().expect("exploit bundle cached");
                let theta = self.dist.sample(&mut rng);
                let choice = map.choose(bundle, theta, &mut rng);
                let revenue = choice.value().map_or(0.0, |x| self.learner.revenue().of(x));
                emit(
                    t,
                    Phase::Exploit,
                    bundle.len(),
                    choice,
                    revenue,
                    exploit_cost,
                );
                t += 1;
            }
        }

        Ok(EpisodeSummary {
            seed,
            n: self.resolution(),
            cz: self.cz,
            benchmark_bundle: self.benchmark.bundle.clone(),
            benchmark_value: self.benchmark.value,
            benchmark_cost: exploit_cost,
            exploration_steps: explore_steps,
            exploitation_steps: self.horizon - explore_steps,
            exploration_units: state.explorations(),
            cum_profit,
            final_regret: self.horizon as f64 * per_step - cum_profit,
        })
    }

    pub fn run(&self, seed: u64) -> Result<RegretTrace> {
        let mut rows = Vec::with_capacity(self.horizon.min(1 << 24) as usize);
        let summary = self.run_with(seed, |r| rows.push(*r))?;
        Ok(RegretTrace { summary, rows })
    }

    /// Runs `replications` episodes with seeds `replication_seed(root, i)`;
    /// `make_sink(i)` receives replication `i`'s rows.
    pub fn replicate_with<S, F>(
        &self,
        root: u64,
        replications: usize,
        make_sink: F,
    ) -> Result<Replication>
    where
        F: Fn(usize) -> S + Sync,
        S: FnMut(&TraceRow),
    {
        let seeds: Vec<u64> = (0..replications)
            .map(|i| replication_seed(root, i))
            .collect();
        self.replicate_seeds_with(&seeds, make_sink)
    }

    /// As [`PreparedRun::replicate_with`] with explicit seeds.
    pub fn replicate_seeds_with<S, F>(&self, seeds: &[u64], make_sink: F) -> Result<Replication>
    where
        F: Fn(usize) -> S + Sync,
        S: FnMut(&TraceRow),
    {
        if seeds.is_empty() {
            return Err(Error::param("replications", 0.0, "at least 1"));
        }
        let one = |i: usize| -> Result<(Vec<f64>, EpisodeSummary)> {
            let mut curve = Vec::with_capacity(self.horizon as usize);
            let mut sink = make_sink(i);
            let summary = self.run_with(seeds[i], |r| {
                curve.push(r.cum_regret);
                sink(r);
            })?;
            Ok((curve, summary))
        };
        // results land in slots by replication index whatever the completion order
        #[cfg(feature = "parallel")]
        let runs: Vec<Result<(Vec<f64>, EpisodeSummary)>> = {
            use rayon::prelude::*;
            (0..seeds.len()).into_par_iter().map(one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let runs: Vec<Result<(Vec<f64>, EpisodeSummary)>> = (0..seeds.len()).map(one).collect();

        let mut stats = vec![Welford::default(); self.horizon as usize];
        let mut summaries = Vec::with_capacity(seeds.len());
        for run in runs {
            let (curve, summary) = run?;
            for (w, x) in stats.iter_mut().zip(curve) {
                w.push(x);
            }
            summaries.push(summary);
        }
        Ok(Replication {
            seeds: seeds.to_vec(),
            mean: stats.iter().map(|w| w.mean).collect(),
            stderr: stats.iter().map(Welford::stderr).collect(),
            summaries,
        })
    }

    pub fn replicate(&self, root: u64, replications: usize) -> Result<Replication> {
        self.replicate_with(root, replications, |_| |_: &TraceRow| {})
    }

    /// Final-step summaries only, without keeping per-step curves.
    pub fn replicate_summaries(
        &self,
        root: u64,
        replications: usize,
    ) -> Result<Vec<EpisodeSummary>> {
        let one = |i: usize| self.run_with(replication_seed(root, i), |_| {});
        #[cfg(feature = "parallel")]
        let runs: Vec<Result<EpisodeSummary>> = {
            use rayon::prelude::*;
            (0..replications).into_par_iter().map(one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let runs: Vec<Result<EpisodeSummary>> = (0..replications).map(one).collect();
        runs.into_iter().collect()
    }
}

/// `run_episode(cfg, seed)`.
pub fn run_episode(cfg: &SimulationConfig, seed: u64) -> Result<RegretTrace> {
    PreparedRun::new(cfg)?.run(seed)
}

/// Per-step mean and standard error of cumulative regret over
/// `cfg.replications` episodes seeded from `cfg.seed`.
pub fn replicate(cfg: &SimulationConfig) -> Result<Replication> {
    PreparedRun::new(cfg)?.replicate(cfg.seed, cfg.replications)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub seeds: Vec<u64>,
    /// Mean cumulative regret after step `t`, at `t - 1`.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub summaries: Vec<EpisodeSummary>,
}

impl Replication {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("horizon >= 1")
    }
}

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Sum of squared residuals of `ln R` about the fitted line.
    pub residual: f64,
}

/// Least-squares line through `(ln T_i, ln R_i)`.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::Fit("need at least 2 points"));
    }
    if points.iter().any(|&(t, r)| !(t > 0.0 && r > 0.0)) {
        return Err(Error::Fit("values must be positive"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(t, r)| (t.ln(), r.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("horizons must differ"));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = logs
        .iter()
        .map(|&(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    #[serde(rename = "T")]
    pub horizon: u64,
    pub n: usize,
    pub cz: f64,
    pub mean_regret: f64,
    pub stderr: f64,
    pub regret_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub fit: SlopeFit,
    pub slope_ceiling: f64,
    /// `R(T) / T` strictly decreasing across horizons.
    pub per_step_decreasing: bool,
    pub pass: bool,
}

/// Mean final regret at each horizon and the log-log slope through them.
pub fn run_sweep(sweep: &SweepConfig) -> Result<SweepReport> {
    sweep.validate()?;
    let mut points = Vec::with_capacity(sweep.horizons.len());
    for cfg in sweep.configs() {
        let run = PreparedRun::new(&cfg)?;
        let summaries = run.replicate_summaries(cfg.seed, cfg.replications)?;
        let mut w = Welford::default();
        for s in &summaries {
            w.push(s.final_regret);
        }
        points.push(SweepPoint {
            horizon: cfg.horizon,
            n: run.resolution(),
            cz: summaries[0].cz,
            mean_regret: w.mean,
            stderr: w.stderr(),
            regret_per_step: w.mean / cfg.horizon as f64,
        });
    }
    sweep_report(points, sweep.slope_ceiling)
}

/// Fits the slope through precomputed points and applies the ceiling.
pub fn sweep_report(points: Vec<SweepPoint>, slope_ceiling: f64) -> Result<SweepReport> {
    let pairs: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.horizon as f64, p.mean_regret))
        .collect();
    let fit = slope_fit(&pairs)?;
    let per_step_decreasing = points
        .windows(2)
        .all(|w| w[1].regret_per_step < w[0].regret_per_step);
    Ok(SweepReport {
        pass: fit.slope <= slope_ceiling,
        points,
        fit,
        slope_ceiling,
        per_step_decreasing,
    })
}
