//! Type-learning sellers.
//!
//! Both learners keep counters over the probing grid: `N` completed
//! exploration units and `N_k` acceptances of grid contract `k`, giving
//! estimates `μ_k = N_k / N` of the probability that a buyer's type falls in
//! segment `k`, the region contract `k` holds when the whole grid is on offer.
//!
//! TLVO explores by offering the whole grid in one step. TLFO never offers more
//! than `m` contracts, so it explores in phases of `m`-contract windows and
//! only counts a contract whose region inside its window equals its segment.

use rand::Rng;
use serde::Serialize;

use crate::buyer::BuyerModel;
use crate::contract::{acceptance_map, AcceptanceMap, Bundle, Choice, ContractGrid, Revenue};
use crate::distribution::TypeDistribution;
use crate::error::{Error, Result};
use crate::oracle::{dp_best, BundleSpace, CumulativeMeasure};

/// Grid resolution and exploration coefficient from the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonParams {
    pub n: usize,
    pub cz: f64,
}

/// Horizon-tuned parameters:
///
/// ```text
/// s   = f_max L 2^(α/2)
/// n_T = ⌊ s^(2/(4+2α)) (T / ln T)^(1/(4+2α)) ⌋          (at least 2)
/// c_z = s^(-(2+6α)/(2+α)) (T / ln T)^((2+2α)/(4+2α))
/// ```
pub fn horizon_params(
    horizon: u64,
    f_max: f64,
    holder_l: f64,
    holder_alpha: f64,
) -> Result<HorizonParams> {
    if horizon < 3 {
        return Err(Error::param("T", horizon as f64, "T >= 3"));
    }
    if !(f_max > 0.0 && f_max.is_finite()) {
        return Err(Error::param("f_max", f_max, "0 < f_max < inf"));
    }
    if !(holder_l > 0.0 && holder_l.is_finite()) {
        return Err(Error::param("L", holder_l, "L > 0"));
    }
    if !(holder_alpha > 0.0 && holder_alpha <= 1.0) {
        return Err(Error::param("alpha", holder_alpha, "0 < alpha <= 1"));
    }
    let a = holder_alpha;
    let s = f_max * holder_l * 2f64.powf(a / 2.0);
    let t = horizon as f64;
    let ratio = t / t.ln();
    let n = (s.powf(2.0 / (4.0 + 2.0 * a)) * ratio.powf(1.0 / (4.0 + 2.0 * a))).floor();
    let cz = s.powf(-(2.0 + 6.0 * a) / (2.0 + a)) * ratio.powf((2.0 + 2.0 * a) / (4.0 + 2.0 * a));
    Ok(HorizonParams {
        n: (n as usize).max(2),
        cz,
    })
}

/// Deterministic exploration threshold `z(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ControlFunction {
    /// `z(t) = c ln t + 1`.
    Log { coefficient: f64 },
    /// Always explore.
    Unbounded,
}

impl ControlFunction {
    pub fn log(coefficient: f64) -> Result<Self> {
        if !(coefficient >= 0.0 && coefficient.is_finite()) {
            return Err(Error::param("cz", coefficient, "cz >= 0"));
        }
        Ok(ControlFunction::Log { coefficient })
    }

    pub fn z(&self, t: u64) -> f64 {
        match *self {
            ControlFunction::Log { coefficient } => coefficient * (t as f64).ln() + 1.0,
            ControlFunction::Unbounded => f64::INFINITY,
        }
    }
}

/// `N < z(t)`, and always while nothing has been explored.
pub fn is_exploration(state: &EstimatorState, t: u64, z: &ControlFunction) -> bool {
    state.explorations == 0 || (state.explorations as f64) < z.z(t)
}

/// Exploration counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EstimatorState {
    n: usize,
    explorations: u64,
    counts: Vec<u64>,
}

impl EstimatorState {
    pub fn new(grid: ContractGrid) -> Self {
        EstimatorState {
            n: grid.resolution(),
            explorations: 0,
            counts: vec![0; grid.len()],
        }
    }

    /// Completed exploration units `N`.
    pub fn explorations(&self) -> u64 {
        self.explorations
    }

    /// `N_k` for `k = 1..n-1`, stored at `k - 1`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, k: usize) -> u64 {
        self.counts[k - 1]
    }

    /// `μ_k = N_k / N`, stored at `k - 1`.
    pub fn mu(&self) -> Result<Vec<f64>> {
        if self.explorations == 0 {
            return Err(Error::ColdStart);
        }
        let n = self.explorations as f64;
        Ok(self.counts.iter().map(|&c| c as f64 / n).collect())
    }

    /// Overwrites the counters, e.g. to inject exact probabilities as
    /// `N_k = round(p_k N)`.
    pub fn set_counts(&mut self, explorations: u64, counts: Vec<u64>) {
        assert_eq!(counts.len(), self.n - 1);
        self.explorations = explorations;
        self.counts = counts;
    }

    fn record(&mut self, k: usize) {
        self.counts[k - 1] += 1;
    }

    fn complete_unit(&mut self) {
        self.explorations += 1;
    }
}

/// Segment `k` of the type space: the region of grid contract `k` when the
/// full grid is offered.
#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    lowers: Vec<f64>,
    uppers: Vec<f64>,
}

impl Segments {
    pub fn new(grid: ContractGrid, model: &BuyerModel) -> Result<Self> {
        let map = acceptance_map(&grid.full_bundle(), model)?;
        Ok(Segments {
            lowers: map.regions.iter().map(|r| r.lo).collect(),
            uppers: map.regions.iter().map(|r| r.hi).collect(),
        })
    }

    pub fn lowers(&self) -> &[f64] {
        &self.lowers
    }

    pub fn uppers(&self) -> &[f64] {
        &self.uppers
    }

    /// `j₋(θ)`: first segment whose lower end is at least `θ`; `n` if none.
    pub fn j_minus(&self, theta: f64) -> usize {
        1 + self.lowers.partition_point(|&b| b < theta)
    }

    /// `j₊(θ)`: first segment whose upper end is at least `θ`, capped at `n - 1`.
    pub fn j_plus(&self, theta: f64) -> usize {
        (1 + self.uppers.partition_point(|&b| b < theta)).min(self.uppers.len())
    }

    /// True segment probabilities `p_k`, stored at `k - 1`.
    pub fn probabilities(&self, dist: &TypeDistribution) -> Vec<f64> {
        self.lowers
            .iter()
            .zip(&self.uppers)
            .map(|(&lo, &hi)| dist.cdf_unchecked(hi) - dist.cdf_unchecked(lo))
            .collect()
    }
}

/// Estimated type measure built from segment estimates.
///
/// `prob` is the literal `Σ_{i=j₋(l)}^{j₊(u)} μ_i`. The split into `upper` and
/// `lower` uses prefix sums `M_k = μ_1 + … + μ_k`: `upper(u) = M_{j₊(u)}` and
/// `lower(l) = M_{j₋(l)-1}`. Segments are ordered and disjoint, so
/// `j₋(l) <= j₊(u) + 1` whenever `l <= u` and the difference reproduces the sum.
#[derive(Debug, Clone)]
pub struct EstimatedMeasure<'a> {
    segments: &'a Segments,
    mu: Vec<f64>,
    prefix: Vec<f64>,
}

impl<'a> EstimatedMeasure<'a> {
    pub fn new(segments: &'a Segments, mu: Vec<f64>) -> Self {
        let mut prefix = Vec::with_capacity(mu.len() + 1);
        prefix.push(0.0);
        for v in &mu {
            prefix.push(prefix.last().unwrap() + v);
        }
        EstimatedMeasure {
            segments,
            mu,
            prefix,
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
}

impl CumulativeMeasure for EstimatedMeasure<'_> {
    fn upper(&self, theta: f64) -> f64 {
        self.prefix[self.segments.j_plus(theta)]
    }

    fn lower(&self, theta: f64) -> f64 {
        self.prefix[self.segments.j_minus(theta) - 1]
    }

    fn prob(&self, lo: f64, hi: f64) -> f64 {
        let (from, to) = (self.segments.j_minus(lo), self.segments.j_plus(hi));
        if from > to {
            0.0
        } else {
            self.mu[from - 1..to].iter().sum()
        }
    }
}

/// What happened in one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub offered: usize,
    pub choice: Choice,
    pub revenue: f64,
}

/// A learner bound to a grid, a buyer model and a revenue rule.
#[derive(Debug, Clone)]
pub struct GridLearner {
    grid: ContractGrid,
    model: BuyerModel,
    revenue: Revenue,
    segments: Segments,
    full: Bundle,
    full_map: AcceptanceMap,
}

impl GridLearner {
    pub fn new(grid: ContractGrid, model: BuyerModel, revenue: Revenue) -> Result<Self> {
        let full = grid.full_bundle();
        let full_map = acceptance_map(&full, &model)?;
        Ok(GridLearner {
            grid,
            model,
            revenue,
            segments: Segments::new(grid, &model)?,
            full,
            full_map,
        })
    }

    pub fn grid(&self) -> ContractGrid {
        self.grid
    }

    pub fn model(&self) -> &BuyerModel {
        &self.model
    }

    pub fn revenue(&self) -> Revenue {
        self.revenue
    }

    pub fn segments(&self) -> &Segments {
        &self.segments
    }

    /// One TLVO exploration step against a freshly drawn buyer.
    pub fn tlvo_explore<R: Rng + ?Sized>(
        &self,
        state: &mut EstimatorState,
        dist: &TypeDistribution,
        rng: &mut R,
    ) -> StepOutcome {
        let theta = dist.sample(rng);
        self.tlvo_explore_type(state, theta, rng)
    }

    /// One TLVO exploration step against a buyer of type `theta`.
    pub fn tlvo_explore_type<R: Rng + ?Sized>(
        &self,
        state: &mut EstimatorState,
        theta: f64,
        rng: &mut R,
    ) -> StepOutcome {
        let choice = self.full_map.choose(&self.full, theta, rng);
        let revenue = match choice {
            Choice::Accept { index, value } => {
                state.record(index + 1);
                self.revenue.of(value)
            }
            Choice::Reject => 0.0,
        };
        state.complete_unit();
        StepOutcome {
            offered: self.grid.len(),
            choice,
            revenue,
        }
    }

    pub fn estimated_measure(&self, state: &EstimatorState) -> Result<EstimatedMeasure<'_>> {
        Ok(EstimatedMeasure::new(&self.segments, state.mu()?))
    }

    /// `P̂(lo < θ <= hi)` from the current counters.
    pub fn estimate_interval_prob(&self, state: &EstimatorState, lo: f64, hi: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&lo) {
            return Err(Error::TypeDomain(lo));
        }
        if !(0.0..=1.0).contains(&hi) {
            return Err(Error::TypeDomain(hi));
        }
        if lo > hi {
            return Err(Error::IntervalOrder { lo, hi });
        }
        Ok(self.estimated_measure(state)?.prob(lo, hi))
    }

    /// `Û(x)`: the bundle's payoff under the estimated measure.
    pub fn estimated_payoff(&self, state: &EstimatorState, bundle: &Bundle) -> Result<f64> {
        let measure = self.estimated_measure(state)?;
        crate::oracle::payoff_under(bundle, &self.model, &measure, self.revenue)
    }

    /// The `m`-bundle maximising `Û`, ties to the lexicographically smallest.
    pub fn tlvo_exploit(&self, state: &EstimatorState, m: usize) -> Result<Bundle> {
        let measure = self.estimated_measure(state)?;
        let space = BundleSpace::new(self.grid, m)?;
        Ok(dp_best(&space, &self.model, &measure, self.revenue)?.bundle)
    }

    /// Offers and acceptance maps for every step of a TLFO phase.
    pub fn prepare_phase(&self, schedule: &TlfoSchedule) -> Result<Vec<PhaseStep>> {
        if schedule.n != self.grid.resolution() {
            return Err(Error::UnsupportedSchedule {
                n: schedule.n,
                m: schedule.m,
            });
        }
        schedule
            .steps
            .iter()
            .map(|step| {
                let ks: Vec<usize> = (step.window.0..=step.window.1).collect();
                let bundle = self.grid.bundle_from_indices(&ks);
                let map = acceptance_map(&bundle, &self.model)?;
                Ok(PhaseStep {
                    step: *step,
                    bundle,
                    map,
                })
            })
            .collect()
    }

    /// One step of a TLFO phase against a buyer of type `theta`. Revenue is
    /// earned from any acceptance; only informative contracts are counted.
    pub fn tlfo_step_type<R: Rng + ?Sized>(
        &self,
        state: &mut EstimatorState,
        step: &PhaseStep,
        theta: f64,
        rng: &mut R,
    ) -> StepOutcome {
        let choice = step.map.choose(&step.bundle, theta, rng);
        let revenue = match choice {
            Choice::Accept { index, value } => {
                let k = step.step.window.0 + index;
                if step.step.is_informative(k) {
                    state.record(k);
                }
                self.revenue.of(value)
            }
            Choice::Reject => 0.0,
        };
        StepOutcome {
            offered: step.bundle.len(),
            choice,
            revenue,
        }
    }

    /// Marks a TLFO phase complete (`N += 1`).
    pub fn finish_phase(&self, state: &mut EstimatorState) {
        state.complete_unit();
    }

    /// A whole TLFO exploration phase, one buyer per step.
    pub fn tlfo_explore_phase<R: Rng + ?Sized>(
        &self,
        state: &mut EstimatorState,
        schedule: &TlfoSchedule,
        dist: &TypeDistribution,
        rng: &mut R,
    ) -> Result<Vec<StepOutcome>> {
        let steps = self.prepare_phase(schedule)?;
        let outcomes = steps
            .iter()
            .map(|step| {
                let theta = dist.sample(rng);
                self.tlfo_step_type(state, step, theta, rng)
            })
            .collect();
        self.finish_phase(state);
        Ok(outcomes)
    }
}

/// One TLFO exploration step: an offer window of `m` consecutive grid
/// indices and the informative indices inside it (both inclusive, 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScheduleStep {
    pub window: (usize, usize),
    pub informative: (usize, usize),
}

impl ScheduleStep {
    pub fn is_informative(&self, k: usize) -> bool {
        self.informative.0 <= k && k <= self.informative.1
    }

    pub fn informative_indices(&self) -> std::ops::RangeInclusive<usize> {
        self.informative.0..=self.informative.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TlfoSchedule {
    pub n: usize,
    pub m: usize,
    pub steps: Vec<ScheduleStep>,
}

/// Exploration phase for TLFO.
///
/// With `l' = 1 + ⌈(n - m) / (m - 2)⌉` steps:
/// step 1 offers `{1..m}` and counts `{1..m-1}`; step `l` in `2..l'-1` offers
/// `{s..s+m-1}` with `s = (l-1)(m-2) + 1` and counts its interior
/// `{s+1..s+m-2}`; step `l'` offers `{n-m..n-1}` and counts from
/// `(l'-1)(m-2) + 2` to `n - 1`.
pub fn tlfo_schedule(n: usize, m: usize) -> Result<TlfoSchedule> {
    if m < 3 || n < 2 || n - 1 < m {
        return Err(Error::UnsupportedSchedule { n, m });
    }
    let stride = m - 2;
    let last = 1 + (n - m).div_ceil(stride);
    let mut steps = Vec::with_capacity(last);
    steps.push(ScheduleStep {
        window: (1, m),
        informative: (1, m - 1),
    });
    for l in 2..last {
        let s = (l - 1) * stride + 1;
        steps.push(ScheduleStep {
            window: (s, s + m - 1),
            informative: (s + 1, s + m - 2),
        });
    }
    steps.push(ScheduleStep {
        window: (n - m, n - 1),
        informative: ((last - 1) * stride + 2, n - 1),
    });
    Ok(TlfoSchedule { n, m, steps })
}

/// A schedule step with its offer and acceptance regions resolved.
#[derive(Debug, Clone)]
pub struct PhaseStep {
    pub step: ScheduleStep,
    pub bundle: Bundle,
    pub map: AcceptanceMap,
}
