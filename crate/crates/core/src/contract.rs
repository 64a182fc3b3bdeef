//! Contracts, bundles, the probing grid and the geometry of buyer acceptance.
//!
//! Every acceptance region is a left-open, right-closed interval `(lo, hi]` of
//! the type space `[0, 1]`. A type sitting exactly on a shared boundary goes to
//! the region it closes. The only exception is a region whose left end is
//! clipped to `0`, which also contains `θ = 0`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buyer::BuyerModel;
use crate::error::{Error, Result};

/// First invariant a candidate bundle breaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BundleViolation {
    Empty,
    OutOfRange { index: usize, value: f64 },
    Ordering { index: usize },
}

impl fmt::Display for BundleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BundleViolation::Empty => write!(f, "bundle holds no contracts"),
            BundleViolation::OutOfRange { index, value } => {
                write!(f, "contract {index} = {value} is not in (0, 1]")
            }
            BundleViolation::Ordering { index } => {
                write!(f, "contract {index} is smaller than contract {}", index - 1)
            }
        }
    }
}

/// Checks ordering and range of a candidate bundle, reporting the first problem.
pub fn validate_bundle(contracts: &[f64]) -> std::result::Result<(), BundleViolation> {
    if contracts.is_empty() {
        return Err(BundleViolation::Empty);
    }
    for (index, &value) in contracts.iter().enumerate() {
        if !(value > 0.0 && value <= 1.0) {
            return Err(BundleViolation::OutOfRange { index, value });
        }
        if index > 0 && value < contracts[index - 1] {
            return Err(BundleViolation::Ordering { index });
        }
    }
    Ok(())
}

/// A non-decreasing list of contract values in `(0, 1]` offered together.
///
/// Repeated values are allowed; offering `(x, x, z)` is the same offer as `(x, z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Bundle(Vec<f64>);

impl Bundle {
    pub fn new(contracts: Vec<f64>) -> Result<Self> {
        validate_bundle(&contracts).map_err(Error::InvalidBundle)?;
        Ok(Bundle(contracts))
    }

    pub fn contracts(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl<'de> Deserialize<'de> for Bundle {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        Bundle::new(raw).map_err(serde::de::Error::custom)
    }
}

/// The uniformly spaced probing contracts `1/n, 2/n, …, (n-1)/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContractGrid {
    n: usize,
}

pub fn make_grid(n: usize) -> Result<ContractGrid> {
    ContractGrid::new(n)
}

impl ContractGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidResolution(n));
        }
        Ok(ContractGrid { n })
    }

    /// Resolution `n`; the grid holds `n - 1` contracts.
    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Contract with 1-based index `k`.
    pub fn value(&self, k: usize) -> f64 {
        debug_assert!(k >= 1 && k < self.n);
        k as f64 / self.n as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (1..self.n).map(|k| self.value(k)).collect()
    }

    /// The bundle offering every grid contract at once.
    pub fn full_bundle(&self) -> Bundle {
        Bundle(self.values())
    }

    /// Bundle made of the 1-based grid indices in `ks` (must be non-decreasing).
    pub fn bundle_from_indices(&self, ks: &[usize]) -> Bundle {
        Bundle(ks.iter().map(|&k| self.value(k)).collect())
    }
}

/// Seller revenue from an accepted contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Revenue {
    /// The buyer pays the contract value.
    #[default]
    Value,
    /// Every acceptance earns one unit.
    Unit,
}

impl Revenue {
    #[inline]
    pub fn of(self, contract: f64) -> f64 {
        match self {
            Revenue::Value => contract,
            Revenue::Unit => 1.0,
        }
    }
}

/// Half-open interval `(lo, hi]` of types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn contains(&self, theta: f64) -> bool {
        (self.lo < theta && theta <= self.hi) || (theta == 0.0 && self.lo == 0.0 && self.hi > 0.0)
    }
}

/// Which types accept which contract of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceMap {
    /// `[0, b0]` where `b0` is the left end of the first region.
    pub rejection: Interval,
    /// One region per contract, in bundle order.
    pub regions: Vec<Interval>,
    /// Buyers at a boundary between two distinct contracts are indifferent and
    /// pick either with equal probability (recommendation buyers).
    #[serde(default)]
    pub coin_flip_ties: bool,
}

impl AcceptanceMap {
    /// Total length of the type space that accepts some contract.
    pub fn accepted_length(&self) -> f64 {
        self.regions.iter().map(Interval::length).sum()
    }

    /// Index of the region holding `theta`, ignoring tie rules.
    pub fn region_of(&self, theta: f64) -> Option<usize> {
        let i = self.regions.partition_point(|r| r.hi < theta);
        match self.regions.get(i) {
            Some(r) if r.contains(theta) => Some(i),
            _ => None,
        }
    }

    /// Resolves the buyer's choice for type `theta`, drawing from `rng` only
    /// when the buyer is indifferent between several offers.
    pub fn choose<R: Rng + ?Sized>(&self, bundle: &Bundle, theta: f64, rng: &mut R) -> Choice {
        let Some(mut index) = self.region_of(theta) else {
            return Choice::Reject;
        };
        let xs = bundle.contracts();
        if self.coin_flip_ties {
            if let Some(next) = self.regions.get(index + 1) {
                if theta == self.regions[index].hi
                    && next.lo == theta
                    && next.hi > next.lo
                    && xs[index + 1] != xs[index]
                    && rng.gen_bool(0.5)
                {
                    index += 1;
                }
            }
        }
        let value = xs[index];
        let first = xs.partition_point(|&x| x < value);
        let last = xs.partition_point(|&x| x <= value);
        if last - first > 1 {
            index = rng.gen_range(first..last);
        }
        Choice::Accept { index, value }
    }
}

/// Outcome of one buyer facing one bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Choice {
    Reject,
    /// `index` is the position in the offered bundle.
    Accept {
        index: usize,
        value: f64,
    },
}

impl Choice {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Choice::Reject => None,
            Choice::Accept { value, .. } => Some(value),
        }
    }
}

/// Acceptance regions of `bundle` under `model`.
pub fn acceptance_map(bundle: &Bundle, model: &BuyerModel) -> Result<AcceptanceMap> {
    let xs = bundle.contracts();
    let m = xs.len();
    let mut regions = Vec::with_capacity(m);
    for i in 0..m {
        let prev = if i == 0 { None } else { Some(xs[i - 1]) };
        let next = xs.get(i + 1).copied();
        let lo = model.left_end(prev, xs[i]);
        let hi = model.right_end(xs[i], next);
        for b in [lo, hi] {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::ModelDomain(b));
            }
        }
        regions.push(Interval { lo, hi });
    }
    Ok(AcceptanceMap {
        rejection: Interval {
            lo: 0.0,
            hi: regions[0].lo,
        },
        regions,
        coin_flip_ties: matches!(model, BuyerModel::Recommendation { .. }),
    })
}

/// The contract a type-`theta` buyer accepts from `bundle`, if any.
pub fn buyer_choice<R: Rng + ?Sized>(
    bundle: &Bundle,
    model: &BuyerModel,
    theta: f64,
    rng: &mut R,
) -> Result<Choice> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::TypeDomain(theta));
    }
    Ok(acceptance_map(bundle, model)?.choose(bundle, theta, rng))
}
