//! Buyer payoff models: wireless data plans, secondary spectrum leases and
//! rating-window recommendations.
//!
//! The first two induce a boundary function `g(x_prev, x)` separating the types
//! that take `x_prev` from those that take `x`. Recommendation buyers have no
//! global `g`; their regions are windows of half-width `ε` around each
//! contract, cut at the midpoints between neighbouring contracts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contract::{acceptance_map, AcceptanceMap, Bundle};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuyerModel {
    /// Loss `a (x - θ)^+ + b (θ - x)^+`, fed through a decreasing function.
    DataPlan { a: f64, b: f64 },
    /// Payoff `-a (θ - x)^+ - x` with `a > 1`.
    Spectrum { a: f64 },
    /// Accepts the closest contract within `(θ - ε, θ + ε)`.
    Recommendation { epsilon: f64 },
}

/// `(b x_prev + a x) / (a + b)`.
pub fn g_dataplan(a: f64, b: f64, x_prev: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param("a", a, "a > 0"));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::param("b", b, "b > 0"));
    }
    Ok((b * x_prev + a * x) / (a + b))
}

/// `((a - 1) x_prev + x) / a`.
pub fn g_spectrum(a: f64, x_prev: f64, x: f64) -> Result<f64> {
    if !(a > 1.0 && a.is_finite()) {
        return Err(Error::param("a", a, "a > 1"));
    }
    Ok(((a - 1.0) * x_prev + x) / a)
}

impl BuyerModel {
    pub fn data_plan(a: f64, b: f64) -> Result<Self> {
        let model = BuyerModel::DataPlan { a, b };
        model.validate()?;
        Ok(model)
    }

    pub fn spectrum(a: f64) -> Result<Self> {
        let model = BuyerModel::Spectrum { a };
        model.validate()?;
        Ok(model)
    }

    pub fn recommendation(epsilon: f64) -> Result<Self> {
        let model = BuyerModel::Recommendation { epsilon };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BuyerModel::DataPlan { a, b } => g_dataplan(a, b, 0.0, 0.0).map(drop),
            BuyerModel::Spectrum { a } => g_spectrum(a, 0.0, 0.0).map(drop),
            BuyerModel::Recommendation { epsilon } => {
                if epsilon > 0.0 && epsilon.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("epsilon", epsilon, "epsilon > 0"))
                }
            }
        }
    }

    pub fn is_g_form(&self) -> bool {
        !matches!(self, BuyerModel::Recommendation { .. })
    }

    /// Boundary between the regions of `x_prev` and `x` (`x_prev <= x`).
    pub fn g(&self, x_prev: f64, x: f64) -> Result<f64> {
        match *self {
            BuyerModel::DataPlan { a, b } => g_dataplan(a, b, x_prev, x),
            BuyerModel::Spectrum { a } => g_spectrum(a, x_prev, x),
            BuyerModel::Recommendation { .. } => Err(Error::NotApplicable(
                "recommendation buyers have no boundary function",
            )),
        }
    }

    #[inline]
    fn g_unchecked(&self, x_prev: f64, x: f64) -> f64 {
        match *self {
            BuyerModel::DataPlan { a, b } => (b * x_prev + a * x) / (a + b),
            BuyerModel::Spectrum { a } => ((a - 1.0) * x_prev + x) / a,
            BuyerModel::Recommendation { .. } => unreachable!("no boundary function"),
        }
    }

    /// Hölder constant and exponent of `g`, where one exists.
    pub fn holder(&self) -> Option<(f64, f64)> {
        self.is_g_form().then_some((1.0, 1.0))
    }

    /// Unit revenue is the natural reading of a recommendation sale.
    pub fn default_revenue(&self) -> crate::contract::Revenue {
        match self {
            BuyerModel::Recommendation { .. } => crate::contract::Revenue::Unit,
            _ => crate::contract::Revenue::Value,
        }
    }

    /// Left end of the region of `x` given its lower neighbour in the bundle.
    #[inline]
    pub fn left_end(&self, prev: Option<f64>, x: f64) -> f64 {
        match *self {
            BuyerModel::Recommendation { epsilon } => {
                let mid = prev.map_or(f64::NEG_INFINITY, |p| 0.5 * (p + x));
                (x - epsilon).max(mid).max(0.0)
            }
            _ => self.g_unchecked(prev.unwrap_or(0.0), x),
        }
    }

    /// Right end of the region of `x` given its upper neighbour in the bundle.
    #[inline]
    pub fn right_end(&self, x: f64, next: Option<f64>) -> f64 {
        match *self {
            BuyerModel::Recommendation { epsilon } => {
                let mid = next.map_or(f64::INFINITY, |n| 0.5 * (x + n));
                (x + epsilon).min(mid).min(1.0)
            }
            _ => next.map_or(1.0, |n| self.g_unchecked(x, n)),
        }
    }

    /// Literal buyer payoff of contract `x` (`x = 0` is rejection), up to a
    /// monotone transform. `None` for recommendation buyers, whose choice is
    /// not an argmax of a payoff.
    pub fn utility(&self, x: f64, theta: f64) -> Option<f64> {
        match *self {
            BuyerModel::DataPlan { a, b } => {
                Some(-(a * (x - theta).max(0.0) + b * (theta - x).max(0.0)))
            }
            BuyerModel::Spectrum { a } => Some(-a * (theta - x).max(0.0) - x),
            BuyerModel::Recommendation { .. } => None,
        }
    }
}

/// Acceptance regions for recommendation buyers with window half-width `epsilon`.
pub fn recommendation_intervals(epsilon: f64, bundle: &Bundle) -> Result<AcceptanceMap> {
    acceptance_map(bundle, &BuyerModel::recommendation(epsilon)?)
}

/// Largest observed Hölder ratio
/// `|g(x) - g(y)| / ‖x - y‖^α` over `samples` random pairs of ordered
/// contract pairs. Pairs at zero distance are skipped.
pub fn holder_verify<R: Rng + ?Sized>(
    model: &BuyerModel,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let (_, alpha) = model.holder().ok_or(Error::NotApplicable(
        "recommendation buyers do not satisfy a Hölder condition",
    ))?;
    if samples == 0 {
        return Err(Error::param("samples", 0.0, "samples >= 1"));
    }
    let ordered_pair = |rng: &mut R| {
        let (u, v): (f64, f64) = (rng.gen(), rng.gen());
        (u.min(v), u.max(v))
    };
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let (x1, x2) = ordered_pair(rng);
        let (y1, y2) = ordered_pair(rng);
        let dist = ((x1 - y1).powi(2) + (x2 - y2).powi(2)).sqrt();
        if dist == 0.0 {
            continue;
        }
        let diff = (model.g(x1, x2)? - model.g(y1, y2)?).abs();
        worst = worst.max(diff / dist.powf(alpha));
    }
    Ok(worst)
}
