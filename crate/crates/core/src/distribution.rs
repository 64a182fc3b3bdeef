//! Buyer type distributions on `[0, 1]` with bounded densities.
//!
//! Sampling is by inverse transform from a single uniform draw, so a seed fixes
//! the whole type sequence on every platform.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the unit-mass check at construction.
pub const MASS_TOLERANCE: f64 = 1e-9;
/// Margin applied to the scanned maximum density of a mixture.
const MIXTURE_FMAX_MARGIN: f64 = 1.01;
const MIXTURE_SCAN_STEP: f64 = 1e-4;
const BISECTION_TOLERANCE: f64 = 1e-12;

/// One component of a truncated Gaussian mixture. The component is a normal
/// with mean `mode` and standard deviation `1 / concentration`, restricted to
/// `[0, 1]` and renormalised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mode: f64,
    pub concentration: f64,
}

/// Serializable description of a type distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    Uniform,
    /// Density `2 - 2θ`.
    Triangular,
    /// Density interpolated linearly between `(breakpoints[j], densities[j])`.
    PiecewiseLinear {
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

impl DistSpec {
    pub fn build(&self) -> Result<TypeDistribution> {
        match self {
            DistSpec::Uniform => Ok(TypeDistribution::uniform()),
            DistSpec::Triangular => Ok(TypeDistribution::triangular()),
            DistSpec::PiecewiseLinear {
                breakpoints,
                densities,
            } => TypeDistribution::piecewise_linear(breakpoints.clone(), densities.clone()),
            DistSpec::Mixture { components } => TypeDistribution::mixture(components),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Uniform,
    PiecewiseLinear {
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
        /// CDF at each breakpoint.
        mass: Vec<f64>,
    },
    Mixture {
        parts: Vec<TruncatedNormal>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TruncatedNormal {
    weight: f64,
    mean: f64,
    sd: f64,
    phi_lo: f64,
    mass: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

impl TruncatedNormal {
    fn density(&self, theta: f64) -> f64 {
        let z = (theta - self.mean) / self.sd;
        (-0.5 * z * z).exp() / (self.sd * (2.0 * std::f64::consts::PI).sqrt() * self.mass)
    }

    fn cdf(&self, theta: f64) -> f64 {
        let z = (theta - self.mean) / self.sd;
        ((std_normal_cdf(z) - self.phi_lo) / self.mass).clamp(0.0, 1.0)
    }
}

/// A density `f` on `[0, 1]` with known bound `f_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    shape: Shape,
    f_max: f64,
}

impl TypeDistribution {
    pub fn uniform() -> Self {
        TypeDistribution {
            shape: Shape::Uniform,
            f_max: 1.0,
        }
    }

    pub fn triangular() -> Self {
        Self::piecewise_linear(vec![0.0, 1.0], vec![2.0, 0.0]).expect("valid triangular density")
    }

    pub fn piecewise_linear(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidDistribution(msg.to_string()));
        if breakpoints.len() < 2 || breakpoints.len() != densities.len() {
            return bad("need at least two breakpoints and one density per breakpoint");
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return bad("breakpoints must start at 0 and end at 1");
        }
        if breakpoints
            .windows(2)
            .any(|w| w[0] >= w[1] || w[0].is_nan() || w[1].is_nan())
        {
            return bad("breakpoints must be strictly increasing");
        }
        if densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return bad("densities must be finite and non-negative");
        }
        let mut mass = Vec::with_capacity(breakpoints.len());
        mass.push(0.0);
        for j in 0..breakpoints.len() - 1 {
            let w = breakpoints[j + 1] - breakpoints[j];
            mass.push(mass[j] + 0.5 * (densities[j] + densities[j + 1]) * w);
        }
        let total = *mass.last().unwrap();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "density integrates to {total}, not 1"
            )));
        }
        let f_max = densities.iter().copied().fold(0.0, f64::max);
        Ok(TypeDistribution {
            shape: Shape::PiecewiseLinear {
                breakpoints,
                densities,
                mass,
            },
            f_max,
        })
    }

    pub fn mixture(components: &[MixtureComponent]) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        if components.is_empty() {
            return bad("mixture needs at least one component".into());
        }
        let total_weight: f64 = components.iter().map(|c| c.weight).sum();
        let mut parts = Vec::with_capacity(components.len());
        for (i, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return bad(format!("component {i}: weight must be positive"));
            }
            if !(0.0..=1.0).contains(&c.mode) {
                return bad(format!("component {i}: mode must lie in [0, 1]"));
            }
            if !(c.concentration > 0.0 && c.concentration.is_finite()) {
                return bad(format!("component {i}: concentration must be positive"));
            }
            let sd = 1.0 / c.concentration;
            let phi_lo = std_normal_cdf(-c.mode / sd);
            let mass = std_normal_cdf((1.0 - c.mode) / sd) - phi_lo;
            if mass < 1e-12 {
                return bad(format!("component {i}: no mass inside [0, 1]"));
            }
            parts.push(TruncatedNormal {
                weight: c.weight / total_weight,
                mean: c.mode,
                sd,
                phi_lo,
                mass,
            });
        }
        let mut dist = TypeDistribution {
            shape: Shape::Mixture { parts },
            f_max: f64::INFINITY,
        };
        let total = dist.cdf_unchecked(1.0) - dist.cdf_unchecked(0.0);
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return bad(format!("density integrates to {total}, not 1"));
        }
        let steps = (1.0 / MIXTURE_SCAN_STEP).round() as usize;
        let scanned = (0..=steps)
            .map(|i| i as f64 * MIXTURE_SCAN_STEP)
            .chain(components.iter().map(|c| c.mode))
            .map(|t| dist.density_unchecked(t))
            .fold(0.0, f64::max);
        dist.f_max = scanned * MIXTURE_FMAX_MARGIN;
        Ok(dist)
    }

    /// Upper bound on the density.
    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn density(&self, theta: f64) -> Result<f64> {
        check_domain(theta)?;
        Ok(self.density_unchecked(theta))
    }

    pub fn cdf(&self, theta: f64) -> Result<f64> {
        check_domain(theta)?;
        Ok(self.cdf_unchecked(theta))
    }

    fn density_unchecked(&self, theta: f64) -> f64 {
        match &self.shape {
            Shape::Uniform => 1.0,
            Shape::PiecewiseLinear {
                breakpoints,
                densities,
                ..
            } => {
                let j = segment_index(breakpoints, theta);
                let w = breakpoints[j + 1] - breakpoints[j];
                let s = (theta - breakpoints[j]) / w;
                densities[j] + (densities[j + 1] - densities[j]) * s
            }
            Shape::Mixture { parts } => parts.iter().map(|p| p.weight * p.density(theta)).sum(),
        }
    }

    /// CDF clamped to the type space: `0` below `0`, `1` above `1`.
    pub fn cdf_unchecked(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        if theta >= 1.0 {
            return 1.0;
        }
        match &self.shape {
            Shape::Uniform => theta,
            Shape::PiecewiseLinear {
                breakpoints,
                densities,
                mass,
            } => {
                let j = segment_index(breakpoints, theta);
                let w = breakpoints[j + 1] - breakpoints[j];
                let s = theta - breakpoints[j];
                let slope = (densities[j + 1] - densities[j]) / w;
                (mass[j] + densities[j] * s + 0.5 * slope * s * s).clamp(0.0, 1.0)
            }
            Shape::Mixture { parts } => parts
                .iter()
                .map(|p| p.weight * p.cdf(theta))
                .sum::<f64>()
                .clamp(0.0, 1.0),
        }
    }

    /// Draws one type with a single uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        self.quantile(u)
    }

    /// Inverse CDF for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::Uniform => u,
            Shape::PiecewiseLinear {
                breakpoints,
                densities,
                mass,
            } => {
                let j = (mass.partition_point(|&c| c <= u).max(1) - 1).min(breakpoints.len() - 2);
                let w = breakpoints[j + 1] - breakpoints[j];
                let r = u - mass[j];
                let d = densities[j];
                let k = 0.5 * (densities[j + 1] - d) / w;
                // root of d s + k s² = r, written to avoid cancellation
                let disc = (d * d + 4.0 * k * r).max(0.0);
                let denom = d + disc.sqrt();
                let s = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
                (breakpoints[j] + s).clamp(breakpoints[j], breakpoints[j + 1])
            }
            Shape::Mixture { .. } => {
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                while hi - lo > BISECTION_TOLERANCE {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf_unchecked(mid) <= u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

fn segment_index(breakpoints: &[f64], theta: f64) -> usize {
    (breakpoints.partition_point(|&b| b <= theta).max(1) - 1).min(breakpoints.len() - 2)
}

fn check_domain(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::TypeDomain(theta))
    }
}
