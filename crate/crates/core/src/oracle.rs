//! Expected seller payoff of a bundle and the best bundle on a grid.
//!
//! `brute_force_best` enumerates every non-decreasing index tuple. `dp_best`
//! uses the fact that the region of a contract only depends on its two
//! neighbours. Writing each region probability as a difference of cumulative
//! masses, `P(l_i < θ <= u_i) = F(u_i) - F(l_i)`, and noting that `u_i` and
//! `l_{i+1}` are both fixed by the pair `(x_i, x_{i+1})`, the payoff becomes a
//! path sum over a layered graph (one layer per bundle slot, one node per grid
//! contract):
//!
//! ```text
//! U(x) = -r(x_1) F(l_1)                                     start weight
//!        + Σ_i [ r(x_i) F(u_i) - r(x_{i+1}) F(l_{i+1}) ]    edge weights
//!        + r(x_m) F(u_m)                                    end weight
//! ```
//!
//! For buyers with a boundary function `u_i = l_{i+1} = g(x_i, x_{i+1})` and
//! the edge weight is `(r(x_i) - r(x_{i+1})) F(g(x_i, x_{i+1}))`. For
//! recommendation buyers with unit revenue the edge weight is
//! `F(u_i) - F(l_{i+1})`, which is zero when the two windows meet at their
//! midpoint and minus the probability of the rejection gap between them
//! otherwise, so `U = F(u_m) - F(l_1) - Σ gaps`.
//!
//! Both searches break ties towards the lexicographically smallest bundle,
//! treating values within [`TIE_TOLERANCE`] as equal.

use serde::Serialize;

use crate::buyer::BuyerModel;
use crate::contract::{acceptance_map, Bundle, ContractGrid, Revenue};
use crate::distribution::TypeDistribution;
use crate::error::{Error, Result};

/// Payoffs closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Default limit on brute-force enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;
/// Longest tie list a report carries.
const MAX_LISTED_TIES: usize = 1000;

/// Probability mass of type intervals, split into the cumulative mass used at
/// the right end of a region and at its left end so that
/// `prob(l, u) = upper(u) - lower(l)`.
pub trait CumulativeMeasure {
    fn upper(&self, theta: f64) -> f64;
    fn lower(&self, theta: f64) -> f64;

    fn prob(&self, lo: f64, hi: f64) -> f64 {
        self.upper(hi) - self.lower(lo)
    }
}

impl CumulativeMeasure for TypeDistribution {
    fn upper(&self, theta: f64) -> f64 {
        self.cdf_unchecked(theta)
    }

    fn lower(&self, theta: f64) -> f64 {
        self.cdf_unchecked(theta)
    }
}

/// `P(lo < θ <= hi)` under `dist`.
pub fn interval_prob(dist: &TypeDistribution, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::IntervalOrder { lo, hi });
    }
    Ok(dist.cdf(hi)? - dist.cdf(lo)?)
}

/// All non-decreasing `m`-tuples of grid contracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleSpace {
    pub grid: ContractGrid,
    pub m: usize,
}

impl BundleSpace {
    pub fn new(grid: ContractGrid, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("m", 0.0, "m >= 1"));
        }
        Ok(BundleSpace { grid, m })
    }

    /// `C(n - 2 + m, m)` for a grid of `n - 1` contracts.
    pub fn cardinality(&self) -> u128 {
        let k = self.grid.len() as u128;
        let m = self.m as u128;
        // C(k - 1 + m, m), built incrementally so every step stays integral
        (1..=m).fold(1u128, |acc, i| acc.saturating_mul(k - 1 + i) / i)
    }

    /// Index tuples in lexicographic order.
    pub fn index_tuples(&self) -> IndexTuples {
        IndexTuples {
            top: self.grid.len(),
            current: Some(vec![1; self.m]),
        }
    }
}

/// Lexicographic walk over non-decreasing tuples of 1-based grid indices.
pub struct IndexTuples {
    top: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for IndexTuples {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let mut next = out.clone();
        match next.iter().rposition(|&k| k < self.top) {
            Some(pos) => {
                let v = next[pos] + 1;
                next[pos..].iter_mut().for_each(|k| *k = v);
                self.current = Some(next);
            }
            None => self.current = None,
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffReport {
    pub bundle: Bundle,
    pub value: f64,
    /// Other co-optimal bundles, in lexicographic order (brute force only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ties: Vec<Bundle>,
}

/// `Σ_i r(x_i) P(θ in region i)` for an arbitrary interval measure.
pub fn payoff_under<M: CumulativeMeasure + ?Sized>(
    bundle: &Bundle,
    model: &BuyerModel,
    measure: &M,
    revenue: Revenue,
) -> Result<f64> {
    let map = acceptance_map(bundle, model)?;
    Ok(bundle
        .contracts()
        .iter()
        .zip(&map.regions)
        .map(|(&x, r)| revenue.of(x) * measure.prob(r.lo, r.hi))
        .sum())
}

/// Expected seller revenue of offering `bundle` to one buyer.
pub fn expected_payoff(
    bundle: &Bundle,
    model: &BuyerModel,
    dist: &TypeDistribution,
    revenue: Revenue,
) -> Result<f64> {
    payoff_under(bundle, model, dist, revenue)
}

pub fn brute_force_best<M: CumulativeMeasure + ?Sized>(
    space: &BundleSpace,
    model: &BuyerModel,
    measure: &M,
    revenue: Revenue,
) -> Result<PayoffReport> {
    brute_force_best_capped(space, model, measure, revenue, DEFAULT_ENUMERATION_CAP)
}

pub fn brute_force_best_capped<M: CumulativeMeasure + ?Sized>(
    space: &BundleSpace,
    model: &BuyerModel,
    measure: &M,
    revenue: Revenue,
    cap: u128,
) -> Result<PayoffReport> {
    let required = space.cardinality();
    if required > cap {
        return Err(Error::CapExceeded { required, cap });
    }
    let value_of =
        |ks: &[usize]| payoff_under(&space.grid.bundle_from_indices(ks), model, measure, revenue);

    let mut best = f64::NEG_INFINITY;
    for ks in space.index_tuples() {
        best = best.max(value_of(&ks)?);
    }
    let mut chosen: Option<(Vec<usize>, f64)> = None;
    let mut ties = Vec::new();
    for ks in space.index_tuples() {
        let v = value_of(&ks)?;
        if v >= best - TIE_TOLERANCE {
            if chosen.is_none() {
                chosen = Some((ks, v));
            } else if ties.len() < MAX_LISTED_TIES {
                ties.push(space.grid.bundle_from_indices(&ks));
            }
        }
    }
    let (ks, value) = chosen.expect("bundle space is never empty");
    Ok(PayoffReport {
        bundle: space.grid.bundle_from_indices(&ks),
        value,
        ties,
    })
}

/// Best bundle by longest path over the layered slot graph, `O(m n²)`.
pub fn dp_best<M: CumulativeMeasure + ?Sized>(
    space: &BundleSpace,
    model: &BuyerModel,
    measure: &M,
    revenue: Revenue,
) -> Result<PayoffReport> {
    let grid = space.grid;
    let k = grid.len();
    let x: Vec<f64> = grid.values();
    let r: Vec<f64> = x.iter().map(|&v| revenue.of(v)).collect();

    let start: Vec<f64> = (0..k)
        .map(|j| -r[j] * measure.lower(model.left_end(None, x[j])))
        .collect();
    let end: Vec<f64> = (0..k)
        .map(|j| r[j] * measure.upper(model.right_end(x[j], None)))
        .collect();
    // edge[j * k + l] for j <= l
    let mut edge = vec![f64::NEG_INFINITY; k * k];
    for j in 0..k {
        for l in j..k {
            let hi = model.right_end(x[j], Some(x[l]));
            let lo = model.left_end(Some(x[j]), x[l]);
            edge[j * k + l] = r[j] * measure.upper(hi) - r[l] * measure.lower(lo);
        }
    }

    // to_go[i][j]: best completion when slot i (0-based) holds contract j
    let m = space.m;
    let mut to_go = vec![vec![0.0; k]; m];
    to_go[m - 1].copy_from_slice(&end);
    for i in (0..m - 1).rev() {
        for j in 0..k {
            to_go[i][j] = (j..k)
                .map(|l| edge[j * k + l] + to_go[i + 1][l])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let best = (0..k)
        .map(|j| start[j] + to_go[0][j])
        .fold(f64::NEG_INFINITY, f64::max);

    // walk forward taking the smallest index that can still reach the optimum
    let target = best - TIE_TOLERANCE;
    let mut picks = Vec::with_capacity(m);
    let first = (0..k)
        .find(|&j| start[j] + to_go[0][j] >= target)
        .expect("the maximiser always qualifies");
    let mut acc = start[first];
    picks.push(first);
    for slot in to_go.iter().skip(1) {
        let prev = *picks.last().unwrap();
        let next = (prev..k)
            .find(|&l| acc + edge[prev * k + l] + slot[l] >= target)
            .expect("some successor completes the optimum");
        acc += edge[prev * k + next];
        picks.push(next);
    }
    acc += end[*picks.last().unwrap()];

    let indices: Vec<usize> = picks.iter().map(|j| j + 1).collect();
    Ok(PayoffReport {
        bundle: grid.bundle_from_indices(&indices),
        value: acc,
        ties: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::make_grid;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn spectrum2() -> BuyerModel {
        BuyerModel::spectrum(2.0).unwrap()
    }

    #[test]
    fn hand_computed_payoffs() {
        let uni = TypeDistribution::uniform();
        let dp = BuyerModel::data_plan(1.0, 1.0).unwrap();
        let v = expected_payoff(
            &Bundle::new(vec![0.2, 0.6]).unwrap(),
            &dp,
            &uni,
            Revenue::Value,
        )
        .unwrap();
        assert!(close(v, 0.42));
        let v = expected_payoff(
            &Bundle::new(vec![0.75]).unwrap(),
            &spectrum2(),
            &uni,
            Revenue::Value,
        )
        .unwrap();
        assert!(close(v, 0.46875));
        let narrow = BuyerModel::recommendation(1e-300).unwrap();
        let v = expected_payoff(
            &Bundle::new(vec![0.3, 0.6]).unwrap(),
            &narrow,
            &uni,
            Revenue::Unit,
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn interval_probabilities() {
        let uni = TypeDistribution::uniform();
        assert!(close(interval_prob(&uni, 0.1, 0.4).unwrap(), 0.3));
        assert_eq!(interval_prob(&uni, 0.6, 0.6).unwrap(), 0.0);
        assert_eq!(
            interval_prob(&TypeDistribution::triangular(), 0.0, 0.5).unwrap(),
            0.75
        );
        assert!(matches!(
            interval_prob(&uni, 0.5, 0.4),
            Err(Error::IntervalOrder { .. })
        ));
    }

    #[test]
    fn cardinality_and_order() {
        let space = BundleSpace::new(make_grid(12).unwrap(), 3).unwrap();
        assert_eq!(space.cardinality(), 286);
        assert_eq!(space.index_tuples().count(), 286);
        let space = BundleSpace::new(make_grid(4).unwrap(), 2).unwrap();
        let all: Vec<Vec<usize>> = space.index_tuples().collect();
        assert_eq!(
            all,
            vec![
                vec![1, 1],
                vec![1, 2],
                vec![1, 3],
                vec![2, 2],
                vec![2, 3],
                vec![3, 3]
            ]
        );
        let tiny = BundleSpace::new(make_grid(2).unwrap(), 5).unwrap();
        assert_eq!(tiny.cardinality(), 1);
        assert!(BundleSpace::new(make_grid(4).unwrap(), 0).is_err());
    }

    #[test]
    fn brute_force_examples() {
        let uni = TypeDistribution::uniform();
        let space = BundleSpace::new(make_grid(4).unwrap(), 1).unwrap();
        let rep = brute_force_best(&space, &spectrum2(), &uni, Revenue::Value).unwrap();
        assert_eq!(rep.bundle.contracts(), &[0.75]);
        assert!(close(rep.value, 0.46875));
        assert!(rep.ties.is_empty());

        let space = BundleSpace::new(make_grid(4).unwrap(), 2).unwrap();
        let rep = brute_force_best(&space, &spectrum2(), &uni, Revenue::Value).unwrap();
        assert_eq!(rep.bundle.contracts(), &[0.25, 0.75]);
        assert!(close(rep.value, 0.46875));
        let ties: Vec<&[f64]> = rep.ties.iter().map(Bundle::contracts).collect();
        assert_eq!(ties, vec![&[0.5, 0.75][..], &[0.75, 0.75][..]]);

        for m in 1..4 {
            let space = BundleSpace::new(make_grid(2).unwrap(), m).unwrap();
            let rep = brute_force_best(&space, &spectrum2(), &uni, Revenue::Value).unwrap();
            assert_eq!(rep.bundle.contracts(), vec![0.5; m].as_slice());
        }
    }

    #[test]
    fn brute_force_cap() {
        let space = BundleSpace::new(make_grid(40).unwrap(), 6).unwrap();
        let err = brute_force_best_capped(
            &space,
            &spectrum2(),
            &TypeDistribution::uniform(),
            Revenue::Value,
            1000,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::CapExceeded {
                required: space.cardinality(),
                cap: 1000
            }
        );
    }

    #[test]
    fn dp_examples() {
        let uni = TypeDistribution::uniform();
        let space = BundleSpace::new(make_grid(4).unwrap(), 2).unwrap();
        let rep = dp_best(&space, &spectrum2(), &uni, Revenue::Value).unwrap();
        assert_eq!(rep.bundle.contracts(), &[0.25, 0.75]);
        assert!(close(rep.value, 0.46875));

        // m = 1 is a scan of r(x) (1 - F(g(0, x)))
        let grid = make_grid(9).unwrap();
        let space = BundleSpace::new(grid, 1).unwrap();
        let tri = TypeDistribution::triangular();
        let rep = dp_best(&space, &spectrum2(), &tri, Revenue::Value).unwrap();
        let scan = grid
            .values()
            .into_iter()
            .map(|x| (x * (1.0 - tri.cdf(x / 2.0).unwrap()), x))
            .fold((f64::NEG_INFINITY, 0.0), |a, b| {
                if b.0 > a.0 + TIE_TOLERANCE {
                    b
                } else {
                    a
                }
            });
        assert_eq!(rep.bundle.contracts(), &[scan.1]);
        assert!(close(rep.value, scan.0));

        let dp_model = BuyerModel::data_plan(1.0, 1.0).unwrap();
        let space = BundleSpace::new(make_grid(12).unwrap(), 3).unwrap();
        let a = dp_best(&space, &dp_model, &uni, Revenue::Value).unwrap();
        let b = brute_force_best(&space, &dp_model, &uni, Revenue::Value).unwrap();
        assert_eq!(a.bundle, b.bundle);
        assert!(close(a.value, b.value));
    }

    #[test]
    fn near_ties_resolve_lexicographically() {
        // three bundles agree to ~1e-17 here
        let dp_model = BuyerModel::data_plan(1.0, 1.0).unwrap();
        let tri = TypeDistribution::triangular();
        let space = BundleSpace::new(make_grid(12).unwrap(), 3).unwrap();
        let a = dp_best(&space, &dp_model, &tri, Revenue::Value).unwrap();
        let b = brute_force_best(&space, &dp_model, &tri, Revenue::Value).unwrap();
        assert_eq!(a.bundle, b.bundle);
        let twelfths: Vec<f64> = b.bundle.contracts().iter().map(|x| x * 12.0).collect();
        assert_eq!(
            twelfths
                .iter()
                .map(|v| v.round() as i64)
                .collect::<Vec<_>>(),
            vec![3, 6, 10]
        );
        assert!(!b.ties.is_empty());
    }

    #[test]
    fn recommendation_dp_matches_brute_force() {
        for eps in [0.01, 0.04, 0.11, 0.3] {
            let model = BuyerModel::recommendation(eps).unwrap();
            for dist in [TypeDistribution::uniform(), TypeDistribution::triangular()] {
                for (n, m) in [(6, 2), (9, 3), (11, 1)] {
                    let space = BundleSpace::new(make_grid(n).unwrap(), m).unwrap();
                    let a = dp_best(&space, &model, &dist, Revenue::Unit).unwrap();
                    let b = brute_force_best(&space, &model, &dist, Revenue::Unit).unwrap();
                    assert!(close(a.value, b.value), "eps={eps} n={n} m={m}");
                    assert_eq!(a.bundle, b.bundle, "eps={eps} n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn best_value_grows_with_bundle_size() {
        let grid = make_grid(10).unwrap();
        for model in [BuyerModel::data_plan(2.0, 1.0).unwrap(), spectrum2()] {
            let mut last = f64::NEG_INFINITY;
            for m in 1..=4 {
                let space = BundleSpace::new(grid, m).unwrap();
                let v = dp_best(
                    &space,
                    &model,
                    &TypeDistribution::triangular(),
                    Revenue::Value,
                )
                .unwrap()
                .value;
                assert!(v >= last - 1e-15);
                last = v;
            }
        }
    }

    proptest! {
        #[test]
        fn duplicates_do_not_change_payoff(
            x in 0.01f64..1.0, z in 0.01f64..1.0, a in 1.1f64..5.0, b in 0.2f64..5.0,
        ) {
            let (x, z) = (x.min(z), x.max(z));
            let tri = TypeDistribution::triangular();
            for model in [BuyerModel::data_plan(a, b).unwrap(), BuyerModel::spectrum(a).unwrap()] {
                let with_dup = expected_payoff(&Bundle::new(vec![x, x, z]).unwrap(), &model, &tri, Revenue::Value).unwrap();
                let plain = expected_payoff(&Bundle::new(vec![x, z]).unwrap(), &model, &tri, Revenue::Value).unwrap();
                prop_assert!((with_dup - plain).abs() < 1e-12);
            }
        }

        #[test]
        fn edge_sum_equals_region_sum(
            raw in prop::collection::vec(0.01f64..1.0, 1..6), a in 1.1f64..5.0, b in 0.2f64..5.0,
        ) {
            let mut xs = raw;
            xs.sort_by(f64::total_cmp);
            let bundle = Bundle::new(xs.clone()).unwrap();
            let tri = TypeDistribution::triangular();
            for model in [BuyerModel::data_plan(a, b).unwrap(), BuyerModel::spectrum(a).unwrap()] {
                let f = |t: f64| tri.cdf_unchecked(t);
                let m = xs.len();
                let mut edge_sum = xs[m - 1] - xs[0] * f(model.g(0.0, xs[0]).unwrap());
                for i in 0..m - 1 {
                    edge_sum += (xs[i] - xs[i + 1]) * f(model.g(xs[i], xs[i + 1]).unwrap());
                }
                let direct = expected_payoff(&bundle, &model, &tri, Revenue::Value).unwrap();
                prop_assert!((edge_sum - direct).abs() < 1e-12);
            }
        }
    }
}
