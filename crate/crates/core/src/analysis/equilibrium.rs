//! Price functions and competitive-equilibrium checks.
//!
//! An allocation `x*` and prices `ψ` form a competitive equilibrium when
//! (i) each `x*_l` maximizes `ψ_l(x) − c_l(x)` over the bidder's domain and
//! (ii) `x*` minimizes `Σ ψ_l(x_l) + d(x, y)` over the market constraints.

use crate::dispatch::{dispatch, solve_dispatch, DispatchProblem};
use crate::error::{Error, Result};
use crate::market::{BidCurve, MarketInstance};
use crate::mechanisms::{core_membership, CoreDescription, SEPARATION_LIMIT};
use crate::dispatch::CoalitionValues;
use crate::scalar::scaled_tol;

/// `ψ(0) = 0`, `ψ(x) = base(x) + offset` on the rest of the base domain,
/// `+∞` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceFunction {
    pub base: BidCurve,
    pub offset: f64,
}

impl PriceFunction {
    pub fn value(&self, x: &[f64]) -> f64 {
        if x.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        self.base.evaluate(x).map_or(f64::INFINITY, |v| v + self.offset)
    }

    /// The same function written as a bid.
    pub fn as_curve(&self) -> BidCurve {
        BidCurve::fixed_charge(self.base.clone(), self.offset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceFunctionSet {
    pub functions: Vec<PriceFunction>,
}

impl PriceFunctionSet {
    /// `ψ_l = c_l + ū_l` off zero, without checking `ū`.
    pub fn from_utilities(instance: &MarketInstance, utilities: &[f64]) -> Self {
        Self {
            functions: instance
                .bidders
                .iter()
                .zip(utilities)
                .map(|(b, &u)| PriceFunction {
                    base: b.truth().clone(),
                    offset: u,
                })
                .collect(),
        }
    }

    /// Linear prices `ψ_l(x) = π_l · x` on each bidder's domain.
    pub fn linear(instance: &MarketInstance, slopes: &[f64]) -> Self {
        Self {
            functions: instance
                .bidders
                .iter()
                .zip(slopes)
                .map(|(b, &s)| {
                    let t = b.truth();
                    let terms = t
                        .lower_bounds()
                        .into_iter()
                        .zip(t.upper_bounds())
                        .map(|(lo, hi)| crate::market::QuadraticTerm {
                            a: 0.0,
                            b: s,
                            lower: lo,
                            upper: hi,
                        })
                        .collect();
                    PriceFunction {
                        base: BidCurve::Quadratic(terms),
                        offset: 0.0,
                    }
                })
                .collect(),
        }
    }
}

/// Prices supporting a core point of the truthful market.
pub fn build_ce_prices(instance: &MarketInstance, utilities: &[f64], operator: f64) -> Result<PriceFunctionSet> {
    let truthful = instance.truthful();
    let values = CoalitionValues::new(&truthful);
    let core = CoreDescription::enumerate(&values, SEPARATION_LIMIT)?;
    let verdict = core_membership(&core, utilities, operator);
    if !verdict.member {
        return Err(Error::NotCoreMember(verdict.worst_violation));
    }
    Ok(PriceFunctionSet::from_utilities(instance, utilities))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeOptions {
    /// Grid spacing as a fraction of each domain's width.
    pub grid_step: f64,
    pub max_points: usize,
    /// Half-width used in place of an infinite domain bound.
    pub unbounded_window: f64,
    pub tolerance: f64,
}

impl Default for CeOptions {
    fn default() -> Self {
        Self {
            grid_step: 1e-2,
            max_points: 1_000_000,
            unbounded_window: 10.0,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeVerdict {
    /// Every bidder's allocation maximizes its price-minus-cost.
    pub cond_i: bool,
    /// The allocation minimizes the operator's cost at these prices.
    pub cond_ii: bool,
    /// The allocation equals the truthful dispatch optimum.
    pub efficient: bool,
    /// Per bidder, best grid improvement over the allocation.
    pub bidder_gaps: Vec<f64>,
    /// Operator cost at the allocation minus the cheapest cost at these
    /// prices.
    pub operator_gap: f64,
}

impl CeVerdict {
    pub fn holds(&self) -> bool {
        self.cond_i && self.cond_ii
    }
}

fn candidate_points(curve: &BidCurve, at: &[f64], options: &CeOptions) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; curve.dim()], at.to_vec()];
    match curve {
        BidCurve::DiscreteOffers(offers) => {
            points.extend(offers.iter().map(|o| o.quantity.clone()));
        }
        BidCurve::FixedCharge { base, .. } => {
            points.extend(candidate_points(base, at, options));
        }
        _ => {
            let lo = curve.lower_bounds();
            let hi = curve.upper_bounds();
            let dim = lo.len();
            let ranges: Vec<(f64, f64)> = lo
                .iter()
                .zip(&hi)
                .zip(at)
                .map(|((&l, &h), &a)| {
                    let w = options.unbounded_window.max(2.0 * a.abs());
                    (if l.is_finite() { l } else { -w }, if h.is_finite() { h } else { w })
                })
                .collect();
            let per_dim = (1.0 / options.grid_step).round().max(1.0) as usize;
            let mut steps = per_dim;
            while (steps + 1).pow(dim as u32) > options.max_points && steps > 1 {
                steps /= 2;
            }
            let mut index = vec![0usize; dim];
            loop {
                points.push(
                    index
                        .iter()
                        .zip(&ranges)
                        .map(|(&i, &(l, h))| l + (h - l) * i as f64 / steps as f64)
                        .collect(),
                );
                let mut k = 0;
                while k < dim {
                    index[k] += 1;
                    if index[k] <= steps {
                        break;
                    }
                    index[k] = 0;
                    k += 1;
                }
                if k == dim {
                    break;
                }
            }
            if let BidCurve::PiecewiseLinear(bp) = curve {
                points.extend(bp.iter().map(|&(q, _)| vec![q]));
            }
        }
    }
    points
}

/// Checks both equilibrium conditions for `allocation` at `prices`.
///
/// Condition (i) is tested on a grid over each bidder's true domain (or
/// over its offers), condition (ii) by dispatching the market with the
/// prices as bids.
pub fn verify_ce(
    instance: &MarketInstance,
    allocation: &[Vec<f64>],
    prices: &PriceFunctionSet,
    options: &CeOptions,
) -> Result<CeVerdict> {
    let truthful = instance.truthful();
    let mut bidder_gaps = Vec::with_capacity(allocation.len());
    for (l, b) in truthful.bidders.iter().enumerate() {
        let psi = &prices.functions[l];
        let cost = &b.curve;
        let surplus = |x: &[f64]| -> Option<f64> {
            let p = psi.value(x);
            let c = cost.evaluate(x).ok()?;
            p.is_finite().then_some(p - c)
        };
        let at = surplus(&allocation[l]).unwrap_or(f64::NEG_INFINITY);
        let best = candidate_points(cost, &allocation[l], options)
            .iter()
            .filter_map(|x| surplus(x))
            .fold(f64::NEG_INFINITY, f64::max);
        bidder_gaps.push(best - at);
    }
    let cond_i = bidder_gaps
        .iter()
        .zip(&prices.functions)
        .zip(allocation)
        .all(|((&g, f), x)| g <= scaled_tol(options.tolerance, f.value(x)));

    let mut priced = truthful.clone();
    for (b, f) in priced.bidders.iter_mut().zip(&prices.functions) {
        b.curve = f.as_curve();
    }
    let best = solve_dispatch(&DispatchProblem::new(&priced))?;
    let fixed = solve_dispatch(&DispatchProblem::new(&priced).with_fixed_allocation(allocation))?;
    let operator_gap = fixed.objective - best.objective;
    let cond_ii = fixed.is_optimal() && operator_gap <= scaled_tol(options.tolerance, best.objective);

    let efficient_x = dispatch(&truthful)?;
    let efficient = efficient_x.is_optimal()
        && efficient_x
            .allocation
            .iter()
            .flatten()
            .zip(allocation.iter().flatten())
            .all(|(a, b)| (a - b).abs() <= scaled_tol(options.tolerance, *a));
    Ok(CeVerdict {
        cond_i,
        cond_ii,
        efficient,
        bidder_gaps,
        operator_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Bidder, LinearConstraint, MarketKind, Sense};
    use crate::mechanisms::fixtures::four_node;
    use crate::mechanisms::{mpcs_with, pay_as_bid_with, vcg_with, Clearing, MpcsOptions};

    #[test]
    fn pay_as_bid_prices_are_costs() {
        let m = four_node();
        let c = Clearing::new(&m).unwrap();
        let o = pay_as_bid_with(&c);
        let psi = build_ce_prices(&m, &o.utilities, o.operator_utility).unwrap();
        assert!(psi.functions.iter().all(|f| f.offset == 0.0));
        let v = verify_ce(&m, &o.allocation, &psi, &CeOptions::default()).unwrap();
        assert!(v.holds() && v.efficient, "{v:?}");
    }

    #[test]
    fn mpcs_prices_support_equilibrium_and_vcg_prices_do_not() {
        let m = four_node();
        let c = Clearing::new(&m).unwrap();
        let o = mpcs_with(&c, &MpcsOptions::default()).unwrap().outcome;
        let psi = build_ce_prices(&m, &o.utilities, o.operator_utility).unwrap();
        for (f, u) in psi.functions.iter().zip(&o.utilities) {
            assert_eq!(f.offset, *u);
        }
        for (f, (x, p)) in psi.functions.iter().zip(o.allocation.iter().zip(&o.payments)) {
            assert!((f.value(x) - p).abs() < 1e-9);
        }
        let v = verify_ce(&m, &o.allocation, &psi, &CeOptions::default()).unwrap();
        assert!(v.holds(), "{v:?}");

        let vcg = vcg_with(&c).unwrap();
        assert!(matches!(
            build_ce_prices(&m, &vcg.utilities, vcg.operator_utility),
            Err(Error::NotCoreMember(_))
        ));
        let bad = PriceFunctionSet::from_utilities(&m, &vcg.utilities);
        let v = verify_ce(&m, &vcg.allocation, &bad, &CeOptions::default()).unwrap();
        assert!(!v.holds(), "{v:?}");
    }

    #[test]
    fn low_linear_price_breaks_bidder_optimality() {
        // seller with cost x² + x; at x* = 2 the marginal cost is 5
        let m = MarketInstance::new(
            "two",
            MarketKind::Exchange,
            vec![
                Bidder::new("s", BidCurve::quadratic(1.0, 1.0, 0.0, 10.0)),
                Bidder::new("d", BidCurve::quadratic(0.0, 5.0, -2.0, 0.0)),
            ],
        )
        .with_constraint(LinearConstraint::new("balance", [("s", 1.0), ("d", 1.0)], Sense::Eq, 0.0));
        let x = vec![vec![2.0], vec![-2.0]];
        let psi = PriceFunctionSet::linear(&m, &[4.0, 4.0]);
        let v = verify_ce(&m, &x, &psi, &CeOptions::default()).unwrap();
        assert!(!v.cond_i);
        assert!(v.bidder_gaps[0] > 0.1);
        let psi = PriceFunctionSet::linear(&m, &[5.0, 5.0]);
        assert!(verify_ce(&m, &x, &psi, &CeOptions::default()).unwrap().cond_i);
    }
}
