//! Checks of mechanism properties on concrete markets.

mod equilibrium;
mod incentives;
pub mod random;

pub use equilibrium::{build_ce_prices, verify_ce, CeOptions, CeVerdict, PriceFunction, PriceFunctionSet};
pub use incentives::{construct_optimal_deviation, incentive_bound, DeviationReport, IncentiveBound, DEVIATION_EPSILON};

use crate::dispatch::{dispatch, Coalition, CoalitionValues};
use crate::error::{Error, Result};
use crate::market::{replicate_instance, MarketInstance, MarketKind, Sense};
use crate::mechanisms::{lmp, run, vcg, Mechanism, MpcsOptions, PaymentOutcome};
use crate::scalar::scaled_tol;

/// Relative tolerance for sign and dominance verdicts.
pub const VERDICT_TOLERANCE: f64 = 1e-7;

/// Default bound on the number of bidders for the supermodularity sweep.
pub const SUPERMODULARITY_LIMIT: usize = 12;

/// Operator utility `u₀` of an outcome.
pub fn budget(outcome: &PaymentOutcome) -> f64 {
    outcome.operator_utility
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetVerdict {
    pub mechanism: Mechanism,
    pub operator_utility: f64,
    /// Pay-as-bid leaves the operator nonnegative: `−J(B) ≥ 0`.
    pub premise_holds: bool,
    pub exchange: bool,
    pub balanced: bool,
    /// Exchange, premise satisfied, core-selecting rule.
    pub theorem_applies: bool,
}

impl BudgetVerdict {
    /// False only when the theorem applies and the budget is in deficit.
    pub fn consistent(&self) -> bool {
        !self.theorem_applies || self.balanced
    }
}

pub fn check_budget_balance(
    instance: &MarketInstance,
    mechanism: Mechanism,
    options: &MpcsOptions,
) -> Result<BudgetVerdict> {
    let outcome = run(mechanism, instance, options)?;
    let j = outcome.objective;
    let premise_holds = -j >= -instance.tol(j);
    let exchange = instance.kind == MarketKind::Exchange;
    let u0 = budget(&outcome);
    Ok(BudgetVerdict {
        mechanism,
        operator_utility: u0,
        premise_holds,
        exchange,
        balanced: u0 >= -scaled_tol(VERDICT_TOLERANCE, j),
        theorem_applies: exchange && premise_holds && mechanism.is_core_selecting(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaymentComparison {
    pub bidder: String,
    pub lmp: f64,
    pub vcg: f64,
    /// `p^LMP ≤ p^VCG` up to tolerance.
    pub dominated: bool,
}

/// Per-bidder LMP and VCG payments.
pub fn compare_lmp_vcg(instance: &MarketInstance) -> Result<Vec<PaymentComparison>> {
    let l = lmp(instance)?;
    let v = vcg(instance)?;
    let tol = scaled_tol(VERDICT_TOLERANCE, l.objective);
    Ok(instance
        .bidders
        .iter()
        .zip(l.payments.iter().zip(&v.payments))
        .map(|(b, (&pl, &pv))| PaymentComparison {
            bidder: b.id.clone(),
            lmp: pl,
            vcg: pv,
            dominated: pl <= pv + tol,
        })
        .collect())
}

/// Markets with a single balance (or an uncongested DC network), convex
/// bids and no second stage.
fn check_replicable(instance: &MarketInstance) -> Result<()> {
    if instance.recourse.is_some() {
        return Err(Error::UnsupportedStructure("second-stage costs".into()));
    }
    match &instance.network {
        Some(n) if n.has_limits() => return Err(Error::UnsupportedStructure("line limits".into())),
        Some(_) if !instance.constraints.is_empty() => {
            return Err(Error::UnsupportedStructure("network with extra constraints".into()))
        }
        None if instance.constraints.len() != 1 || instance.constraints[0].sense != Sense::Eq => {
            return Err(Error::UnsupportedStructure("needs exactly one balance row".into()))
        }
        _ => {}
    }
    if let Some(b) = instance.bidders.iter().find(|b| !b.curve.is_convex()) {
        return Err(Error::UnsupportedStructure(format!("bid of '{}' is not convex", b.id)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationCheck {
    pub copies: usize,
    /// `q · J(C)`.
    pub scaled: f64,
    /// `J(q C)`.
    pub replicated: f64,
    pub gap: f64,
    pub within: bool,
}

/// Compares `q · J(C)` with the optimum of the `q`-fold replicated market.
pub fn replication_identity(instance: &MarketInstance, q: usize) -> Result<ReplicationCheck> {
    let truthful = instance.truthful();
    check_replicable(&truthful)?;
    let single = dispatch(&truthful)?;
    if !single.is_optimal() {
        return Err(Error::Infeasible);
    }
    let replicated = dispatch(&replicate_instance(&truthful, q)?)?;
    if !replicated.is_optimal() {
        return Err(Error::Infeasible);
    }
    let scaled = q as f64 * single.objective;
    let gap = (scaled - replicated.objective).abs();
    Ok(ReplicationCheck {
        copies: q,
        scaled,
        replicated: replicated.objective,
        gap,
        within: gap <= scaled_tol(1e-6, scaled),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignVerdict {
    pub operator_utility: f64,
    pub nonpositive: bool,
}

/// VCG operator utility on a market within the replication scope.
pub fn vcg_operator_sign(instance: &MarketInstance) -> Result<SignVerdict> {
    check_replicable(instance)?;
    let o = vcg(instance)?;
    let u0 = o.operator_utility;
    Ok(SignVerdict {
        operator_utility: u0,
        nonpositive: u0 <= scaled_tol(VERDICT_TOLERANCE, o.objective),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupermodularityVerdict {
    pub supermodular: bool,
    /// First `(S, R, l)` with `J(S) − J(S∖l) > J(R) − J(R∖l)`.
    pub witness: Option<(Coalition, Coalition, usize)>,
}

/// Tests `J(B_S) − J(B_{S∖l}) ≤ J(B_R) − J(B_{R∖l})` for all
/// `l ∈ S ⊆ R ⊆ L`, in increasing bitmask order of `R`, then `S`, then `l`.
pub fn supermodularity_check(instance: &MarketInstance, limit: usize) -> Result<SupermodularityVerdict> {
    let n = instance.num_bidders();
    if n > limit {
        return Err(Error::CapExceeded {
            needed: 1u128 << n,
            cap: 1u128 << limit,
        });
    }
    let values = CoalitionValues::new(instance);
    let all: Vec<Coalition> = Coalition::full(n).subsets().collect();
    let j = values.values(&all)?;
    let value = |s: Coalition| j[s.bits() as usize];
    let tol = instance.tol(value(Coalition::full(n)));
    for &r in &all {
        for s in r.subsets() {
            for l in s.members() {
                let lhs = value(s) - value(s.without(l));
                let rhs = value(r) - value(r.without(l));
                let violated = if lhs.is_finite() && rhs.is_finite() {
                    lhs > rhs + tol
                } else {
                    false
                };
                if violated {
                    return Ok(SupermodularityVerdict {
                        supermodular: false,
                        witness: Some((s, r, l)),
                    });
                }
            }
        }
    }
    Ok(SupermodularityVerdict {
        supermodular: true,
        witness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{BidCurve, Bidder, LinearConstraint};
    use crate::mechanisms::fixtures::{pair_exchange, four_node};

    fn zero_trade() -> MarketInstance {
        MarketInstance::new(
            "idle",
            MarketKind::Exchange,
            vec![
                Bidder::new("s", BidCurve::quadratic(1.0, 10.0, 0.0, 5.0)),
                Bidder::new("d", BidCurve::quadratic(0.0, 5.0, -5.0, 0.0)),
            ],
        )
        .with_constraint(LinearConstraint::new("balance", [("s", 1.0), ("d", 1.0)], Sense::Eq, 0.0))
    }

    #[test]
    fn four_node_budgets() {
        let m = four_node();
        let o = MpcsOptions::default();
        let v = check_budget_balance(&m, Mechanism::Mpcs, &o).unwrap();
        assert!(v.premise_holds && v.balanced && v.theorem_applies);
        assert!(v.operator_utility.abs() < 1e-4);
        let v = check_budget_balance(&m, Mechanism::Vcg, &o).unwrap();
        assert!(!v.balanced && !v.theorem_applies && v.consistent());
        assert!((v.operator_utility + 34.845).abs() < 1e-2);
    }

    #[test]
    fn premise_failure_is_reported() {
        // a seller that must produce at a cost: J > 0
        let m = MarketInstance::new(
            "forced",
            MarketKind::Exchange,
            vec![
                Bidder::new("s", BidCurve::quadratic(0.0, 10.0, 1.0, 2.0)),
                Bidder::new("d", BidCurve::quadratic(0.0, -1.0, -2.0, -1.0)),
            ],
        )
        .with_constraint(LinearConstraint::new("balance", [("s", 1.0), ("d", 1.0)], Sense::Eq, 0.0));
        let v = check_budget_balance(&m, Mechanism::PayAsBid, &MpcsOptions::default()).unwrap();
        assert!(!v.premise_holds && !v.theorem_applies);
    }

    #[test]
    fn lmp_dominated_by_vcg() {
        for c in compare_lmp_vcg(&four_node()).unwrap() {
            assert!(c.dominated, "{c:?}");
        }
        for c in compare_lmp_vcg(&zero_trade()).unwrap() {
            assert!(c.lmp.abs() < 1e-9 && c.vcg.abs() < 1e-9 && c.dominated);
        }
    }

    #[test]
    fn replication_on_pair() {
        let m = pair_exchange();
        let r = replication_identity(&m, 2).unwrap();
        assert!((r.scaled + 4.0).abs() < 1e-9);
        assert!((r.replicated + 4.0).abs() < 1e-6);
        assert!(r.within);
        assert_eq!(replication_identity(&m, 1).unwrap().gap, 0.0);
        assert!(matches!(replication_identity(&four_node(), 2), Err(Error::UnsupportedStructure(_))));
    }

    #[test]
    fn vcg_sign() {
        let v = vcg_operator_sign(&pair_exchange()).unwrap();
        assert!((v.operator_utility + 2.0).abs() < 1e-9 && v.nonpositive);
        let v = vcg_operator_sign(&zero_trade()).unwrap();
        assert!(v.operator_utility.abs() < 1e-9 && v.nonpositive);
        assert!(matches!(vcg_operator_sign(&four_node()), Err(Error::UnsupportedStructure(_))));
    }

    #[test]
    fn supermodularity() {
        let v = supermodularity_check(&pair_exchange(), SUPERMODULARITY_LIMIT).unwrap();
        assert!(!v.supermodular);
        assert_eq!(
            v.witness,
            Some((Coalition::singleton(0), Coalition::full(2), 0))
        );
        let v = supermodularity_check(&zero_trade(), SUPERMODULARITY_LIMIT).unwrap();
        assert!(v.supermodular && v.witness.is_none());
        assert!(matches!(
            supermodularity_check(&four_node(), 3),
            Err(Error::CapExceeded { .. })
        ));
    }
}
