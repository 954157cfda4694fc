//! Payment rules.
//!
//! Every rule works from the same cleared market ([`Clearing`]): the
//! dispatch optimum, the bid cost of each allocation, and a shared cache of
//! coalition values.

mod core;
mod mpcs;
mod report;

pub use self::core::{
    core_membership, separation_oracle, CoreDescription, CoreMembership, CoreWitness, Separation,
    MEMBERSHIP_TOLERANCE, SEPARATION_LIMIT,
};
pub use self::mpcs::{
    mpcs, mpcs_master, mpcs_with, CapRow, CoreMode, GenerationLog, GenerationStep, MpcsOptions,
    MpcsResult,
};
pub use self::report::{run_mechanisms, MechanismEntry, MechanismReport};

use std::fmt;
use std::str::FromStr;

use crate::dispatch::{dispatch, Coalition, CoalitionValues, DispatchResult};
use crate::error::{Error, Result};
use crate::market::{MarketInstance, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mechanism {
    PayAsBid,
    Lmp,
    Vcg,
    Mpcs,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [Mechanism::PayAsBid, Mechanism::Lmp, Mechanism::Mpcs, Mechanism::Vcg];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::PayAsBid => "pay_as_bid",
            Mechanism::Lmp => "lmp",
            Mechanism::Vcg => "vcg",
            Mechanism::Mpcs => "mpcs",
        }
    }

    /// Rules whose outcomes always lie in the core.
    pub fn is_core_selecting(self) -> bool {
        !matches!(self, Mechanism::Vcg)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "pay_as_bid" | "pab" => Ok(Mechanism::PayAsBid),
            "lmp" => Ok(Mechanism::Lmp),
            "vcg" => Ok(Mechanism::Vcg),
            "mpcs" => Ok(Mechanism::Mpcs),
            other => Err(Error::InvalidArgument(format!("unknown mechanism '{other}'"))),
        }
    }
}

/// Payments and revealed utilities of one rule at the dispatch optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct PaymentOutcome {
    pub mechanism: Mechanism,
    pub allocation: Vec<Vec<f64>>,
    /// `J(B)`.
    pub objective: f64,
    pub bid_costs: Vec<f64>,
    pub payments: Vec<f64>,
    /// `p_l − b_l(x*_l)`.
    pub utilities: Vec<f64>,
    /// `−Σ p_l − d(x*, y*)`, the operator's budget.
    pub operator_utility: f64,
    /// Per-bidder unit price (LMP only).
    pub prices: Option<Vec<f64>>,
    /// The prices come from a degenerate optimum.
    pub degenerate: bool,
}

impl PaymentOutcome {
    fn from_utilities(mechanism: Mechanism, clearing: &Clearing<'_>, utilities: Vec<f64>) -> Self {
        let payments: Vec<f64> = clearing
            .bid_costs
            .iter()
            .zip(&utilities)
            .map(|(b, u)| b + u)
            .collect();
        let operator_utility = -payments.iter().sum::<f64>() - clearing.dispatch.recourse_cost;
        Self {
            mechanism,
            allocation: clearing.dispatch.allocation.clone(),
            objective: clearing.objective(),
            bid_costs: clearing.bid_costs.clone(),
            payments,
            utilities,
            operator_utility,
            prices: None,
            degenerate: false,
        }
    }

    /// Operator utility; nonnegative means the rule is budget-balanced here.
    pub fn budget(&self) -> f64 {
        self.operator_utility
    }

    pub fn total_bidder_utility(&self) -> f64 {
        self.utilities.iter().sum()
    }
}

/// A cleared market shared by all payment rules.
pub struct Clearing<'a> {
    pub instance: &'a MarketInstance,
    pub dispatch: DispatchResult,
    pub bid_costs: Vec<f64>,
    pub values: CoalitionValues<'a>,
}

impl<'a> Clearing<'a> {
    /// Clears the market; an infeasible market is an error here.
    pub fn new(instance: &'a MarketInstance) -> Result<Self> {
        let dispatch = dispatch(instance)?;
        if !dispatch.is_optimal() {
            return Err(Error::Infeasible);
        }
        let bid_costs = instance
            .bidders
            .iter()
            .zip(&dispatch.allocation)
            .map(|(b, x)| b.curve.evaluate(x))
            .collect::<Result<Vec<f64>>>()?;
        let values = CoalitionValues::new(instance);
        values.insert(Coalition::full(instance.num_bidders()), dispatch.objective);
        Ok(Self {
            instance,
            dispatch,
            bid_costs,
            values,
        })
    }

    pub fn num_bidders(&self) -> usize {
        self.instance.num_bidders()
    }

    pub fn objective(&self) -> f64 {
        self.dispatch.objective
    }

    pub fn full(&self) -> Coalition {
        Coalition::full(self.num_bidders())
    }

    /// Bidders with a nonzero allocation.
    pub fn winners(&self) -> Coalition {
        Coalition::from_members(
            (0..self.num_bidders()).filter(|&l| self.dispatch.is_allocated(l, self.instance.tolerance)),
        )
    }

    /// Clarke-pivot utilities `J(B_{−l}) − J(B)`.
    pub fn vcg_utilities(&self) -> Result<Vec<f64>> {
        let full = self.full();
        let without: Vec<Coalition> = (0..self.num_bidders()).map(|l| full.without(l)).collect();
        let values = self.values.values(&without)?;
        let j = self.objective();
        let winners = self.winners();
        values
            .iter()
            .enumerate()
            .map(|(l, &v)| {
                if v.is_infinite() {
                    return Err(Error::RemovalInfeasible(self.instance.bidders[l].id.clone()));
                }
                let u = v - j;
                // a loser's removal leaves the optimum in place
                Ok(if !winners.contains(l) && u.abs() <= self.instance.tol(j) { 0.0 } else { u })
            })
            .collect()
    }
}

pub fn pay_as_bid_with(clearing: &Clearing<'_>) -> PaymentOutcome {
    PaymentOutcome::from_utilities(Mechanism::PayAsBid, clearing, vec![0.0; clearing.num_bidders()])
}

/// Pay-as-bid: every winner is paid its bid.
pub fn pay_as_bid(instance: &MarketInstance) -> Result<PaymentOutcome> {
    Ok(pay_as_bid_with(&Clearing::new(instance)?))
}

/// Checks that marginal prices are defined for the instance.
pub fn lmp_applicable(instance: &MarketInstance) -> Result<()> {
    if let Some(b) = instance.bidders.iter().find(|b| !b.curve.is_convex()) {
        return Err(Error::NonconvexBids(b.id.clone()));
    }
    if instance.recourse.is_some() {
        return Err(Error::DualsUnavailable("a recourse block is present".into()));
    }
    match &instance.network {
        Some(_) => {
            if !instance.constraints.is_empty() {
                return Err(Error::DualsUnavailable(
                    "side constraints on top of a network have no nodal interpretation".into(),
                ));
            }
            if let Some(b) = instance.bidders.iter().find(|b| b.node.is_none()) {
                return Err(Error::DualsUnavailable(format!("bidder '{}' has no node", b.id)));
            }
        }
        None => {
            if instance.constraints.len() != 1 || instance.constraints[0].sense != Sense::Eq {
                return Err(Error::DualsUnavailable(
                    "without a network the market needs exactly one balance equality".into(),
                ));
            }
        }
    }
    Ok(())
}

pub fn lmp_with(clearing: &Clearing<'_>) -> Result<PaymentOutcome> {
    let inst = clearing.instance;
    lmp_applicable(inst)?;
    let d = &clearing.dispatch;
    let prices: Vec<Vec<f64>> = match &inst.network {
        Some(net) => {
            let nodal = d
                .nodal_prices
                .as_ref()
                .ok_or_else(|| Error::DualsUnavailable("solver returned no nodal duals".into()))?;
            inst.bidders
                .iter()
                .map(|b| {
                    let i = net
                        .node_index(b.node.as_deref().unwrap_or_default())
                        .ok_or_else(|| Error::UnknownReference {
                            kind: "node",
                            name: b.node.clone().unwrap_or_default(),
                        })?;
                    Ok(vec![nodal[i]; b.curve.dim()])
                })
                .collect::<Result<_>>()?
        }
        None => {
            let pi = d
                .constraint_prices
                .as_ref()
                .and_then(|p| p.first().copied())
                .ok_or_else(|| Error::DualsUnavailable("solver returned no balance dual".into()))?;
            let row = &inst.constraints[0];
            (0..inst.num_bidders())
                .map(|l| {
                    (0..inst.bidders[l].curve.dim())
                        .map(|k| pi * row.terms.get(&inst.variable_name(l, k)).copied().unwrap_or(0.0))
                        .collect()
                })
                .collect()
        }
    };
    let utilities: Vec<f64> = (0..inst.num_bidders())
        .map(|l| {
            let pay: f64 = prices[l].iter().zip(&d.allocation[l]).map(|(p, x)| p * x).sum();
            pay - clearing.bid_costs[l]
        })
        .collect();
    let mut out = PaymentOutcome::from_utilities(Mechanism::Lmp, clearing, utilities);
    out.prices = Some(prices.iter().map(|p| p.first().copied().unwrap_or(0.0)).collect());
    out.degenerate = d.degenerate;
    Ok(out)
}

/// Locational marginal pricing: each bidder is paid the balance dual of
/// its node times its quantity.
pub fn lmp(instance: &MarketInstance) -> Result<PaymentOutcome> {
    lmp_with(&Clearing::new(instance)?)
}

pub fn vcg_with(clearing: &Clearing<'_>) -> Result<PaymentOutcome> {
    Ok(PaymentOutcome::from_utilities(Mechanism::Vcg, clearing, clearing.vcg_utilities()?))
}

/// VCG with the Clarke pivot.
pub fn vcg(instance: &MarketInstance) -> Result<PaymentOutcome> {
    vcg_with(&Clearing::new(instance)?)
}

/// Runs one rule on a cleared market.
pub fn run_with(mechanism: Mechanism, clearing: &Clearing<'_>, options: &MpcsOptions) -> Result<PaymentOutcome> {
    match mechanism {
        Mechanism::PayAsBid => Ok(pay_as_bid_with(clearing)),
        Mechanism::Lmp => lmp_with(clearing),
        Mechanism::Vcg => vcg_with(clearing),
        Mechanism::Mpcs => Ok(mpcs_with(clearing, options)?.outcome),
    }
}

/// Runs one rule from scratch.
pub fn run(mechanism: Mechanism, instance: &MarketInstance, options: &MpcsOptions) -> Result<PaymentOutcome> {
    run_with(mechanism, &Clearing::new(instance)?, options)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::market::{BidCurve, Bidder, LinearConstraint, Line, MarketInstance, MarketKind, Network, Sense};

    pub fn pair_exchange() -> MarketInstance {
        MarketInstance::new(
            "pair",
            MarketKind::Exchange,
            vec![
                Bidder::new("1", BidCurve::quadratic(0.0, 1.0, 0.0, 1.0)),
                Bidder::new("2", BidCurve::quadratic(0.0, 3.0, -1.0, 0.0)),
            ],
        )
        .with_constraint(LinearConstraint::new("balance", [("1", 1.0), ("2", 1.0)], Sense::Eq, 0.0))
    }

    pub fn four_node() -> MarketInstance {
        let mut net = Network::new(["1", "2", "3", "4"].iter().map(|s| s.to_string()).collect(), "3");
        net.lines = vec![
            Line::new("3", "1", 1.0, 2.0),
            Line::new("3", "2", 1.0, 2.0),
            Line::new("1", "4", 1.0, 10.0),
            Line::new("2", "4", 1.0, 10.0),
        ];
        MarketInstance::new(
            "four-node",
            MarketKind::Exchange,
            vec![
                Bidder::new("G1", BidCurve::quadratic(5.0, 4.0, 0.0, f64::INFINITY)).at("1"),
                Bidder::new("G2", BidCurve::quadratic(4.0, 5.0, 0.0, f64::INFINITY)).at("2"),
                Bidder::new("G3", BidCurve::quadratic(1.0, 1.0, 0.0, f64::INFINITY)).at("3"),
                Bidder::new("D4", BidCurve::quadratic(1.0, 20.0, -8.0, 0.0)).at("4"),
            ],
        )
        .with_network(net)
    }
}
