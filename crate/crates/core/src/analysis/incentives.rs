//! Unilateral deviations under core-selecting rules.

use crate::error::{Error, Result};
use crate::market::{BidCurve, MarketInstance};
use crate::mechanisms::{run_with, Clearing, Mechanism, MpcsOptions};

/// Default ε for the deviation bid.
pub const DEVIATION_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct IncentiveBound {
    pub bidder: usize,
    /// `J(B_{−l}) − J(C_l, B_{−l})`.
    pub vcg_utility: f64,
    /// Utility under the rule when `l` bids truthfully.
    pub utility: f64,
    /// Largest gain any unilateral deviation can achieve.
    pub bound: f64,
}

/// Largest profit bidder `l` can gain by misreporting, given the others'
/// bids, under `mechanism`.
pub fn incentive_bound(
    instance: &MarketInstance,
    bidder: usize,
    mechanism: Mechanism,
    options: &MpcsOptions,
) -> Result<IncentiveBound> {
    let truthful = instance.truthful_for(bidder)?;
    let clearing = Clearing::new(&truthful)?;
    bound_on(&clearing, bidder, mechanism, options)
}

fn bound_on(clearing: &Clearing<'_>, bidder: usize, mechanism: Mechanism, options: &MpcsOptions) -> Result<IncentiveBound> {
    let vcg_utility = clearing.vcg_utilities()?[bidder];
    let utility = run_with(mechanism, clearing, options)?.utilities[bidder];
    Ok(IncentiveBound {
        bidder,
        vcg_utility,
        utility,
        bound: vcg_utility - utility,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub bidder: String,
    pub bid: BidCurve,
    pub epsilon: f64,
    pub mechanism: Mechanism,
    /// Rule used to clear the deviated market. LMP is undefined for the
    /// fixed-charge deviation bid, so MPCS stands in for it.
    pub cleared_with: Mechanism,
    pub truthful_utility: f64,
    /// True utility `p_l − c_l(x_l)` after deviating.
    pub achieved_utility: f64,
    pub bound: f64,
    /// `achieved − truthful`.
    pub gain: f64,
    /// `gain − (bound − ε)`; nonnegative up to tolerance.
    pub gap: f64,
}

impl DeviationReport {
    /// The gain lies in `[bound − ε − tol, bound + tol]`.
    pub fn is_tight(&self, tol: f64) -> bool {
        self.gain >= self.bound - self.epsilon - tol && self.gain <= self.bound + tol
    }
}

/// Builds the bid `c_l(x) + ū^VCG_l − ε` on `X_l ∖ {0}` (zero at zero),
/// clears the market with it and measures the resulting true utility.
pub fn construct_optimal_deviation(
    instance: &MarketInstance,
    bidder: usize,
    mechanism: Mechanism,
    epsilon: f64,
    options: &MpcsOptions,
) -> Result<DeviationReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let truthful = instance.truthful_for(bidder)?;
    let truth = truthful.bidders[bidder].curve.clone();
    let clearing = Clearing::new(&truthful)?;
    if !clearing.winners().contains(bidder) {
        return Err(Error::LosingBidder(instance.bidders[bidder].id.clone()));
    }
    let bound = bound_on(&clearing, bidder, mechanism, options)?;

    let bid = BidCurve::fixed_charge(truth.clone(), bound.vcg_utility - epsilon);
    let deviated = truthful.with_bid(bidder, bid.clone());
    let cleared_with = if mechanism == Mechanism::Lmp {
        Mechanism::Mpcs
    } else {
        mechanism
    };
    let dev_clearing = Clearing::new(&deviated)?;
    let outcome = run_with(cleared_with, &dev_clearing, options)?;
    let x = &outcome.allocation[bidder];
    let achieved_utility = outcome.payments[bidder] - truth.evaluate(x)?;
    let gain = achieved_utility - bound.utility;
    Ok(DeviationReport {
        bidder: instance.bidders[bidder].id.clone(),
        bid,
        epsilon,
        mechanism,
        cleared_with,
        truthful_utility: bound.utility,
        achieved_utility,
        bound: bound.bound,
        gain,
        gap: gain - (bound.bound - epsilon),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::fixtures::{pair_exchange, four_node};

    #[test]
    fn vcg_bound_is_zero() {
        let m = with_truth(&four_node());
        for l in 0..4 {
            let b = incentive_bound(&m, l, Mechanism::Vcg, &MpcsOptions::default()).unwrap();
            assert!(b.bound.abs() < 1e-12);
        }
    }

    fn with_truth(m: &MarketInstance) -> MarketInstance {
        let mut t = m.clone();
        for b in &mut t.bidders {
            b.true_curve = Some(b.curve.clone());
        }
        t
    }

    #[test]
    fn pair_pay_as_bid_bound_and_deviation() {
        let m = with_truth(&pair_exchange());
        let b = incentive_bound(&m, 0, Mechanism::PayAsBid, &MpcsOptions::default()).unwrap();
        assert!((b.bound - 2.0).abs() < 1e-9);
        let d = construct_optimal_deviation(&m, 0, Mechanism::PayAsBid, 1e-6, &MpcsOptions::default()).unwrap();
        assert!((d.achieved_utility - (2.0 - 1e-6)).abs() < 1e-8, "{d:?}");
        assert!(d.is_tight(1e-6));
    }

    #[test]
    fn four_node_lmp_deviation_is_cleared_by_mpcs() {
        let m = with_truth(&four_node());
        let d = construct_optimal_deviation(&m, 2, Mechanism::Lmp, 1e-6, &MpcsOptions::default()).unwrap();
        assert_eq!(d.cleared_with, Mechanism::Mpcs);
        assert!(d.is_tight(1e-6), "{d:?}");
    }

    #[test]
    fn missing_truth_and_losers_are_errors() {
        let m = pair_exchange();
        assert_eq!(
            incentive_bound(&m, 0, Mechanism::Vcg, &MpcsOptions::default()).unwrap_err(),
            Error::MissingTrueCurve("1".into())
        );
        let mut z = with_truth(&m);
        z.bidders[0].curve = BidCurve::quadratic(0.0, 5.0, 0.0, 1.0);
        z.bidders[0].true_curve = Some(z.bidders[0].curve.clone());
        assert_eq!(
            construct_optimal_deviation(&z, 0, Mechanism::PayAsBid, 1e-6, &MpcsOptions::default()).unwrap_err(),
            Error::LosingBidder("1".into())
        );
    }
}
