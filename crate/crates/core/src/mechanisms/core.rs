//! The core of the market game and its separation problem.
//!
//! A utility point `(ū, ū₀)` is in the core when
//!
//! ```text
//!     ū₀ + Σ_{l∈L} ū_l  = −J(B)
//!     ū₀ + Σ_{l∈S} ū_l ≥ −J(B_S)      for every S ⊊ L
//!     ū_l ≥ 0
//! ```

use crate::dispatch::{Coalition, CoalitionValues};
use crate::error::{Error, Result};
use crate::scalar::scaled_tol;

/// Worst violation tolerated by [`core_membership`], scaled by `max(1, |J|)`.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-6;

/// Default bound on the number of bidders whose subsets are enumerated.
pub const SEPARATION_LIMIT: usize = 20;

/// Every row of the core, materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreDescription {
    pub num_bidders: usize,
    /// `J(B)`.
    pub objective: f64,
    /// `(S, J(B_S))` for every proper subset `S`, the empty set included.
    pub rows: Vec<(Coalition, f64)>,
}

impl CoreDescription {
    /// Enumerates all `2^|L| − 1` coalition rows.
    pub fn enumerate(values: &CoalitionValues<'_>, limit: usize) -> Result<Self> {
        let n = values.instance().num_bidders();
        if n > limit {
            return Err(Error::CapExceeded {
                needed: 1u128 << n,
                cap: 1u128 << limit,
            });
        }
        let full = Coalition::full(n);
        let subsets: Vec<Coalition> = full.subsets().collect();
        let vals = values.values(&subsets)?;
        let objective = *vals.last().expect("full coalition");
        let rows = subsets
            .into_iter()
            .zip(vals)
            .filter(|(s, _)| *s != full)
            .collect();
        Ok(Self {
            num_bidders: n,
            objective,
            rows,
        })
    }

    /// The pay-as-bid point `ū = 0, ū₀ = −J(B)`.
    pub fn pay_as_bid_point(&self) -> (Vec<f64>, f64) {
        (vec![0.0; self.num_bidders], -self.objective)
    }

    pub fn tolerance(&self) -> f64 {
        scaled_tol(MEMBERSHIP_TOLERANCE, self.objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoreWitness {
    Equality,
    Nonnegativity(usize),
    Coalition(Coalition),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreMembership {
    pub member: bool,
    /// Largest violation over all rows; nonpositive when every row holds
    /// with slack.
    pub worst_violation: f64,
    /// The most violated row.
    pub witness: CoreWitness,
}

/// Checks a utility point against every row of the core.
pub fn core_membership(core: &CoreDescription, utilities: &[f64], operator: f64) -> CoreMembership {
    assert_eq!(utilities.len(), core.num_bidders, "one utility per bidder");
    let total: f64 = utilities.iter().sum();
    let mut worst = (operator + total + core.objective).abs();
    let mut witness = CoreWitness::Equality;
    for (l, &u) in utilities.iter().enumerate() {
        if -u > worst {
            worst = -u;
            witness = CoreWitness::Nonnegativity(l);
        }
    }
    for &(s, value) in &core.rows {
        if value.is_infinite() {
            continue;
        }
        let lhs: f64 = operator + s.members().map(|l| utilities[l]).sum::<f64>();
        let violation = -value - lhs;
        if violation > worst {
            worst = violation;
            witness = CoreWitness::Coalition(s);
        }
    }
    CoreMembership {
        member: worst <= core.tolerance(),
        worst_violation: worst,
        witness,
    }
}

/// Most violated coalition row for a candidate on the equality row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub coalition: Coalition,
    /// `−J(B_S) − ū₀ − Σ_{l∈S} ū_l`; positive means `S` blocks.
    pub violation: f64,
}

/// Finds `argmin_{S ⊊ L} J(B_S) + Σ_{l∈S} ū_l`.
///
/// When every loser (bidder outside `winners`) has zero utility, only
/// coalitions containing all losers are examined: adding a loser to a
/// coalition cannot raise its value, so those rows imply the rest. Ties go
/// to the first coalition in increasing bitmask order of the removed set.
pub fn separation_oracle(
    values: &CoalitionValues<'_>,
    winners: Coalition,
    utilities: &[f64],
    operator: f64,
    limit: usize,
) -> Result<Separation> {
    let inst = values.instance();
    let n = inst.num_bidders();
    let full = Coalition::full(n);
    let tol = inst.tolerance;
    let reduced = full
        .difference(winners)
        .members()
        .all(|l| utilities[l].abs() <= scaled_tol(tol, utilities[l]));
    let pool = if reduced { winners } else { full };
    if pool.len() > limit {
        return Err(Error::CapExceeded {
            needed: 1u128 << pool.len(),
            cap: 1u128 << limit,
        });
    }
    let removed: Vec<Coalition> = pool.subsets().filter(|k| !k.is_empty()).collect();
    let coalitions: Vec<Coalition> = removed.iter().map(|&k| full.difference(k)).collect();
    let vals = values.values(&coalitions)?;
    let mut best = Separation {
        coalition: full,
        violation: f64::NEG_INFINITY,
    };
    for (&s, &v) in coalitions.iter().zip(&vals) {
        if v.is_infinite() {
            continue;
        }
        let violation = -v - operator - s.members().map(|l| utilities[l]).sum::<f64>();
        if violation > best.violation {
            best = Separation { coalition: s, violation };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::fixtures::{pair_exchange, four_node};
    use crate::mechanisms::{vcg_with, Clearing};

    #[test]
    fn pay_as_bid_point_is_member() {
        for m in [pair_exchange(), four_node()] {
            let values = CoalitionValues::new(&m);
            let core = CoreDescription::enumerate(&values, SEPARATION_LIMIT).unwrap();
            let (u, u0) = core.pay_as_bid_point();
            let verdict = core_membership(&core, &u, u0);
            assert!(verdict.member, "{verdict:?}");
        }
    }

    #[test]
    fn pair_vcg_blocked_by_empty_coalition() {
        let m = pair_exchange();
        let values = CoalitionValues::new(&m);
        let core = CoreDescription::enumerate(&values, SEPARATION_LIMIT).unwrap();
        assert_eq!(core.rows.len(), 3);
        let v = core_membership(&core, &[2.0, 2.0], -2.0);
        assert!(!v.member);
        assert!((v.worst_violation - 2.0).abs() < 1e-9);
        assert_eq!(v.witness, CoreWitness::Coalition(Coalition::EMPTY));

        let sep = separation_oracle(&values, Coalition::full(2), &[2.0, 2.0], -2.0, SEPARATION_LIMIT).unwrap();
        assert_eq!(sep.coalition, Coalition::EMPTY);
        assert!((sep.violation - 2.0).abs() < 1e-9);
    }

    #[test]
    fn four_node_vcg_is_blocked() {
        let m = four_node();
        let c = Clearing::new(&m).unwrap();
        let o = vcg_with(&c).unwrap();
        let sep = separation_oracle(&c.values, c.winners(), &o.utilities, o.operator_utility, SEPARATION_LIMIT).unwrap();
        assert!(sep.violation > 1.0);
        let core = CoreDescription::enumerate(&c.values, SEPARATION_LIMIT).unwrap();
        assert_eq!(core.rows.len(), 15);
        assert!(!core_membership(&core, &o.utilities, o.operator_utility).member);
    }

    #[test]
    fn pay_as_bid_point_has_no_blocker() {
        let m = four_node();
        let c = Clearing::new(&m).unwrap();
        let sep = separation_oracle(&c.values, c.winners(), &[0.0; 4], -c.objective(), SEPARATION_LIMIT).unwrap();
        assert!(sep.violation <= 1e-9);
    }

    #[test]
    fn separation_respects_limit() {
        let m = four_node();
        let values = CoalitionValues::new(&m);
        let err = separation_oracle(&values, Coalition::full(4), &[0.0; 4], 48.0, 3).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
    }
}
