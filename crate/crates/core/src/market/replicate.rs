//! Replicated markets: every bidder present `q` times.

use crate::error::{Error, Result};
use crate::market::{Bidder, LinearConstraint, MarketInstance, Sense};

/// Name of copy `k` of a bidder; copy 0 keeps the original id.
pub fn copy_id(id: &str, k: usize) -> String {
    if k == 0 {
        id.to_string()
    } else {
        format!("{id}#{k}")
    }
}

/// Returns the market in which each bidder appears `q` times with the same
/// bid. Demands and balance right-hand sides scale by `q`.
///
/// Only markets balanced by a single equality row (or a network without
/// line limits and nothing else) are supported.
pub fn replicate_instance(instance: &MarketInstance, q: usize) -> Result<MarketInstance> {
    if q == 0 {
        return Err(Error::InvalidArgument("replication factor must be positive".into()));
    }
    if instance.recourse.is_some() {
        return Err(Error::UnsupportedStructure("replication with a recourse block".into()));
    }
    match &instance.network {
        Some(net) => {
            if net.has_limits() {
                return Err(Error::UnsupportedStructure("replication with line limits".into()));
            }
            if !instance.constraints.is_empty() {
                return Err(Error::UnsupportedStructure(
                    "replication with side constraints on a network".into(),
                ));
            }
        }
        None => {
            if instance.constraints.len() != 1 || instance.constraints[0].sense != Sense::Eq {
                return Err(Error::UnsupportedStructure(
                    "replication needs exactly one balance equality".into(),
                ));
            }
        }
    }

    let mut bidders = Vec::with_capacity(instance.num_bidders() * q);
    for k in 0..q {
        for b in &instance.bidders {
            bidders.push(Bidder {
                id: copy_id(&b.id, k),
                ..b.clone()
            });
        }
    }
    let mut out = MarketInstance {
        bidders,
        ..instance.clone()
    };
    let scale = q as f64;
    if let Some(net) = &mut out.network {
        for d in net.demand.values_mut() {
            *d *= scale;
        }
    }
    out.constraints = instance
        .constraints
        .iter()
        .map(|c| {
            let mut terms = std::collections::BTreeMap::new();
            for (name, &coef) in &c.terms {
                let (l, j) = instance.resolve_quantity(name).ok_or_else(|| Error::UnknownReference {
                    kind: "quantity variable",
                    name: name.clone(),
                })?;
                for k in 0..q {
                    let copy = instance.num_bidders() * k + l;
                    terms.insert(out.variable_name(copy, j), coef);
                }
            }
            Ok(LinearConstraint {
                name: c.name.clone(),
                terms,
                sense: c.sense,
                rhs: c.rhs * scale,
            })
        })
        .collect::<Result<_>>()?;
    Ok(out)
}
