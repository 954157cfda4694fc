//! Seeded random markets for property runs.
//!
//! Bids are quadratic `a x² + b x` with `a ∈ [0.1, 5]`, `b ∈ [0, 20]` and box
//! domains inside `[−10, 10]`. Every generated bidder bids truthfully.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market::{
    validate_instance, BidCurve, Bidder, LinearConstraint, Line, MarketInstance, MarketKind, Network, Sense,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    /// A single balance row.
    SingleNode,
    /// DC network with no line limits.
    Uncongested { nodes: usize },
    /// DC network with line limits drawn from `[1, 5]`.
    Congested { nodes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomMarketSpec {
    pub bidders: usize,
    pub kind: MarketKind,
    pub topology: Topology,
}

impl RandomMarketSpec {
    pub fn exchange(bidders: usize) -> Self {
        Self {
            bidders,
            kind: MarketKind::Exchange,
            topology: Topology::SingleNode,
        }
    }

    pub fn one_sided(bidders: usize) -> Self {
        Self {
            bidders,
            kind: MarketKind::OneSided,
            topology: Topology::SingleNode,
        }
    }

    pub fn on(mut self, topology: Topology) -> Self {
        self.topology = topology;
        self
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn draw_curve<R: Rng>(rng: &mut R, kind: MarketKind) -> BidCurve {
    let a = rng.gen_range(0.1..=5.0);
    let b = rng.gen_range(0.0..=20.0);
    let (lo, hi) = match (kind, rng.gen_range(0..3)) {
        (MarketKind::OneSided, _) | (_, 0) => (0.0, rng.gen_range(1.0..=10.0)),
        (_, 1) => (-rng.gen_range(1.0..=10.0), 0.0),
        _ => (-rng.gen_range(1.0..=10.0), rng.gen_range(1.0..=10.0)),
    };
    BidCurve::quadratic(a, b, lo, hi)
}

fn draw_network<R: Rng>(rng: &mut R, nodes: usize, congested: bool) -> Network {
    let names: Vec<String> = (1..=nodes).map(|i| format!("n{i}")).collect();
    let mut net = Network::new(names.clone(), names[0].clone());
    let limit = |rng: &mut R| if congested { rng.gen_range(1.0..=5.0) } else { f64::INFINITY };
    for i in 1..nodes {
        let j = rng.gen_range(0..i);
        let l = limit(rng);
        net.lines.push(Line::new(names[j].clone(), names[i].clone(), rng.gen_range(0.5..=2.0), l));
    }
    if nodes > 2 {
        let (i, j) = (rng.gen_range(0..nodes), rng.gen_range(0..nodes));
        if i != j {
            let l = limit(rng);
            net.lines.push(Line::new(names[i].clone(), names[j].clone(), rng.gen_range(0.5..=2.0), l));
        }
    }
    net
}

fn draw_once<R: Rng>(rng: &mut R, spec: &RandomMarketSpec, name: &str) -> MarketInstance {
    let mut bidders: Vec<Bidder> = (0..spec.bidders)
        .map(|l| {
            let c = draw_curve(rng, spec.kind);
            Bidder::new(format!("b{}", l + 1), c.clone()).with_true_curve(c)
        })
        .collect();
    // one-sided demand leaves room for any single seller to drop out
    let capacities: Vec<f64> = bidders.iter().map(|b| b.curve.upper_bounds()[0]).collect();
    let spare = capacities.iter().sum::<f64>() - capacities.iter().cloned().fold(0.0, f64::max);
    let demand = rng.gen_range(0.2..=0.8) * spare;

    let mut inst = match spec.topology {
        Topology::SingleNode => {
            let ids: Vec<String> = bidders.iter().map(|b| b.id.clone()).collect();
            let rhs = if spec.kind == MarketKind::OneSided { demand } else { 0.0 };
            MarketInstance::new(name, spec.kind, bidders).with_constraint(LinearConstraint::new(
                "balance",
                ids.iter().map(|id| (id.as_str(), 1.0)),
                Sense::Eq,
                rhs,
            ))
        }
        Topology::Uncongested { nodes } | Topology::Congested { nodes } => {
            let congested = matches!(spec.topology, Topology::Congested { .. });
            let mut net = draw_network(rng, nodes.max(1), congested);
            for b in &mut bidders {
                b.node = Some(net.nodes[rng.gen_range(0..net.nodes.len())].clone());
            }
            if spec.kind == MarketKind::OneSided {
                let at = net.nodes[rng.gen_range(0..net.nodes.len())].clone();
                net.demand.insert(at, demand);
            }
            MarketInstance::new(name, spec.kind, bidders).with_network(net)
        }
    };
    inst.name = name.to_string();
    inst
}

/// Draws until the instance validates (feasible, with every single-bidder
/// removal feasible). Returns `None` after 1000 attempts.
pub fn random_market<R: Rng>(rng: &mut R, spec: &RandomMarketSpec) -> Option<MarketInstance> {
    (0..1000).find_map(|k| {
        let m = draw_once(rng, spec, &format!("random-{k}"));
        validate_instance(&m).is_ok().then_some(m)
    })
}

/// [`random_market`] from a fixed seed.
pub fn seeded_market(seed: u64, spec: &RandomMarketSpec) -> MarketInstance {
    let mut r = rng(seed);
    let mut m = random_market(&mut r, spec).expect("generator produces a valid market");
    m.name = format!("random-{seed}");
    m
}

/// A misreport `k · c(x) + s · Σx` with `k ∈ [0.5, 2]`, `s ∈ [−5, 5]`.
pub fn random_misreport<R: Rng>(rng: &mut R, curve: &BidCurve) -> BidCurve {
    curve.distorted(rng.gen_range(0.5..=2.0), rng.gen_range(-5.0..=5.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_markets_are_reproducible_and_valid() {
        for spec in [
            RandomMarketSpec::exchange(4),
            RandomMarketSpec::one_sided(3),
            RandomMarketSpec::exchange(3).on(Topology::Uncongested { nodes: 3 }),
            RandomMarketSpec::one_sided(4).on(Topology::Congested { nodes: 4 }),
        ] {
            let a = seeded_market(7, &spec);
            assert_eq!(a, seeded_market(7, &spec));
            assert!(validate_instance(&a).is_ok());
            assert_eq!(a.num_bidders(), spec.bidders);
            for b in &a.bidders {
                let BidCurve::Quadratic(t) = &b.curve else { panic!() };
                assert!((0.1..=5.0).contains(&t[0].a) && (0.0..=20.0).contains(&t[0].b));
                assert!(t[0].lower >= -10.0 && t[0].upper <= 10.0);
            }
        }
    }
}
