#![allow(dead_code)]

use std::path::PathBuf;

use coremarket::market::{
    BidCurve, Bidder, LinearConstraint, Line, MarketInstance, MarketKind, Network, Offer, Sense,
};

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Four-bus exchange: three generators and one load.
pub fn four_node() -> MarketInstance {
    let mut net = Network::new(["1", "2", "3", "4"].iter().map(|s| s.to_string()).collect(), "3");
    net.lines = vec![
        Line::new("3", "1", 1.0, 2.0),
        Line::new("3", "2", 1.0, 2.0),
        Line::new("1", "4", 1.0, 10.0),
        Line::new("2", "4", 1.0, 10.0),
    ];
    let bidders = [
        ("G1", "1", 5.0, 4.0, 0.0, f64::INFINITY),
        ("G2", "2", 4.0, 5.0, 0.0, f64::INFINITY),
        ("G3", "3", 1.0, 1.0, 0.0, f64::INFINITY),
        ("D4", "4", 1.0, 20.0, -8.0, 0.0),
    ]
    .into_iter()
    .map(|(id, node, a, b, lo, hi)| {
        let c = BidCurve::quadratic(a, b, lo, hi);
        Bidder::new(id, c.clone()).at(node).with_true_curve(c)
    })
    .collect();
    MarketInstance::new("four-node", MarketKind::Exchange, bidders).with_network(net)
}

/// One seller, one buyer, a single balance row; degenerate optimum.
pub fn pair_exchange() -> MarketInstance {
    let s = BidCurve::quadratic(0.0, 1.0, 0.0, 1.0);
    let d = BidCurve::quadratic(0.0, 3.0, -1.0, 0.0);
    MarketInstance::new(
        "pair",
        MarketKind::Exchange,
        vec![
            Bidder::new("1", s.clone()).with_true_curve(s),
            Bidder::new("2", d.clone()).with_true_curve(d),
        ],
    )
    .with_constraint(LinearConstraint::new("balance", [("1", 1.0), ("2", 1.0)], Sense::Eq, 0.0))
}

/// Reserve procurement from exclusive (size, price) offers.
pub fn reserve() -> MarketInstance {
    let offers: [(&str, &[(f64, f64)]); 5] = [
        ("R1", &[(20.0, 300.0), (40.0, 560.0)]),
        ("R2", &[(30.0, 420.0), (50.0, 800.0)]),
        ("R3", &[(25.0, 310.0)]),
        ("R4", &[(10.0, 180.0), (35.0, 520.0), (60.0, 950.0)]),
        ("R5", &[(45.0, 700.0)]),
    ];
    let bidders: Vec<Bidder> = offers
        .iter()
        .map(|(id, list)| {
            let c = BidCurve::discrete(
                list.iter()
                    .map(|&(q, p)| Offer {
                        quantity: vec![q],
                        price: p,
                    })
                    .collect(),
            )
            .unwrap();
            Bidder::new(*id, c.clone()).with_true_curve(c)
        })
        .collect();
    let ids: Vec<String> = bidders.iter().map(|b| b.id.clone()).collect();
    MarketInstance::new("reserve", MarketKind::OneSided, bidders).with_constraint(LinearConstraint::new(
        "requirement",
        ids.iter().map(|s| (s.as_str(), 1.0)),
        Sense::Ge,
        100.0,
    ))
}

pub const CORPUS_SEEDS: [u64; 4] = [1, 2, 3, 4];

pub fn corpus_spec(seed: u64) -> coremarket::analysis::random::RandomMarketSpec {
    use coremarket::analysis::random::{RandomMarketSpec, Topology};
    match seed % 4 {
        1 => RandomMarketSpec::exchange(4),
        2 => RandomMarketSpec::one_sided(4),
        3 => RandomMarketSpec::exchange(4).on(Topology::Uncongested { nodes: 3 }),
        _ => RandomMarketSpec::one_sided(5).on(Topology::Congested { nodes: 4 }),
    }
}

/// Every bundled scenario as `(file name, instance)`.
pub fn bundled() -> Vec<(String, MarketInstance)> {
    let mut out = vec![
        ("fig3.market".to_string(), four_node()),
        ("appendixF.market".to_string(), pair_exchange()),
        ("reserve.market".to_string(), reserve()),
    ];
    for seed in CORPUS_SEEDS {
        out.push((
            format!("random-{seed}.market"),
            coremarket::analysis::random::seeded_market(seed, &corpus_spec(seed)),
        ));
    }
    out
}
