mod common;

use proptest::prelude::*;
use rand::Rng;

use coremarket::analysis::random::{rng, random_misreport, seeded_market, RandomMarketSpec, Topology};
use coremarket::analysis::{build_ce_prices, verify_ce, CeOptions};
use coremarket::dispatch::{dispatch, dispatch_coalition, Coalition, CoalitionValues};
use coremarket::market::{emit_market, parse_market, BidCurve, MarketInstance, Offer, QuadraticTerm};
use coremarket::mechanisms::{
    core_membership, lmp_applicable, mpcs_with, run_with, vcg, Clearing, CoreDescription, CoreMode, Mechanism,
    MpcsOptions, SEPARATION_LIMIT,
};

fn spec_for(seed: u64, n: usize) -> RandomMarketSpec {
    match seed % 5 {
        0 => RandomMarketSpec::exchange(n),
        1 => RandomMarketSpec::one_sided(n),
        2 => RandomMarketSpec::exchange(n).on(Topology::Uncongested { nodes: 3 }),
        3 => RandomMarketSpec::exchange(n).on(Topology::Congested { nodes: 3 }),
        _ => RandomMarketSpec::one_sided(n).on(Topology::Congested { nodes: 4 }),
    }
}

fn market(seed: u64, n: usize) -> MarketInstance {
    seeded_market(seed, &spec_for(seed, n))
}

fn quadratic() -> impl Strategy<Value = BidCurve> {
    prop::collection::vec((0.0..5.0f64, -20.0..20.0f64, -10.0..0.0f64, 0.0..10.0f64), 1..3).prop_map(|t| {
        BidCurve::Quadratic(
            t.into_iter()
                .map(|(a, b, lower, upper)| QuadraticTerm { a, b, lower, upper })
                .collect(),
        )
    })
}

fn piecewise() -> impl Strategy<Value = BidCurve> {
    prop::collection::vec((0.1..5.0f64, -5.0..20.0f64), 1..6).prop_map(|segs| {
        let mut slopes: Vec<f64> = segs.iter().map(|s| s.1).collect();
        slopes.sort_by(f64::total_cmp);
        let mut bp = vec![(0.0, 0.0)];
        for (len, slope) in segs.iter().map(|s| s.0).zip(slopes) {
            let (q, c) = *bp.last().unwrap();
            bp.push((q + len, c + slope * len));
        }
        BidCurve::piecewise_linear(bp).unwrap()
    })
}

fn discrete() -> impl Strategy<Value = BidCurve> {
    prop::collection::vec((0.1..50.0f64, 0.0..500.0f64), 1..4).prop_map(|o| {
        BidCurve::discrete(
            o.into_iter()
                .map(|(q, p)| Offer {
                    quantity: vec![q],
                    price: p,
                })
                .collect(),
        )
        .unwrap()
    })
}

fn any_curve() -> impl Strategy<Value = BidCurve> {
    let base = prop_oneof![quadratic(), piecewise(), discrete()];
    prop_oneof![
        base.clone(),
        (base, 0.0..100.0f64).prop_map(|(b, c)| BidCurve::fixed_charge(b, c)),
    ]
}

/// A point of the curve's admissible set chosen by `t ∈ [0, 1]`.
fn admissible(curve: &BidCurve, t: f64) -> Vec<f64> {
    match curve {
        BidCurve::DiscreteOffers(offers) => {
            let k = ((t * offers.len() as f64) as usize).min(offers.len() - 1);
            offers[k].quantity.clone()
        }
        BidCurve::FixedCharge { base, .. } => admissible(base, t),
        _ => curve
            .lower_bounds()
            .into_iter()
            .zip(curve.upper_bounds())
            .map(|(lo, hi)| lo + t * (hi - lo))
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn curves_vanish_at_zero_and_are_finite(curve in any_curve(), ts in prop::collection::vec(0.0..=1.0f64, 100)) {
        prop_assert_eq!(curve.evaluate(&vec![0.0; curve.dim()]).unwrap(), 0.0);
        for t in ts {
            let x = admissible(&curve, t);
            prop_assert!(curve.evaluate(&x).unwrap().is_finite());
        }
    }

    #[test]
    fn piecewise_matches_max_affine(curve in piecewise()) {
        let BidCurve::PiecewiseLinear(bp) = &curve else { unreachable!() };
        let mut points: Vec<f64> = bp.iter().map(|p| p.0).collect();
        points.extend(bp.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)));
        for q in points {
            let direct = curve.evaluate(&[q]).unwrap();
            let support = curve.max_affine_support(q).unwrap();
            prop_assert!((direct - support).abs() <= 1e-9 * direct.abs().max(1.0), "{q}: {direct} vs {support}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parse_emit_parse_is_stable(seed in 0u64..10_000, n in 2usize..6) {
        let m = market(seed, n);
        let first = emit_market(&m).unwrap();
        let parsed = parse_market(first.as_bytes()).unwrap().instance;
        prop_assert_eq!(&parsed, &m);
        prop_assert_eq!(emit_market(&parsed).unwrap(), first);
    }

    #[test]
    fn coalition_values_are_monotone(seed in 0u64..10_000, n in 2usize..7) {
        let m = market(seed, n);
        let values = CoalitionValues::new(&m);
        let all: Vec<Coalition> = Coalition::full(n).subsets().collect();
        let j = values.values(&all).unwrap();
        for &r in &all {
            for s in r.subsets() {
                let (jr, js) = (j[r.bits() as usize], j[s.bits() as usize]);
                prop_assert!(jr <= js + 1e-7, "J({r:?}) = {jr} > J({s:?}) = {js}");
            }
        }
    }

    #[test]
    fn dispatch_is_deterministic(seed in 0u64..10_000, n in 2usize..6) {
        let m = market(seed, n);
        let a = dispatch(&m).unwrap();
        let b = dispatch(&m).unwrap();
        let bits = |r: &coremarket::dispatch::DispatchResult| -> Vec<u64> {
            r.allocation.iter().flatten().map(|v| v.to_bits()).collect()
        };
        prop_assert_eq!(bits(&a), bits(&b));
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn envelope_matches_prices(seed in 0u64..10_000, n in 2usize..5) {
        let m = market(seed, n);
        let base = dispatch(&m).unwrap();
        prop_assume!(!base.degenerate);
        let delta = 1e-4;
        let shifted = |k: usize, d: f64| -> f64 {
            let mut p = m.clone();
            match &mut p.network {
                Some(net) => {
                    let node = net.nodes[k].clone();
                    *net.demand.entry(node).or_insert(0.0) += d;
                }
                None => p.constraints[k].rhs += d,
            }
            dispatch(&p).unwrap().objective
        };
        let prices = match &m.network {
            Some(_) => base.nodal_prices.clone().unwrap(),
            None => base.constraint_prices.clone().unwrap(),
        };
        for (k, &pi) in prices.iter().enumerate() {
            let (up, down) = (shifted(k, delta), shifted(k, -delta));
            prop_assume!(up.is_finite() && down.is_finite());
            let change = 0.5 * (up - down);
            let tol = 1e-6 * base.objective.abs().max(1.0);
            prop_assert!((change - pi * delta).abs() <= tol, "row {k}: ΔJ {change} vs π·δ {}", pi * delta);
        }
    }

    #[test]
    fn vcg_is_dominant_strategy(seed in 0u64..10_000, n in 2usize..6) {
        let m = market(seed, n);
        let honest = vcg(&m).unwrap();
        let mut r = rng(seed ^ 0x5eed);
        for _ in 0..10 {
            let l = r.gen_range(0..n);
            let truth = m.bidders[l].truth().clone();
            let u_true = honest.payments[l] - truth.evaluate(&honest.allocation[l]).unwrap();
            let Ok(o) = vcg(&m.with_bid(l, random_misreport(&mut r, &truth))) else { continue };
            let u_dev = o.payments[l] - truth.evaluate(&o.allocation[l]).unwrap();
            prop_assert!(u_dev <= u_true + 1e-7, "bidder {l}: {u_dev} > {u_true}");
        }
    }

    #[test]
    fn core_selecting_outcomes_are_members_below_vcg(seed in 0u64..10_000, n in 2usize..7) {
        let m = market(seed, n);
        let c = Clearing::new(&m).unwrap();
        let core = CoreDescription::enumerate(&c.values, SEPARATION_LIMIT).unwrap();
        let vcg_u = c.vcg_utilities().unwrap();
        let mut mechs = vec![Mechanism::PayAsBid, Mechanism::Mpcs];
        if lmp_applicable(&m).is_ok() {
            mechs.push(Mechanism::Lmp);
        }
        for mech in mechs {
            let o = run_with(mech, &c, &MpcsOptions::default()).unwrap();
            let v = core_membership(&core, &o.utilities, o.operator_utility);
            prop_assert!(v.member && v.worst_violation <= 1e-6, "{mech:?}: {v:?}");
            for (u, uv) in o.utilities.iter().zip(&vcg_u) {
                prop_assert!(*u <= uv + 1e-7);
            }
        }
    }

    #[test]
    fn generate_and_enumerate_agree(seed in 0u64..10_000, n in 2usize..9) {
        let m = seeded_market(seed, &RandomMarketSpec::exchange(n));
        let c = Clearing::new(&m).unwrap();
        let gen = mpcs_with(&c, &MpcsOptions::default()).unwrap().outcome;
        let en = mpcs_with(&c, &MpcsOptions { mode: CoreMode::Enumerate, ..Default::default() }).unwrap().outcome;
        for (a, b) in gen.utilities.iter().zip(&en.utilities) {
            prop_assert!((a - b).abs() <= 1e-6, "{:?} vs {:?}", gen.utilities, en.utilities);
        }
    }

    #[test]
    fn core_prices_form_an_efficient_equilibrium(seed in 0u64..10_000, n in 2usize..5) {
        let m = market(seed, n);
        let c = Clearing::new(&m).unwrap();
        let o = mpcs_with(&c, &MpcsOptions::default()).unwrap().outcome;
        let psi = build_ce_prices(&m, &o.utilities, o.operator_utility).unwrap();
        let v = verify_ce(&m, &o.allocation, &psi, &CeOptions::default()).unwrap();
        prop_assert!(v.holds() && v.efficient, "{v:?}");
        // the utilities of a verified equilibrium lie in the core
        let core = CoreDescription::enumerate(&c.values, SEPARATION_LIMIT).unwrap();
        prop_assert!(core_membership(&core, &o.utilities, o.operator_utility).member);
    }
}

/// Minimizes over `x_1 … x_{n−1}` on a grid, `x_n` closing the balance
/// row; coarse pass at `10 · step`, then a local pass at `step`. Grids
/// are aligned to multiples of the step and include the domain bounds.
fn grid_objective(m: &MarketInstance, step: f64) -> f64 {
    let curves: Vec<&BidCurve> = m.bidders.iter().map(|b| &b.curve).collect();
    let rhs = m.constraints[0].rhs;
    let n = curves.len();
    let eval = |x: &[f64]| -> f64 {
        let last = rhs - x.iter().sum::<f64>();
        let tail = curves[n - 1].evaluate(&[last]).unwrap_or(f64::INFINITY);
        x.iter()
            .zip(&curves)
            .map(|(&v, c)| c.evaluate(&[v]).unwrap_or(f64::INFINITY))
            .sum::<f64>()
            + tail
    };
    // multiples of h inside [lo, hi], plus both endpoints
    let axis = |lo: f64, hi: f64, h: f64| -> Vec<f64> {
        let mut pts = vec![lo];
        let mut k = (lo / h).floor() as i64 + 1;
        while (k as f64) * h < hi {
            pts.push(k as f64 * h);
            k += 1;
        }
        pts.push(hi);
        pts
    };
    let search = |lo: &[f64], hi: &[f64], h: f64| -> (f64, Vec<f64>) {
        let axes: Vec<Vec<f64>> = lo.iter().zip(hi).map(|(&l, &u)| axis(l, u, h)).collect();
        let mut idx = vec![0usize; lo.len()];
        let mut best = (f64::INFINITY, lo.to_vec());
        loop {
            let x: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
            let v = eval(&x);
            if v < best.0 {
                best = (v, x);
            }
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                return best;
            }
        }
    };
    let lo: Vec<f64> = curves[..n - 1].iter().map(|c| c.lower_bounds()[0]).collect();
    let hi: Vec<f64> = curves[..n - 1].iter().map(|c| c.upper_bounds()[0]).collect();
    let (_, x) = search(&lo, &hi, 10.0 * step);
    let lo2: Vec<f64> = x.iter().zip(&lo).map(|(v, l)| (v - 100.0 * step).max(*l)).collect();
    let hi2: Vec<f64> = x.iter().zip(&hi).map(|(v, h)| (v + 100.0 * step).min(*h)).collect();
    search(&lo2, &hi2, step).0
}

#[test]
fn solver_matches_grid_search() {
    for seed in 0..12u64 {
        let n = 2 + (seed % 2) as usize;
        let spec = if seed % 3 == 0 { RandomMarketSpec::one_sided(n) } else { RandomMarketSpec::exchange(n) };
        let m = seeded_market(seed, &spec);
        let j = dispatch(&m).unwrap().objective;
        let g = grid_objective(&m, 1e-3);
        assert!(j <= g + 1e-9, "seed {seed}: solver {j} above grid {g}");
        assert!(g - j <= 1e-2, "seed {seed}: solver {j}, grid {g}");
    }
}

#[test]
fn generation_uses_no_more_rows_than_enumeration() {
    let m = common::four_node();
    let c = Clearing::new(&m).unwrap();
    let log = mpcs_with(&c, &MpcsOptions::default()).unwrap().log;
    let core = CoreDescription::enumerate(&c.values, SEPARATION_LIMIT).unwrap();
    assert!(log.rows.len() <= core.rows.len(), "{} > {}", log.rows.len(), core.rows.len());
}

#[test]
fn coalition_table_matches_direct_solves() {
    let m = market(3, 5);
    let values = CoalitionValues::new(&m);
    for s in Coalition::full(5).subsets() {
        let direct = dispatch_coalition(&m, s).unwrap().objective;
        assert_eq!(values.value(s).unwrap().to_bits(), direct.to_bits());
    }
}
