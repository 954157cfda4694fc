use std::path::Path;

use coremarket::analysis::random::{random_market, rng, RandomMarketSpec, Topology};
use coremarket::analysis::{
    build_ce_prices, check_budget_balance, compare_lmp_vcg, construct_optimal_deviation, incentive_bound,
    replication_identity, supermodularity_check, vcg_operator_sign, verify_ce, CeOptions, PriceFunctionSet,
    DEVIATION_EPSILON, SUPERMODULARITY_LIMIT,
};
use coremarket::dispatch::dispatch;
use coremarket::mechanisms::{self, lmp_applicable, run_mechanisms, Mechanism, MpcsOptions};
use coremarket::{Error, MarketInstance, MarketKind};
use serde_json::{json, Value};

use crate::format::{self, money, Table};
use crate::{emit, Failure, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Core,
    Budget,
    LmpVsVcg,
    Replication,
    VcgSign,
    Supermodularity,
    Incentives,
    Deviation,
    Equilibrium,
    Random,
}

impl Check {
    const ALL: [Check; 10] = [
        Check::Core,
        Check::Budget,
        Check::LmpVsVcg,
        Check::Replication,
        Check::VcgSign,
        Check::Supermodularity,
        Check::Incentives,
        Check::Deviation,
        Check::Equilibrium,
        Check::Random,
    ];

    fn name(self) -> &'static str {
        match self {
            Check::Core => "core",
            Check::Budget => "budget",
            Check::LmpVsVcg => "lmp_vs_vcg",
            Check::Replication => "replication",
            Check::VcgSign => "vcg_sign",
            Check::Supermodularity => "supermodularity",
            Check::Incentives => "incentives",
            Check::Deviation => "deviation",
            Check::Equilibrium => "equilibrium",
            Check::Random => "random",
        }
    }
}

pub struct Checks {
    list: Vec<Check>,
    explicit: bool,
}

pub fn parse_checks(list: &str) -> Result<Checks, Failure> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(Checks {
            list: Check::ALL.to_vec(),
            explicit: false,
        });
    }
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let c = Check::ALL
            .into_iter()
            .find(|c| c.name() == item.replace('-', "_"))
            .ok_or_else(|| Failure::Input(format!("unknown check '{item}'")))?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(Checks {
        list: out,
        explicit: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skipped,
    Error,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
            Status::Error => "error",
        }
    }
}

struct CheckResult {
    check: Check,
    status: Status,
    summary: String,
    details: Value,
}

fn verdict(pass: bool) -> Status {
    if pass {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// Errors that mean the check does not apply to this market.
fn inapplicable(e: &Error) -> bool {
    matches!(
        e,
        Error::UnsupportedStructure(_)
            | Error::DualsUnavailable(_)
            | Error::NonconvexBids(_)
            | Error::MissingTrueCurve(_)
            | Error::CapExceeded { .. }
    )
}

type Outcome = Result<(Status, String, Value), Error>;

fn core_check(inst: &MarketInstance, opts: &MpcsOptions) -> Outcome {
    let mut mechs = vec![Mechanism::PayAsBid, Mechanism::Mpcs, Mechanism::Vcg];
    if lmp_applicable(inst).is_ok() {
        mechs.insert(1, Mechanism::Lmp);
    }
    let r = run_mechanisms(inst, &mechs, opts)?;
    let mut pass = true;
    let mut parts = Vec::new();
    let mut details = Vec::new();
    for e in &r.entries {
        let o = e.outcome.clone()?;
        let v = e
            .core
            .clone()
            .ok_or(Error::CapExceeded { needed: 1u128 << inst.num_bidders(), cap: 1u128 << opts.separation_limit })?;
        if e.mechanism.is_core_selecting() {
            pass &= v.member;
        }
        parts.push(format!("{} {}", e.mechanism, if v.member { "in" } else { "out" }));
        details.push(json!({
            "mechanism": e.mechanism.as_str(),
            "member": v.member,
            "worst_violation": v.worst_violation,
            "operator_utility": o.operator_utility,
        }));
    }
    Ok((verdict(pass), parts.join(", "), Value::Array(details)))
}

fn budget_check(inst: &MarketInstance, opts: &MpcsOptions) -> Outcome {
    let mut mechs = vec![Mechanism::PayAsBid, Mechanism::Mpcs];
    if lmp_applicable(inst).is_ok() {
        mechs.insert(1, Mechanism::Lmp);
    }
    let mut pass = true;
    let mut parts = Vec::new();
    let mut details = Vec::new();
    let mut premise = true;
    for m in mechs {
        let v = check_budget_balance(inst, m, opts)?;
        pass &= v.consistent();
        premise = v.premise_holds;
        parts.push(format!("{m} {}", money(v.operator_utility)));
        details.push(json!({
            "mechanism": m.as_str(),
            "operator_utility": v.operator_utility,
            "balanced": v.balanced,
            "theorem_applies": v.theorem_applies,
        }));
    }
    let scope = if inst.kind != MarketKind::Exchange {
        "not an exchange"
    } else if !premise {
        "premise -J >= 0 fails"
    } else {
        "exchange, premise holds"
    };
    Ok((
        verdict(pass),
        format!("{} ({scope})", parts.join(", ")),
        json!({ "premise_holds": premise, "outcomes": details }),
    ))
}

fn lmp_vs_vcg(inst: &MarketInstance) -> Outcome {
    let rows = compare_lmp_vcg(inst)?;
    let pass = rows.iter().all(|r| r.dominated);
    let worst = rows.iter().map(|r| r.lmp - r.vcg).fold(f64::NEG_INFINITY, f64::max);
    let details = rows
        .iter()
        .map(|r| json!({ "bidder": r.bidder, "lmp": r.lmp, "vcg": r.vcg, "dominated": r.dominated }))
        .collect();
    Ok((verdict(pass), format!("max(p_lmp - p_vcg) = {worst:.3e}"), Value::Array(details)))
}

fn replication(inst: &MarketInstance) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    let mut worst: f64 = 0.0;
    for q in [2, 3] {
        let r = replication_identity(inst, q)?;
        pass &= r.within;
        worst = worst.max(r.gap);
        details.push(json!({ "copies": q, "scaled": r.scaled, "replicated": r.replicated, "gap": r.gap }));
    }
    Ok((verdict(pass), format!("q in {{2, 3}}, largest gap {worst:.3e}"), Value::Array(details)))
}

fn vcg_sign(inst: &MarketInstance) -> Outcome {
    let v = vcg_operator_sign(inst)?;
    Ok((
        verdict(v.nonpositive),
        format!("VCG operator utility {}", money(v.operator_utility)),
        json!({ "operator_utility": v.operator_utility }),
    ))
}

fn supermodularity(inst: &MarketInstance) -> Outcome {
    let v = supermodularity_check(inst, SUPERMODULARITY_LIMIT)?;
    let j = dispatch(inst)?.objective;
    let trades = j.abs() > inst.tol(j);
    // exchanges are supermodular only without trade
    let pass = inst.kind != MarketKind::Exchange || v.supermodular != trades;
    let summary = match v.witness {
        Some((s, r, l)) => format!(
            "not supermodular: S = {}, R = {}, bidder {}",
            format::coalition(inst, s),
            format::coalition(inst, r),
            inst.bidders[l].id
        ),
        None => "supermodular".into(),
    };
    let witness = v.witness.map(|(s, r, l)| {
        json!({
            "s": s.members().map(|k| inst.bidders[k].id.clone()).collect::<Vec<_>>(),
            "r": r.members().map(|k| inst.bidders[k].id.clone()).collect::<Vec<_>>(),
            "bidder": inst.bidders[l].id,
        })
    });
    Ok((verdict(pass), summary, json!({ "supermodular": v.supermodular, "witness": witness })))
}

fn incentives(inst: &MarketInstance, opts: &MpcsOptions) -> Outcome {
    let mut mechs = vec![Mechanism::PayAsBid, Mechanism::Mpcs];
    if lmp_applicable(inst).is_ok() {
        mechs.insert(1, Mechanism::Lmp);
    }
    let mut totals = Vec::new();
    let mut details = Vec::new();
    for m in mechs {
        let mut bounds = Vec::new();
        for l in 0..inst.num_bidders() {
            bounds.push(incentive_bound(inst, l, m, opts)?.bound);
        }
        totals.push((m, bounds.iter().sum::<f64>()));
        details.push(json!({ "mechanism": m.as_str(), "bounds": bounds }));
    }
    let mpcs = totals.iter().find(|t| t.0 == Mechanism::Mpcs).map_or(f64::NAN, |t| t.1);
    let j = dispatch(inst)?.objective;
    let tol = 1e-6 * j.abs().max(1.0);
    let pass = totals.iter().all(|&(_, t)| mpcs <= t + tol);
    let parts: Vec<String> = totals.iter().map(|(m, t)| format!("{m} {}", money(*t))).collect();
    Ok((verdict(pass), format!("total deviation gain: {}", parts.join(", ")), Value::Array(details)))
}

fn deviation(inst: &MarketInstance, opts: &MpcsOptions) -> Outcome {
    let d = dispatch(&inst.truthful())?;
    let mut pass = true;
    let mut details = Vec::new();
    let mut worst: f64 = 0.0;
    for l in 0..inst.num_bidders() {
        if !d.is_allocated(l, 1e-6) {
            continue;
        }
        let r = construct_optimal_deviation(inst, l, Mechanism::Mpcs, DEVIATION_EPSILON, opts)?;
        pass &= r.is_tight(1e-6);
        worst = worst.max(r.gap.abs());
        details.push(json!({
            "bidder": r.bidder,
            "bound": r.bound,
            "achieved_utility": r.achieved_utility,
            "truthful_utility": r.truthful_utility,
            "gap": r.gap,
        }));
    }
    Ok((
        verdict(pass),
        format!("{} winners under mpcs, largest |gap| {worst:.3e}", details.len()),
        Value::Array(details),
    ))
}

fn equilibrium(inst: &MarketInstance, opts: &MpcsOptions) -> Outcome {
    let truthful = inst.truthful();
    let o = mechanisms::run(Mechanism::Mpcs, &truthful, opts)?;
    let psi = build_ce_prices(&truthful, &o.utilities, o.operator_utility)?;
    let ce = CeOptions::default();
    let good = verify_ce(&truthful, &o.allocation, &psi, &ce)?;
    let v = mechanisms::run(Mechanism::Vcg, &truthful, opts)?;
    let bad = verify_ce(&truthful, &v.allocation, &PriceFunctionSet::from_utilities(&truthful, &v.utilities), &ce)?;
    Ok((
        verdict(good.holds() && good.efficient),
        format!(
            "mpcs prices: bidders {}, operator {}; vcg prices: bidders {}, operator {}",
            ok(good.cond_i),
            ok(good.cond_ii),
            ok(bad.cond_i),
            ok(bad.cond_ii)
        ),
        json!({
            "mpcs": { "cond_i": good.cond_i, "cond_ii": good.cond_ii, "efficient": good.efficient,
                      "bidder_gaps": good.bidder_gaps, "operator_gap": good.operator_gap },
            "vcg": { "cond_i": bad.cond_i, "cond_ii": bad.cond_ii,
                     "bidder_gaps": bad.bidder_gaps, "operator_gap": bad.operator_gap },
        }),
    ))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "violated"
    }
}

/// Core membership and budget balance on seeded random markets.
fn random_suite(seed: u64, opts: &MpcsOptions) -> Outcome {
    let specs = [
        RandomMarketSpec::exchange(4),
        RandomMarketSpec::one_sided(4),
        RandomMarketSpec::exchange(5).on(Topology::Congested { nodes: 3 }),
        RandomMarketSpec::exchange(3).on(Topology::Uncongested { nodes: 3 }),
    ];
    let mut r = rng(seed);
    let mut failures = Vec::new();
    let count = 20;
    for k in 0..count {
        let m = random_market(&mut r, &specs[k % specs.len()])
            .ok_or_else(|| Error::InvalidArgument("random generator exhausted".into()))?;
        let mut mechs = vec![Mechanism::PayAsBid, Mechanism::Mpcs];
        if lmp_applicable(&m).is_ok() {
            mechs.push(Mechanism::Lmp);
        }
        let rep = run_mechanisms(&m, &mechs, opts)?;
        for e in &rep.entries {
            let o = e.outcome.clone()?;
            let member = e.core.as_ref().is_some_and(|v| v.member);
            let balanced = m.kind != MarketKind::Exchange || o.operator_utility >= -1e-7 * o.objective.abs().max(1.0);
            if !member || !balanced {
                failures.push(format!("market {k} {}", e.mechanism));
            }
        }
    }
    Ok((
        verdict(failures.is_empty()),
        format!("{count} markets from seed {seed}, {} failures", failures.len()),
        json!({ "seed": seed, "markets": count, "failures": failures }),
    ))
}

fn evaluate(check: Check, inst: &MarketInstance, opts: &MpcsOptions, seed: u64) -> Outcome {
    match check {
        Check::Core => core_check(inst, opts),
        Check::Budget => budget_check(inst, opts),
        Check::LmpVsVcg => lmp_vs_vcg(inst),
        Check::Replication => replication(inst),
        Check::VcgSign => vcg_sign(inst),
        Check::Supermodularity => supermodularity(inst),
        Check::Incentives => incentives(inst, opts),
        Check::Deviation => deviation(inst, opts),
        Check::Equilibrium => equilibrium(inst, opts),
        Check::Random => random_suite(seed, opts),
    }
}

fn results(inst: &MarketInstance, checks: &Checks, opts: &MpcsOptions, seed: u64) -> Vec<CheckResult> {
    checks
        .list
        .iter()
        .map(|&check| match evaluate(check, inst, opts, seed) {
            Ok((status, summary, details)) => CheckResult {
                check,
                status,
                summary,
                details,
            },
            Err(e) => CheckResult {
                check,
                status: if !checks.explicit && inapplicable(&e) {
                    Status::Skipped
                } else {
                    Status::Error
                },
                summary: e.to_string(),
                details: Value::Null,
            },
        })
        .collect()
}

pub fn run(
    inst: &MarketInstance,
    checks: &Checks,
    opts: &MpcsOptions,
    seed: u64,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    if dispatch(inst).map_err(Failure::from_clearing)?.objective.is_infinite() {
        return Err(Failure::Infeasible("dispatch is infeasible".into()));
    }
    let rs = results(inst, checks, opts, seed);
    let text = match format {
        Format::Table => {
            let mut t = Table::new(["check", "status", "summary"]).text_columns(3);
            for r in &rs {
                t.row([r.check.name(), r.status.as_str(), r.summary.as_str()]);
            }
            t.render()
        }
        Format::Json => {
            let checks: Vec<Value> = rs
                .iter()
                .map(|r| json!({ "check": r.check.name(), "status": r.status.as_str(), "summary": r.summary, "details": r.details }))
                .collect();
            format!("{:#}\n", json!({ "market": inst.name, "seed": seed, "checks": checks }))
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Failure::Io(e.to_string());
            w.write_record(["check", "status", "summary"]).map_err(io)?;
            for r in &rs {
                w.write_record([r.check.name(), r.status.as_str(), r.summary.as_str()])
                    .map_err(io)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Failure::Io(e.to_string()))?)
                .map_err(|e| Failure::Io(e.to_string()))?
        }
    };
    emit(out, &text)?;
    let bad: Vec<&str> = rs
        .iter()
        .filter(|r| matches!(r.status, Status::Fail | Status::Error))
        .map(|r| r.check.name())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Analysis(format!("checks not passed: {}", bad.join(", "))))
    }
}
