use std::path::Path;

use coremarket::mechanisms::{
    lmp_applicable, run_mechanisms, CoreWitness, Mechanism, MechanismReport, MpcsOptions,
};
use coremarket::MarketInstance;
use serde_json::{json, Value};

use crate::format::{self, money, quantity, Table};
use crate::{emit, Failure, Format, Selection};

pub struct Cleared {
    pub report: MechanismReport,
    /// Rules left out of an `all` run, with the reason.
    pub skipped: Vec<(Mechanism, String)>,
}

impl Cleared {
    /// First rule error, if any.
    pub fn failure(&self) -> Option<Failure> {
        self.report
            .errors()
            .next()
            .map(|(m, e)| Failure::Mechanism(format!("{m}: {e}")))
    }
}

pub fn clear(inst: &MarketInstance, selection: &Selection, opts: &MpcsOptions) -> Result<Cleared, Failure> {
    let mut mechanisms = Vec::new();
    let mut skipped = Vec::new();
    for &m in &selection.mechanisms {
        if m == Mechanism::Lmp && !selection.explicit {
            if let Err(e) = lmp_applicable(inst) {
                skipped.push((m, e.to_string()));
                continue;
            }
        }
        mechanisms.push(m);
    }
    let report = run_mechanisms(inst, &mechanisms, opts).map_err(Failure::from_clearing)?;
    Ok(Cleared { report, skipped })
}

fn witness(inst: &MarketInstance, w: CoreWitness) -> String {
    match w {
        CoreWitness::Equality => "equality".into(),
        CoreWitness::Nonnegativity(l) => format!("u[{}] >= 0", inst.bidders[l].id),
        CoreWitness::Coalition(s) => format!("coalition {}", format::coalition(inst, s)),
    }
}

pub fn to_json(inst: &MarketInstance, c: &Cleared) -> Value {
    let r = &c.report;
    let bidders: Vec<Value> = inst
        .bidders
        .iter()
        .zip(&r.dispatch.allocation)
        .map(|(b, x)| json!({ "id": b.id, "node": b.node, "allocation": x }))
        .collect();
    let mechanisms: Vec<Value> = r
        .entries
        .iter()
        .map(|e| match &e.outcome {
            Ok(o) => json!({
                "mechanism": e.mechanism.as_str(),
                "payments": o.payments,
                "bid_costs": o.bid_costs,
                "utilities": o.utilities,
                "operator_utility": o.operator_utility,
                "prices": o.prices,
                "degenerate": o.degenerate,
                "core": e.core.as_ref().map(|v| json!({
                    "member": v.member,
                    "worst_violation": v.worst_violation,
                    "witness": witness(inst, v.witness),
                })),
            }),
            Err(err) => json!({ "mechanism": e.mechanism.as_str(), "error": err.to_string() }),
        })
        .collect();
    let skipped: Vec<Value> = c
        .skipped
        .iter()
        .map(|(m, why)| json!({ "mechanism": m.as_str(), "reason": why }))
        .collect();
    json!({
        "market": inst.name,
        "kind": inst.kind.as_str(),
        "currency": inst.currency,
        "objective": r.dispatch.objective,
        "degenerate": r.dispatch.degenerate,
        "nodal_prices": r.dispatch.nodal_prices,
        "bidders": bidders,
        "mechanisms": mechanisms,
        "skipped": skipped,
        "coalition_solves": r.coalition_solves,
        "constraint_generation": r.generation.as_ref().map(|g| json!({
            "mode": g.mode.as_str(),
            "epsilon": g.epsilon,
            "initial_rows": g.initial_rows,
            "rows_added": g.rows_added(),
            "violations": g.steps.iter().map(|s| s.violation).collect::<Vec<_>>(),
        })),
    })
}

fn to_table(inst: &MarketInstance, c: &Cleared) -> String {
    let r = &c.report;
    let mut out = format!(
        "market {} ({}, {} bidders), J = {} {}\n\n",
        if inst.name.is_empty() { "-" } else { &inst.name },
        inst.kind.as_str(),
        inst.num_bidders(),
        money(r.dispatch.objective),
        inst.currency
    );
    let mut t = Table::new(["bidder", "node", "quantity", "bid cost"]).text_columns(2);
    for (l, b) in inst.bidders.iter().enumerate() {
        let x = &r.dispatch.allocation[l];
        t.row([
            b.id.clone(),
            b.node.clone().unwrap_or_else(|| "-".into()),
            x.iter().map(|v| quantity(*v)).collect::<Vec<_>>().join(" "),
            money(inst.bid_cost(l, x).unwrap_or(f64::NAN)),
        ]);
    }
    out.push_str(&t.render());

    let ok: Vec<_> = r
        .entries
        .iter()
        .filter_map(|e| e.outcome.as_ref().ok().map(|o| (e, o)))
        .collect();
    if !ok.is_empty() {
        out.push('\n');
        let mut t = Table::new(std::iter::once("payment".to_string()).chain(ok.iter().map(|(e, _)| e.mechanism.to_string())));
        for (l, b) in inst.bidders.iter().enumerate() {
            t.row(std::iter::once(b.id.clone()).chain(ok.iter().map(|(_, o)| money(o.payments[l]))));
        }
        t.row(std::iter::once("budget".to_string()).chain(ok.iter().map(|(_, o)| money(o.operator_utility))));
        t.row(std::iter::once("core".to_string()).chain(ok.iter().map(|(e, _)| match &e.core {
            Some(v) if v.member => "yes".to_string(),
            Some(_) => "no".to_string(),
            None => "-".to_string(),
        })));
        out.push_str(&t.render());
    }
    for e in &r.entries {
        if let Some(v) = e.core.as_ref().filter(|v| !v.member) {
            out.push_str(&format!(
                "{}: blocked by {} (violation {})\n",
                e.mechanism,
                witness(inst, v.witness),
                money(v.worst_violation)
            ));
        }
        if let Err(err) = &e.outcome {
            out.push_str(&format!("{}: error: {err}\n", e.mechanism));
        }
    }
    for (m, why) in &c.skipped {
        out.push_str(&format!("{m}: skipped ({why})\n"));
    }
    out
}

fn to_csv(inst: &MarketInstance, c: &Cleared) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(["mechanism", "bidder", "quantity", "bid_cost", "payment", "utility"])
        .map_err(io)?;
    for e in &c.report.entries {
        let Ok(o) = &e.outcome else { continue };
        for (l, b) in inst.bidders.iter().enumerate() {
            w.write_record([
                e.mechanism.as_str().to_string(),
                b.id.clone(),
                o.allocation[l].iter().sum::<f64>().to_string(),
                o.bid_costs[l].to_string(),
                o.payments[l].to_string(),
                o.utilities[l].to_string(),
            ])
            .map_err(io)?;
        }
        w.write_record([e.mechanism.as_str(), "operator", "", "", "", &o.operator_utility.to_string()])
            .map_err(io)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Failure::Io(e.to_string()))?).map_err(|e| Failure::Io(e.to_string()))
}

pub fn run(
    inst: &MarketInstance,
    selection: &Selection,
    opts: &MpcsOptions,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let cleared = clear(inst, selection, opts)?;
    let text = match format {
        Format::Table => to_table(inst, &cleared),
        Format::Json => format!("{:#}\n", to_json(inst, &cleared)),
        Format::Csv => to_csv(inst, &cleared)?,
    };
    emit(out, &text)?;
    match cleared.failure() {
        Some(f) => Err(f),
        None => Ok(()),
    }
}
