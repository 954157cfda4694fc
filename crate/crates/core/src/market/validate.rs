//! Structural and feasibility checks on market instances.

use std::collections::BTreeSet;
use std::fmt;

use crate::dispatch::{dc_network_rows, dispatch, dispatch_coalition, Coalition, MAX_BIDDERS};
use crate::market::{MarketInstance, MarketKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    InvalidCurve,
    DomainSign,
    DuplicateId,
    MissingNode,
    InvalidNetwork,
    UnknownVariable,
    InvalidRecourse,
    Infeasible,
    RemovalInfeasible,
    Dispatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            message: message.into(),
        });
    }
}

/// Checks an instance; never fails, every problem goes into the report.
///
/// Feasibility probes (the full market and each single-bidder removal) only
/// run when the structural checks pass.
pub fn validate_instance(instance: &MarketInstance) -> ValidationReport {
    use ViolationKind::*;
    let mut report = ValidationReport::default();

    let mut ids = BTreeSet::new();
    for b in &instance.bidders {
        if !ids.insert(b.id.as_str()) {
            report.push(DuplicateId, format!("bidder id '{}' is repeated", b.id));
        }
        if let Err(e) = b.curve.check() {
            report.push(InvalidCurve, format!("bidder '{}': {e}", b.id));
        } else if !matches!(b.curve, crate::market::BidCurve::DiscreteOffers(_) | crate::market::BidCurve::FixedCharge { .. })
            && !b.curve.is_convex()
        {
            report.push(InvalidCurve, format!("bidder '{}': negative curvature", b.id));
        }
        if let Some(t) = &b.true_curve {
            if let Err(e) = t.check() {
                report.push(InvalidCurve, format!("bidder '{}' true curve: {e}", b.id));
            } else if t.dim() != b.curve.dim() {
                report.push(InvalidCurve, format!("bidder '{}': true curve dimension differs", b.id));
            }
        }
        if instance.kind == MarketKind::OneSided && b.curve.lower_bounds().iter().any(|&v| v < 0.0) {
            report.push(
                DomainSign,
                format!("bidder '{}' admits negative quantities in a one-sided market", b.id),
            );
        }
    }
    if instance.num_bidders() > MAX_BIDDERS {
        report.push(Dispatch, format!("more than {MAX_BIDDERS} bidders"));
    }

    if let Some(net) = &instance.network {
        for b in &instance.bidders {
            match &b.node {
                None => report.push(MissingNode, format!("bidder '{}' has no node", b.id)),
                Some(n) if net.node_index(n).is_none() => {
                    report.push(MissingNode, format!("bidder '{}' sits at unknown node '{n}'", b.id))
                }
                _ => {}
            }
        }
        for (i, line) in net.lines.iter().enumerate() {
            if !(line.susceptance > 0.0) {
                report.push(InvalidNetwork, format!("line {i} has nonpositive susceptance"));
            }
            if !(line.limit >= 0.0) {
                report.push(InvalidNetwork, format!("line {i} has a negative limit"));
            }
        }
        for node in net.demand.keys() {
            if net.node_index(node).is_none() {
                report.push(MissingNode, format!("demand at unknown node '{node}'"));
            }
        }
        if !report.has(MissingNode) {
            let nodes: Vec<Option<String>> = instance.bidders.iter().map(|b| b.node.clone()).collect();
            if let Err(e) = dc_network_rows(net, &nodes) {
                report.push(InvalidNetwork, e.to_string());
            }
        }
    } else {
        for b in &instance.bidders {
            if let Some(n) = &b.node {
                report.push(MissingNode, format!("bidder '{}' names node '{n}' but there is no network", b.id));
            }
        }
    }

    for c in &instance.constraints {
        for name in c.terms.keys() {
            if instance.resolve_quantity(name).is_none() && instance.recourse_index(name).is_none() {
                report.push(UnknownVariable, format!("constraint '{}' uses unknown variable '{name}'", c.name));
            }
        }
    }
    if let Some(r) = &instance.recourse {
        for s in &r.scenarios {
            if !(s.weight >= 0.0) {
                report.push(InvalidRecourse, format!("scenario '{}' has a negative weight", s.name));
            }
        }
        for v in &r.variables {
            if !(v.quadratic >= 0.0) {
                report.push(InvalidRecourse, format!("recourse variable '{}' is not convex", v.name));
            }
            if let Some(s) = &v.scenario {
                if !r.scenarios.iter().any(|sc| &sc.name == s) {
                    report.push(InvalidRecourse, format!("recourse variable '{}' names unknown scenario '{s}'", v.name));
                }
            }
            if v.lower > v.upper {
                report.push(InvalidRecourse, format!("recourse variable '{}' has empty bounds", v.name));
            }
        }
        for name in r.x_linear.keys() {
            if instance.resolve_quantity(name).is_none() {
                report.push(UnknownVariable, format!("recourse cost uses unknown quantity '{name}'"));
            }
        }
    }

    if !report.is_ok() {
        return report;
    }
    match dispatch(instance) {
        Ok(r) if !r.is_optimal() => report.push(Infeasible, "the market has no feasible dispatch"),
        Ok(_) => {
            let full = Coalition::full(instance.num_bidders());
            for (l, b) in instance.bidders.iter().enumerate() {
                match dispatch_coalition(instance, full.without(l)) {
                    Ok(r) if !r.is_optimal() => {
                        report.push(RemovalInfeasible, format!("removing '{}' makes the market infeasible", b.id))
                    }
                    Ok(_) => {}
                    Err(e) => report.push(Dispatch, e.to_string()),
                }
            }
        }
        Err(e) => report.push(Dispatch, e.to_string()),
    }
    report
}
