use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::market::curve::BidCurve;
use crate::DEFAULT_TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MarketKind {
    /// Reverse auction; every quantity is nonnegative.
    OneSided,
    /// Bidders may buy (negative quantities) or sell.
    Exchange,
}

impl MarketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MarketKind::OneSided => "one_sided",
            MarketKind::Exchange => "exchange",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bidder {
    pub id: String,
    pub node: Option<String>,
    pub curve: BidCurve,
    pub true_curve: Option<BidCurve>,
}

impl Bidder {
    pub fn new(id: impl Into<String>, curve: BidCurve) -> Self {
        Self {
            id: id.into(),
            node: None,
            curve,
            true_curve: None,
        }
    }

    pub fn at(mut self, node: impl Into<String>) -> Self {
        self.node = Some(node.into());
        self
    }

    pub fn with_true_curve(mut self, curve: BidCurve) -> Self {
        self.true_curve = Some(curve);
        self
    }

    /// The true cost when known, the submitted bid otherwise.
    pub fn truth(&self) -> &BidCurve {
        self.true_curve.as_ref().unwrap_or(&self.curve)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: String,
    pub to: String,
    pub susceptance: f64,
    /// Thermal limit in MW; `f64::INFINITY` for an unconstrained line.
    pub limit: f64,
    /// When false, flow is only allowed in the `from → to` direction.
    pub bidirectional: bool,
}

impl Line {
    pub fn new(from: impl Into<String>, to: impl Into<String>, susceptance: f64, limit: f64) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            susceptance,
            limit,
            bidirectional: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nodes: Vec<String>,
    pub lines: Vec<Line>,
    pub reference: String,
    /// Fixed inelastic load per node, MW.
    pub demand: BTreeMap<String, f64>,
}

impl Network {
    pub fn new(nodes: Vec<String>, reference: impl Into<String>) -> Self {
        Self {
            nodes,
            lines: Vec::new(),
            reference: reference.into(),
            demand: BTreeMap::new(),
        }
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn demand_at(&self, id: &str) -> f64 {
        self.demand.get(id).copied().unwrap_or(0.0)
    }

    pub fn has_limits(&self) -> bool {
        self.lines.iter().any(|l| l.limit.is_finite() || !l.bidirectional)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "le",
            Sense::Ge => "ge",
            Sense::Eq => "eq",
        }
    }
}

/// Sparse linear row over named variables: bidder quantities (`id`, or
/// `id[k]` for component `k`) and recourse variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: BTreeMap<String, f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new<'a>(
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (&'a str, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Self {
        Self {
            name: name.into(),
            terms: terms.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            sense,
            rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecourseVariable {
    pub name: String,
    pub scenario: Option<String>,
    pub lower: f64,
    pub upper: f64,
    pub linear: f64,
    pub quadratic: f64,
}

/// Second-stage cost `Σ_v w(v)·(q_v y_v² + c_v y_v) + Σ_x k_x x`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recourse {
    pub scenarios: Vec<Scenario>,
    pub variables: Vec<RecourseVariable>,
    pub x_linear: BTreeMap<String, f64>,
}

impl Recourse {
    pub fn weight(&self, var: &RecourseVariable) -> f64 {
        var.scenario
            .as_ref()
            .and_then(|s| self.scenarios.iter().find(|sc| &sc.name == s))
            .map_or(1.0, |s| s.weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    pub name: String,
    pub kind: MarketKind,
    pub currency: String,
    pub tolerance: f64,
    pub bidders: Vec<Bidder>,
    pub network: Option<Network>,
    pub constraints: Vec<LinearConstraint>,
    pub recourse: Option<Recourse>,
}

impl MarketInstance {
    pub fn new(name: impl Into<String>, kind: MarketKind, bidders: Vec<Bidder>) -> Self {
        Self {
            name: name.into(),
            kind,
            currency: "USD".into(),
            tolerance: DEFAULT_TOLERANCE,
            bidders,
            network: None,
            constraints: Vec::new(),
            recourse: None,
        }
    }

    pub fn with_network(mut self, network: Network) -> Self {
        self.network = Some(network);
        self
    }

    pub fn with_constraint(mut self, c: LinearConstraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn with_recourse(mut self, r: Recourse) -> Self {
        self.recourse = Some(r);
        self
    }

    pub fn num_bidders(&self) -> usize {
        self.bidders.len()
    }

    pub fn bidder_index(&self, id: &str) -> Option<usize> {
        self.bidders.iter().position(|b| b.id == id)
    }

    /// Copy with bidder `l` submitting `curve` instead.
    pub fn with_bid(&self, l: usize, curve: BidCurve) -> Self {
        let mut out = self.clone();
        out.bidders[l].curve = curve;
        out
    }

    /// Copy in which every bidder with a known true cost bids it.
    pub fn truthful(&self) -> Self {
        let mut out = self.clone();
        for b in &mut out.bidders {
            if let Some(t) = b.true_curve.clone() {
                b.curve = t;
            }
        }
        out
    }

    /// Copy with bidder `l` bidding its true cost.
    pub fn truthful_for(&self, l: usize) -> Result<Self> {
        let b = &self.bidders[l];
        let truth = b
            .true_curve
            .clone()
            .ok_or_else(|| Error::MissingTrueCurve(b.id.clone()))?;
        Ok(self.with_bid(l, truth))
    }

    /// Name of component `k` of bidder `l`'s quantity in constraint rows.
    pub fn variable_name(&self, l: usize, k: usize) -> String {
        let b = &self.bidders[l];
        if b.curve.dim() == 1 {
            b.id.clone()
        } else {
            format!("{}[{}]", b.id, k)
        }
    }

    /// Resolves a quantity variable name to `(bidder, component)`.
    pub fn resolve_quantity(&self, name: &str) -> Option<(usize, usize)> {
        if let Some(l) = self.bidder_index(name) {
            if self.bidders[l].curve.dim() == 1 {
                return Some((l, 0));
            }
        }
        let (id, rest) = name.split_once('[')?;
        let k: usize = rest.strip_suffix(']')?.parse().ok()?;
        let l = self.bidder_index(id)?;
        (k < self.bidders[l].curve.dim()).then_some((l, k))
    }

    pub fn recourse_index(&self, name: &str) -> Option<usize> {
        self.recourse
            .as_ref()
            .and_then(|r| r.variables.iter().position(|v| v.name == name))
    }

    /// Evaluates the bid of bidder `l` at `x`.
    pub fn bid_cost(&self, l: usize, x: &[f64]) -> Result<f64> {
        self.bidders[l].curve.evaluate(x)
    }

    /// Second-stage cost at `(x, y)`.
    pub fn recourse_cost(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        let Some(r) = &self.recourse else {
            return 0.0;
        };
        let mut total = 0.0;
        for (v, &yv) in r.variables.iter().zip(y) {
            total += r.weight(v) * (v.quadratic * yv * yv + v.linear * yv);
        }
        for (name, coef) in &r.x_linear {
            if let Some((l, k)) = self.resolve_quantity(name) {
                total += coef * x[l][k];
            }
        }
        total
    }

    /// `tol · max(1, |magnitude|)` with the instance tolerance.
    pub fn tol(&self, magnitude: f64) -> f64 {
        crate::scalar::scaled_tol(self.tolerance, magnitude)
    }
}
