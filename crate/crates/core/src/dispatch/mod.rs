//! Economic dispatch: minimum total bid cost plus second-stage cost,
//! subject to network, side constraints and bid domains, optionally with
//! bidders outside a coalition forced to zero.
//!
//! Convex bids go straight to the QP solver. Discrete offers and
//! fixed-charge curves are handled by enumerating which piece of each such
//! bid is selected and solving the convex remainder for every selection.
//! Among optimal solutions the one with smallest `‖x‖₂` is returned.

mod coalition;
mod network;

pub use coalition::{coalition_values, Coalition, CoalitionValues, MAX_BIDDERS};
pub use network::{dc_network_rows, NetworkRow, NetworkRows, RowVar};

use crate::error::{Error, Result};
use crate::market::{BidCurve, MarketInstance, MarketKind, Sense};
use crate::qp::{self, QpError, QpOptions, QpProblem, QpSolution};
use crate::scalar::scaled_tol;

/// Default bound on the number of piece selections tried.
pub const ENUMERATION_CAP: u128 = 1 << 25;

#[derive(Debug, Clone)]
pub struct DispatchOptions {
    pub enumeration_cap: u128,
    pub qp: QpOptions<f64>,
    /// Run the minimum-norm second stage when the optimum may be non-unique.
    pub tie_break: bool,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        Self {
            enumeration_cap: ENUMERATION_CAP,
            qp: QpOptions::default(),
            tie_break: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DispatchProblem<'a> {
    pub instance: &'a MarketInstance,
    /// Bidders allowed to trade; everyone else is held at zero.
    pub coalition: Coalition,
    /// When set, bidder quantities are fixed and only recourse and network
    /// variables are optimized.
    pub fixed_allocation: Option<&'a [Vec<f64>]>,
    pub options: DispatchOptions,
}

impl<'a> DispatchProblem<'a> {
    pub fn new(instance: &'a MarketInstance) -> Self {
        Self::restricted(instance, Coalition::full(instance.num_bidders().min(MAX_BIDDERS)))
    }

    pub fn restricted(instance: &'a MarketInstance, coalition: Coalition) -> Self {
        Self {
            instance,
            coalition,
            fixed_allocation: None,
            options: DispatchOptions::default(),
        }
    }

    pub fn with_fixed_allocation(mut self, x: &'a [Vec<f64>]) -> Self {
        self.fixed_allocation = Some(x);
        self
    }

    pub fn with_options(mut self, options: DispatchOptions) -> Self {
        self.options = options;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub status: DispatchStatus,
    /// `J`, or `+∞` when infeasible.
    pub objective: f64,
    /// Quantity vector per bidder.
    pub allocation: Vec<Vec<f64>>,
    pub recourse: Vec<f64>,
    /// Second-stage cost `d(x*, y*)`.
    pub recourse_cost: f64,
    /// `∂J/∂d_n` per network node, when duals are available.
    pub nodal_prices: Option<Vec<f64>>,
    /// `∂J/∂rhs` per side constraint, when duals are available.
    pub constraint_prices: Option<Vec<f64>>,
    /// The active constraints are linearly dependent, so the prices above
    /// are one choice among several.
    pub degenerate: bool,
}

impl DispatchResult {
    fn infeasible(instance: &MarketInstance) -> Self {
        Self {
            status: DispatchStatus::Infeasible,
            objective: f64::INFINITY,
            allocation: instance.bidders.iter().map(|b| vec![0.0; b.curve.dim()]).collect(),
            recourse: Vec::new(),
            recourse_cost: 0.0,
            nodal_prices: None,
            constraint_prices: None,
            degenerate: false,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == DispatchStatus::Optimal
    }

    /// Total injection of bidder `l`.
    pub fn net_quantity(&self, l: usize) -> f64 {
        self.allocation[l].iter().sum()
    }

    pub fn is_allocated(&self, l: usize, tol: f64) -> bool {
        self.allocation[l].iter().any(|v| v.abs() > scaled_tol(tol, *v))
    }

    fn squared_norm(&self) -> f64 {
        self.allocation.iter().flatten().map(|v| v * v).sum()
    }
}

/// Solves the full market.
pub fn dispatch(instance: &MarketInstance) -> Result<DispatchResult> {
    solve_dispatch(&DispatchProblem::new(instance))
}

/// Solves the market restricted to `coalition`.
pub fn dispatch_coalition(instance: &MarketInstance, coalition: Coalition) -> Result<DispatchResult> {
    solve_dispatch(&DispatchProblem::restricted(instance, coalition))
}

/// One way a bid can be satisfied within a selection.
#[derive(Debug, Clone)]
enum Piece<'c> {
    Zero,
    Convex { curve: &'c BidCurve, charge: f64 },
    Point { quantity: &'c [f64], price: f64 },
}

fn pieces<'c>(id: &str, curve: &'c BidCurve) -> Result<Vec<Piece<'c>>> {
    Ok(match curve {
        BidCurve::Quadratic(terms) => {
            if terms.iter().any(|t| t.a < 0.0) {
                return Err(Error::NonconvexUnsupported(id.to_string()));
            }
            vec![Piece::Convex { curve, charge: 0.0 }]
        }
        BidCurve::PiecewiseLinear(_) => vec![Piece::Convex { curve, charge: 0.0 }],
        BidCurve::DiscreteOffers(offers) => std::iter::once(Piece::Zero)
            .chain(offers.iter().map(|o| Piece::Point {
                quantity: &o.quantity,
                price: o.price,
            }))
            .collect(),
        BidCurve::FixedCharge { base, charge } => {
            let mut out = vec![Piece::Zero];
            for p in pieces(id, base)? {
                match p {
                    Piece::Zero => {}
                    Piece::Convex { curve, charge: c } => out.push(Piece::Convex {
                        curve,
                        charge: c + charge,
                    }),
                    Piece::Point { quantity, price } => out.push(Piece::Point {
                        quantity,
                        price: price + charge,
                    }),
                }
            }
            out
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Var(usize),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy)]
enum RowRef {
    Eq(usize),
    /// Inequality stored as `sign · a z ≤ sign · b`.
    Le(usize, f64),
    Constant,
}

/// QP for one piece selection.
struct Model {
    qp: QpProblem<f64>,
    constant: f64,
    x: Vec<Vec<Slot>>,
    y: Vec<usize>,
    balance: Vec<RowRef>,
    side: Vec<RowRef>,
    /// Positive curvature per variable.
    curved: Vec<bool>,
    /// Selection includes a fixed charge whose quantity must be nonzero.
    needs_nonzero: Vec<bool>,
}

struct Builder<'a> {
    instance: &'a MarketInstance,
    network: Option<NetworkRows>,
    tol: f64,
}

impl<'a> Builder<'a> {
    fn new(instance: &'a MarketInstance) -> Result<Self> {
        let network = match &instance.network {
            Some(net) => {
                let nodes: Vec<Option<String>> = instance.bidders.iter().map(|b| b.node.clone()).collect();
                Some(dc_network_rows(net, &nodes)?)
            }
            None => None,
        };
        Ok(Self {
            instance,
            network,
            tol: instance.tolerance,
        })
    }

    /// Returns `None` when a row with no free variables is violated.
    fn build(&self, selection: &[Piece<'_>]) -> Result<Option<Model>> {
        let inst = self.instance;
        let one_sided = inst.kind == MarketKind::OneSided;

        // variable layout
        struct Var {
            lower: f64,
            upper: f64,
            h: f64,
            c: f64,
        }
        let mut vars: Vec<Var> = Vec::new();
        let mut constant = 0.0;
        let mut x = Vec::with_capacity(selection.len());
        let mut epi: Vec<(usize, usize, &BidCurve)> = Vec::new();
        let mut needs_nonzero = vec![false; selection.len()];
        for (l, piece) in selection.iter().enumerate() {
            let dim = inst.bidders[l].curve.dim();
            let slots = match piece {
                Piece::Zero => vec![Slot::Fixed(0.0); dim],
                Piece::Point { quantity, price } => {
                    constant += price;
                    quantity.iter().map(|&q| Slot::Fixed(q)).collect()
                }
                Piece::Convex { curve, charge } => {
                    constant += charge;
                    needs_nonzero[l] = matches!(inst.bidders[l].curve, BidCurve::FixedCharge { .. });
                    let mut slots = Vec::with_capacity(dim);
                    match curve {
                        BidCurve::Quadratic(terms) => {
                            for t in terms {
                                let lower = if one_sided { t.lower.max(0.0) } else { t.lower };
                                if lower == t.upper {
                                    constant += t.a * lower * lower + t.b * lower;
                                    slots.push(Slot::Fixed(lower));
                                } else {
                                    slots.push(Slot::Var(vars.len()));
                                    vars.push(Var {
                                        lower,
                                        upper: t.upper,
                                        h: 2.0 * t.a,
                                        c: t.b,
                                    });
                                }
                            }
                        }
                        BidCurve::PiecewiseLinear(bp) => {
                            let last = bp.last().map_or(0.0, |p| p.0);
                            if last == 0.0 {
                                slots.push(Slot::Fixed(0.0));
                            } else {
                                let xi = vars.len();
                                slots.push(Slot::Var(xi));
                                vars.push(Var {
                                    lower: 0.0,
                                    upper: last,
                                    h: 0.0,
                                    c: 0.0,
                                });
                                let ti = vars.len();
                                vars.push(Var {
                                    lower: f64::NEG_INFINITY,
                                    upper: f64::INFINITY,
                                    h: 0.0,
                                    c: 1.0,
                                });
                                epi.push((xi, ti, curve));
                            }
                        }
                        _ => unreachable!("pieces are convex"),
                    }
                    slots
                }
            };
            x.push(slots);
        }
        let mut y = Vec::new();
        if let Some(r) = &inst.recourse {
            for v in &r.variables {
                let w = r.weight(v);
                y.push(vars.len());
                vars.push(Var {
                    lower: v.lower,
                    upper: v.upper,
                    h: 2.0 * w * v.quadratic,
                    c: w * v.linear,
                });
            }
            for (name, coef) in &r.x_linear {
                let (l, k) = inst.resolve_quantity(name).ok_or_else(|| Error::UnknownReference {
                    kind: "quantity variable",
                    name: name.clone(),
                })?;
                match x[l][k] {
                    Slot::Var(i) => vars[i].c += coef,
                    Slot::Fixed(v) => constant += coef * v,
                }
            }
        }
        let mut theta = Vec::new();
        if let Some(rows) = &self.network {
            for i in 0..rows.balance.len() {
                if i == rows.reference {
                    theta.push(None);
                } else {
                    theta.push(Some(vars.len()));
                    vars.push(Var {
                        lower: f64::NEG_INFINITY,
                        upper: f64::INFINITY,
                        h: 0.0,
                        c: 0.0,
                    });
                }
            }
        }

        let n = vars.len();
        let mut qp = QpProblem::new(n);
        let mut curved = Vec::with_capacity(n);
        for (i, v) in vars.iter().enumerate() {
            qp.set_bounds(i, v.lower, v.upper);
            if v.h != 0.0 {
                qp.add_hessian(i, i, v.h);
            }
            qp.add_linear(i, v.c);
            curved.push(v.h > 0.0);
        }
        for &(xi, ti, curve) in &epi {
            let BidCurve::PiecewiseLinear(bp) = curve else { unreachable!() };
            for w in bp.windows(2) {
                let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                let mut row = vec![0.0; n];
                row[xi] = slope;
                row[ti] = -1.0;
                qp.add_le(row, slope * w[0].0 - w[0].1)?;
            }
        }

        // returns (row, rhs) with fixed slots moved to the right-hand side
        let quantity_row = |terms: &mut Vec<f64>, rhs: &mut f64, l: usize, k: usize, coef: f64| match x[l][k] {
            Slot::Var(i) => terms[i] += coef,
            Slot::Fixed(v) => *rhs -= coef * v,
        };

        let mut balance = Vec::new();
        if let Some(rows) = &self.network {
            for row in &rows.balance {
                let mut a = vec![0.0; n];
                let mut rhs = row.rhs;
                for &(var, coef) in &row.terms {
                    match var {
                        RowVar::Injection(l) => {
                            for k in 0..x[l].len() {
                                quantity_row(&mut a, &mut rhs, l, k, coef);
                            }
                        }
                        RowVar::Angle(i) => a[theta[i].expect("non-reference angle")] += coef,
                    }
                }
                match self.push_row(&mut qp, a, rhs, Sense::Eq)? {
                    Some(r) => balance.push(r),
                    None => return Ok(None),
                }
            }
            for row in &rows.limits {
                let mut a = vec![0.0; n];
                for &(var, coef) in &row.terms {
                    if let RowVar::Angle(i) = var {
                        a[theta[i].expect("non-reference angle")] += coef;
                    }
                }
                if self.push_row(&mut qp, a, row.rhs, Sense::Le)?.is_none() {
                    return Ok(None);
                }
            }
        }
        let mut side = Vec::with_capacity(inst.constraints.len());
        for c in &inst.constraints {
            let mut a = vec![0.0; n];
            let mut rhs = c.rhs;
            for (name, &coef) in &c.terms {
                if let Some((l, k)) = inst.resolve_quantity(name) {
                    quantity_row(&mut a, &mut rhs, l, k, coef);
                } else if let Some(j) = inst.recourse_index(name) {
                    a[y[j]] += coef;
                } else {
                    return Err(Error::UnknownReference {
                        kind: "constraint variable",
                        name: name.clone(),
                    });
                }
            }
            match self.push_row(&mut qp, a, rhs, c.sense)? {
                Some(r) => side.push(r),
                None => return Ok(None),
            }
        }
        Ok(Some(Model {
            qp,
            constant,
            x,
            y,
            balance,
            side,
            curved,
            needs_nonzero,
        }))
    }

    fn push_row(&self, qp: &mut QpProblem<f64>, a: Vec<f64>, rhs: f64, sense: Sense) -> Result<Option<RowRef>> {
        if a.iter().all(|&v| v == 0.0) {
            let tol = scaled_tol(self.tol, rhs);
            let ok = match sense {
                Sense::Eq => rhs.abs() <= tol,
                Sense::Le => rhs >= -tol,
                Sense::Ge => rhs <= tol,
            };
            return Ok(ok.then_some(RowRef::Constant));
        }
        Ok(Some(match sense {
            Sense::Eq => RowRef::Eq(qp.add_eq(a, rhs)?),
            Sense::Le => RowRef::Le(qp.add_le(a, rhs)?, 1.0),
            Sense::Ge => {
                let neg: Vec<f64> = a.iter().map(|v| -v).collect();
                RowRef::Le(qp.add_le(neg, -rhs)?, -1.0)
            }
        }))
    }
}

struct Candidate {
    result: DispatchResult,
    norm: f64,
}

fn solve_model(model: &Model, options: &DispatchOptions, with_duals: bool) -> Result<Option<DispatchResult>> {
    let first = match qp::solve(&model.qp, &options.qp) {
        Ok(s) => s,
        Err(QpError::Infeasible(_)) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let z = if options.tie_break {
        min_norm_point(model, &first, options)?
    } else {
        first.x.clone()
    };
    let objective = model.qp.objective(&z) + model.constant;
    let allocation: Vec<Vec<f64>> = model
        .x
        .iter()
        .map(|slots| {
            slots
                .iter()
                .map(|s| match *s {
                    Slot::Var(i) => snap(z[i]),
                    Slot::Fixed(v) => v,
                })
                .collect()
        })
        .collect();
    let recourse: Vec<f64> = model.y.iter().map(|&i| z[i]).collect();
    let price = |r: &RowRef| match *r {
        RowRef::Eq(i) => -first.eq_multipliers[i],
        RowRef::Le(i, sign) => -sign * first.ineq_multipliers[i],
        RowRef::Constant => 0.0,
    };
    let (nodal_prices, constraint_prices) = if with_duals {
        (
            (!model.balance.is_empty()).then(|| model.balance.iter().map(price).collect()),
            Some(model.side.iter().map(price).collect()),
        )
    } else {
        (None, None)
    };
    Ok(Some(DispatchResult {
        status: DispatchStatus::Optimal,
        objective,
        allocation,
        recourse,
        recourse_cost: 0.0,
        nodal_prices,
        constraint_prices,
        degenerate: with_duals && first.degenerate,
    }))
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-13 {
        0.0
    } else {
        v
    }
}

/// Minimizes `‖x‖²` over the optimal face of the first-stage problem.
///
/// Variables with positive curvature take the same value at every optimum,
/// so they are pinned; the remaining linear cost may not increase.
fn min_norm_point(model: &Model, first: &QpSolution<f64>, options: &DispatchOptions) -> Result<Vec<f64>> {
    let x_vars: Vec<usize> = model
        .x
        .iter()
        .flatten()
        .filter_map(|s| match s {
            Slot::Var(i) => Some(*i),
            Slot::Fixed(_) => None,
        })
        .collect();
    if x_vars.iter().all(|&i| model.curved[i]) {
        return Ok(first.x.clone());
    }
    let n = model.qp.num_vars();
    let mut second = QpProblem::new(n);
    for i in 0..n {
        let (lo, hi) = model.qp.bounds(i);
        second.set_bounds(i, lo, hi);
    }
    for (a, b) in model.qp.eq_rows() {
        second.add_eq(a.clone(), *b)?;
    }
    for (a, b) in model.qp.ineq_rows() {
        second.add_le(a.clone(), *b)?;
    }
    let mut cost = vec![0.0; n];
    let mut cost_rhs = 0.0;
    for i in 0..n {
        if model.curved[i] {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            second.add_eq(row, first.x[i])?;
        } else {
            cost[i] = model.qp.linear()[i];
            cost_rhs += cost[i] * first.x[i];
        }
    }
    if cost.iter().any(|&c| c != 0.0) {
        second.add_le(cost, cost_rhs)?;
    }
    for &i in &x_vars {
        second.add_hessian(i, i, 2.0);
    }
    match qp::solve_from(&second, &options.qp, &first.x) {
        Ok(s) => Ok(s.x),
        // the first-stage point is always admissible here
        Err(_) => Ok(first.x.clone()),
    }
}

/// Solves a dispatch problem.
pub fn solve_dispatch(problem: &DispatchProblem<'_>) -> Result<DispatchResult> {
    let inst = problem.instance;
    if inst.num_bidders() > MAX_BIDDERS {
        return Err(Error::InvalidArgument(format!(
            "dispatch is limited to {MAX_BIDDERS} bidders"
        )));
    }
    let builder = Builder::new(inst)?;

    // per-bidder options
    let mut options: Vec<Vec<Piece<'_>>> = Vec::with_capacity(inst.num_bidders());
    if let Some(fixed) = problem.fixed_allocation {
        if fixed.len() != inst.num_bidders() {
            return Err(Error::InvalidArgument("fixed allocation has wrong length".into()));
        }
        for (l, b) in inst.bidders.iter().enumerate() {
            let q = &fixed[l];
            if q.len() != b.curve.dim() {
                return Err(Error::OutOfDomain { quantity: q.clone() });
            }
            let price = if problem.coalition.contains(l) || q.iter().all(|&v| v == 0.0) {
                b.curve.evaluate(q)?
            } else {
                return Ok(DispatchResult::infeasible(inst));
            };
            options.push(vec![Piece::Point { quantity: q, price }]);
        }
    } else {
        for (l, b) in inst.bidders.iter().enumerate() {
            if problem.coalition.contains(l) {
                options.push(pieces(&b.id, &b.curve)?);
            } else {
                options.push(vec![Piece::Zero]);
            }
        }
    }

    let total: u128 = options
        .iter()
        .try_fold(1u128, |acc, o| acc.checked_mul(o.len() as u128))
        .unwrap_or(u128::MAX);
    if total > problem.options.enumeration_cap {
        return Err(Error::CapExceeded {
            needed: total,
            cap: problem.options.enumeration_cap,
        });
    }
    let with_duals = total == 1 && inst.bidders.iter().all(|b| b.curve.is_convex());

    let mut best: Option<Candidate> = None;
    let mut index = vec![0usize; options.len()];
    let mut selection: Vec<Piece<'_>> = options.iter().map(|o| o[0].clone()).collect();
    for _ in 0..total {
        if let Some(model) = builder.build(&selection)? {
            if let Some(result) = solve_model(&model, &problem.options, with_duals)? {
                let skip = model
                    .needs_nonzero
                    .iter()
                    .enumerate()
                    .any(|(l, &nz)| nz && !result.is_allocated(l, inst.tolerance));
                if !skip {
                    let norm = result.squared_norm();
                    let better = match &best {
                        None => true,
                        Some(b) => {
                            let tol = inst.tol(b.result.objective);
                            result.objective < b.result.objective - tol
                                || (result.objective <= b.result.objective + tol && norm < b.norm - inst.tol(b.norm))
                        }
                    };
                    if better {
                        best = Some(Candidate { result, norm });
                    }
                }
            }
        }
        // advance the mixed-radix counter, last bidder fastest
        for l in (0..index.len()).rev() {
            index[l] += 1;
            if index[l] < options[l].len() {
                selection[l] = options[l][index[l]].clone();
                break;
            }
            index[l] = 0;
            selection[l] = options[l][0].clone();
        }
    }

    Ok(match best {
        Some(Candidate { mut result, .. }) => {
            result.recourse_cost = inst.recourse_cost(&result.allocation, &result.recourse);
            result
        }
        None => DispatchResult::infeasible(inst),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Bidder, LinearConstraint, Line, Network, Offer};

    fn pair_exchange() -> MarketInstance {
        MarketInstance::new(
            "pair",
            MarketKind::Exchange,
            vec![
                Bidder::new("1", BidCurve::quadratic(0.0, 1.0, 0.0, 1.0)),
                Bidder::new("2", BidCurve::quadratic(0.0, 3.0, -1.0, 0.0)),
            ],
        )
        .with_constraint(LinearConstraint::new("balance", [("1", 1.0), ("2", 1.0)], Sense::Eq, 0.0))
    }

    fn four_node() -> MarketInstance {
        let mut net = Network::new(["1", "2", "3", "4"].iter().map(|s| s.to_string()).collect(), "3");
        net.lines = vec![
            Line::new("3", "1", 1.0, 2.0),
            Line::new("3", "2", 1.0, 2.0),
            Line::new("1", "4", 1.0, 10.0),
            Line::new("2", "4", 1.0, 10.0),
        ];
        MarketInstance::new(
            "four-node",
            MarketKind::Exchange,
            vec![
                Bidder::new("G1", BidCurve::quadratic(5.0, 4.0, 0.0, f64::INFINITY)).at("1"),
                Bidder::new("G2", BidCurve::quadratic(4.0, 5.0, 0.0, f64::INFINITY)).at("2"),
                Bidder::new("G3", BidCurve::quadratic(1.0, 1.0, 0.0, f64::INFINITY)).at("3"),
                Bidder::new("D4", BidCurve::quadratic(1.0, 20.0, -8.0, 0.0)).at("4"),
            ],
        )
        .with_network(net)
    }

    #[test]
    fn pair_exchange_vertex() {
        let r = dispatch(&pair_exchange()).unwrap();
        assert_eq!(r.status, DispatchStatus::Optimal);
        assert!((r.objective + 2.0).abs() < 1e-12);
        assert!((r.allocation[0][0] - 1.0).abs() < 1e-12);
        assert!((r.allocation[1][0] + 1.0).abs() < 1e-12);
        assert!(r.degenerate);
    }

    #[test]
    fn lone_bidder_cannot_trade() {
        let m = pair_exchange();
        for s in [Coalition::singleton(0), Coalition::singleton(1), Coalition::EMPTY] {
            let r = dispatch_coalition(&m, s).unwrap();
            assert_eq!(r.objective, 0.0);
            assert!(r.allocation.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn four_node_allocation_and_prices() {
        let r = dispatch(&four_node()).unwrap();
        let expect = [0.5769230769, 0.5769230769, 4.0, -5.1538461538];
        for (x, e) in r.allocation.iter().zip(expect) {
            assert!((x[0] - e).abs() < 1e-8, "{x:?} vs {e}");
        }
        assert!((r.objective + 48.3269230769).abs() < 1e-8);
        let prices = r.nodal_prices.unwrap();
        let expect = [9.7692307692, 9.6153846154, 9.0, 9.6923076923];
        for (p, e) in prices.iter().zip(expect) {
            assert!((p - e).abs() < 1e-8, "{p} vs {e}");
        }
    }

    #[test]
    fn infeasible_is_a_status() {
        let m = MarketInstance::new(
            "short",
            MarketKind::OneSided,
            vec![Bidder::new("a", BidCurve::quadratic(1.0, 0.0, 0.0, 1.0))],
        )
        .with_constraint(LinearConstraint::new("demand", [("a", 1.0)], Sense::Eq, 2.0));
        let r = dispatch(&m).unwrap();
        assert_eq!(r.status, DispatchStatus::Infeasible);
        assert_eq!(r.objective, f64::INFINITY);
    }

    #[test]
    fn discrete_offers_by_enumeration() {
        let offers = |q: f64, p: f64| Offer { quantity: vec![q], price: p };
        let m = MarketInstance::new(
            "reserve",
            MarketKind::OneSided,
            vec![
                Bidder::new("a", BidCurve::discrete(vec![offers(3.0, 9.0), offers(5.0, 16.0)]).unwrap()),
                Bidder::new("b", BidCurve::discrete(vec![offers(2.0, 5.0), offers(4.0, 11.0)]).unwrap()),
            ],
        )
        .with_constraint(LinearConstraint::new("need", [("a", 1.0), ("b", 1.0)], Sense::Ge, 5.0));
        let r = dispatch(&m).unwrap();
        assert_eq!(r.objective, 14.0);
        assert_eq!(r.allocation, vec![vec![3.0], vec![2.0]]);
        assert!(r.nodal_prices.is_none() && r.constraint_prices.is_none());

        let capped = DispatchProblem::new(&m).with_options(DispatchOptions {
            enumeration_cap: 4,
            ..Default::default()
        });
        assert!(matches!(solve_dispatch(&capped), Err(Error::CapExceeded { needed: 9, cap: 4 })));
    }

    #[test]
    fn ties_resolve_to_minimum_norm() {
        // identical linear sellers split the load evenly
        let m = MarketInstance::new(
            "tie",
            MarketKind::OneSided,
            vec![
                Bidder::new("a", BidCurve::quadratic(0.0, 2.0, 0.0, 10.0)),
                Bidder::new("b", BidCurve::quadratic(0.0, 2.0, 0.0, 10.0)),
            ],
        )
        .with_constraint(LinearConstraint::new("demand", [("a", 1.0), ("b", 1.0)], Sense::Eq, 4.0));
        let r = dispatch(&m).unwrap();
        assert!((r.allocation[0][0] - 2.0).abs() < 1e-9);
        assert!((r.allocation[1][0] - 2.0).abs() < 1e-9);
        assert!((r.objective - 8.0).abs() < 1e-9);
    }

    #[test]
    fn negative_curvature_is_rejected() {
        let m = MarketInstance::new(
            "bad",
            MarketKind::OneSided,
            vec![Bidder::new("a", BidCurve::quadratic(-1.0, 0.0, 0.0, 1.0))],
        );
        assert_eq!(dispatch(&m).unwrap_err(), Error::NonconvexUnsupported("a".into()));
    }

    #[test]
    fn fixed_charge_skips_zero_quantity() {
        // on-state with negative charge must not be chosen at x = 0
        let m = MarketInstance::new(
            "fc",
            MarketKind::OneSided,
            vec![Bidder::new(
                "a",
                BidCurve::fixed_charge(BidCurve::quadratic(1.0, 5.0, 0.0, 2.0), -1.0),
            )],
        );
        let r = dispatch(&m).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.allocation[0][0], 0.0);
    }

    #[test]
    fn piecewise_linear_epigraph() {
        let m = MarketInstance::new(
            "pwl",
            MarketKind::OneSided,
            vec![
                Bidder::new("a", BidCurve::piecewise_linear(vec![(0.0, 0.0), (2.0, 2.0), (4.0, 8.0)]).unwrap()),
                Bidder::new("b", BidCurve::quadratic(0.0, 2.0, 0.0, 10.0)),
            ],
        )
        .with_constraint(LinearConstraint::new("demand", [("a", 1.0), ("b", 1.0)], Sense::Eq, 5.0));
        let r = dispatch(&m).unwrap();
        assert!((r.objective - 8.0).abs() < 1e-9);
        assert!((r.allocation[0][0] - 2.0).abs() < 1e-9);
        let price = r.constraint_prices.unwrap()[0];
        assert!((1.0..=3.0 + 1e-9).contains(&price) && (price - 2.0).abs() < 1e-9);
    }

    #[test]
    fn repeated_solves_are_identical() {
        let m = four_node();
        let a = dispatch(&m).unwrap();
        let b = dispatch(&m).unwrap();
        assert_eq!(a, b);
    }
}
