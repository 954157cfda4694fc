//! DC power-flow rows in angle form.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::market::Network;

/// A variable appearing in a network row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowVar {
    /// Net injection of a bidder, the sum of its quantity components.
    Injection(usize),
    /// Voltage angle of a non-reference node.
    Angle(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRow {
    pub terms: Vec<(RowVar, f64)>,
    pub rhs: f64,
}

/// Balance rows are equalities (one per node, in node order); limit rows
/// are `≤` rows, tagged with the line they bound.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRows {
    pub reference: usize,
    pub balance: Vec<NetworkRow>,
    pub limits: Vec<NetworkRow>,
    pub limit_lines: Vec<usize>,
}

/// Builds nodal balance and line-flow rows.
///
/// Node `n` balances as `Σ_{l at n} x_l − Σ_{lines} B (θ_n − θ_m) = d_n`, and
/// each line with a finite limit contributes `±B (θ_f − θ_t) ≤ limit`.
/// Unidirectional lines also get `B (θ_f − θ_t) ≥ 0`. The reference angle is
/// fixed at zero and does not appear.
pub fn dc_network_rows(network: &Network, bidder_nodes: &[Option<String>]) -> Result<NetworkRows> {
    let n = network.nodes.len();
    let reference = network
        .node_index(&network.reference)
        .ok_or_else(|| Error::UnknownReference {
            kind: "reference node",
            name: network.reference.clone(),
        })?;
    let mut ends = Vec::with_capacity(network.lines.len());
    for line in &network.lines {
        let f = network.node_index(&line.from).ok_or_else(|| Error::UnknownReference {
            kind: "node",
            name: line.from.clone(),
        })?;
        let t = network.node_index(&line.to).ok_or_else(|| Error::UnknownReference {
            kind: "node",
            name: line.to.clone(),
        })?;
        ends.push((f, t));
    }

    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([reference]);
    seen[reference] = true;
    while let Some(u) = queue.pop_front() {
        for (line, &(f, t)) in network.lines.iter().zip(&ends) {
            if line.susceptance <= 0.0 {
                continue;
            }
            let other = if f == u {
                t
            } else if t == u {
                f
            } else {
                continue;
            };
            if !seen[other] {
                seen[other] = true;
                queue.push_back(other);
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::DisconnectedNetwork(network.nodes[i].clone()));
    }

    let angle = |i: usize| (i != reference).then_some(RowVar::Angle(i));
    let mut balance: Vec<NetworkRow> = network
        .nodes
        .iter()
        .map(|id| NetworkRow {
            terms: Vec::new(),
            rhs: network.demand_at(id),
        })
        .collect();
    for (l, node) in bidder_nodes.iter().enumerate() {
        let Some(node) = node else { continue };
        let i = network.node_index(node).ok_or_else(|| Error::UnknownReference {
            kind: "node",
            name: node.clone(),
        })?;
        balance[i].terms.push((RowVar::Injection(l), 1.0));
    }
    for (line, &(f, t)) in network.lines.iter().zip(&ends) {
        let b = line.susceptance;
        // outflow B(θ_f − θ_t) leaves f and enters t
        for (node, sign) in [(f, 1.0), (t, -1.0)] {
            if let Some(v) = angle(f) {
                add_term(&mut balance[node].terms, v, -sign * b);
            }
            if let Some(v) = angle(t) {
                add_term(&mut balance[node].terms, v, sign * b);
            }
        }
    }

    let mut limits = Vec::new();
    let mut limit_lines = Vec::new();
    for (k, (line, &(f, t))) in network.lines.iter().zip(&ends).enumerate() {
        let flow = |sign: f64| {
            let mut terms = Vec::new();
            if let Some(v) = angle(f) {
                add_term(&mut terms, v, sign * line.susceptance);
            }
            if let Some(v) = angle(t) {
                add_term(&mut terms, v, -sign * line.susceptance);
            }
            terms
        };
        if line.limit.is_finite() {
            limits.push(NetworkRow {
                terms: flow(1.0),
                rhs: line.limit,
            });
            limit_lines.push(k);
        }
        if line.bidirectional {
            if line.limit.is_finite() {
                limits.push(NetworkRow {
                    terms: flow(-1.0),
                    rhs: line.limit,
                });
                limit_lines.push(k);
            }
        } else {
            limits.push(NetworkRow {
                terms: flow(-1.0),
                rhs: 0.0,
            });
            limit_lines.push(k);
        }
    }
    Ok(NetworkRows {
        reference,
        balance,
        limits,
        limit_lines,
    })
}

fn add_term(terms: &mut Vec<(RowVar, f64)>, var: RowVar, coef: f64) {
    match terms.iter_mut().find(|(v, _)| *v == var) {
        Some((_, c)) => *c += coef,
        None => terms.push((var, coef)),
    }
}
