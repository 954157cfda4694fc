//! Maximum-payment core-selecting payments.
//!
//! The operator utility is eliminated through the equality row, so a core
//! row for blocking coalition `S` becomes a cap on the utilities of the
//! bidders outside it: `Σ_{l∉S} u_l ≤ J(B_S) − J(B)`. Losers keep zero
//! utility, which leaves only rows over subsets of winners.

use crate::dispatch::Coalition;
use crate::error::{Error, Result};
use crate::mechanisms::core::{separation_oracle, SEPARATION_LIMIT};
use crate::mechanisms::{Clearing, Mechanism, PaymentOutcome};
use crate::qp::{self, QpError, QpOptions, QpProblem};
use crate::scalar::scaled_tol;
use crate::market::MarketInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoreMode {
    /// Materialize every row up front.
    Enumerate,
    /// Add the most violated row until none is violated.
    Generate,
}

impl CoreMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CoreMode::Enumerate => "enumerate",
            CoreMode::Generate => "generate",
        }
    }
}

impl std::str::FromStr for CoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enumerate" => Ok(CoreMode::Enumerate),
            "generate" => Ok(CoreMode::Generate),
            other => Err(Error::InvalidArgument(format!("unknown core mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MpcsOptions {
    /// Weight of the pull towards VCG utilities; `1e−6 · max(1, |J|)` when
    /// unset.
    pub epsilon: Option<f64>,
    pub mode: CoreMode,
    pub max_iterations: usize,
    /// Stop once the worst violation is below `convergence · max(1, |J|)`.
    pub convergence: f64,
    pub separation_limit: usize,
}

impl Default for MpcsOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            mode: CoreMode::Generate,
            max_iterations: 1000,
            convergence: 1e-7,
            separation_limit: SEPARATION_LIMIT,
        }
    }
}

/// `Σ_{l∈members} u_l ≤ cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapRow {
    pub members: Coalition,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStep {
    pub iteration: usize,
    /// Worst violation of the master solution.
    pub violation: f64,
    /// Blocking coalition added, or `None` on the final step.
    pub added: Option<Coalition>,
    pub utilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationLog {
    pub mode: CoreMode,
    pub epsilon: f64,
    pub winners: Coalition,
    pub vcg: Vec<f64>,
    pub initial_rows: usize,
    pub rows: Vec<CapRow>,
    pub steps: Vec<GenerationStep>,
}

impl GenerationLog {
    /// Re-solves the master problem on the logged rows.
    pub fn replay(&self) -> Result<Vec<f64>> {
        mpcs_master(&self.rows, &self.vcg, self.winners, self.epsilon)
    }

    pub fn rows_added(&self) -> usize {
        self.rows.len() - self.initial_rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcsResult {
    pub outcome: PaymentOutcome,
    pub log: GenerationLog,
}

/// Maximizes `Σ u_l − ε ‖u − ū^VCG‖²` subject to `rows` and `u ≥ 0`,
/// with bidders outside `free` held at zero.
pub fn mpcs_master(rows: &[CapRow], vcg: &[f64], free: Coalition, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let vars: Vec<usize> = free.members().collect();
    let mut p = QpProblem::new(vars.len());
    for (i, &l) in vars.iter().enumerate() {
        p.add_hessian(i, i, 2.0 * epsilon);
        p.add_linear(i, -1.0 - 2.0 * epsilon * vcg[l]);
        p.set_bounds(i, 0.0, f64::INFINITY);
    }
    for row in rows {
        let a: Vec<f64> = vars.iter().map(|&l| if row.members.contains(l) { 1.0 } else { 0.0 }).collect();
        if a.iter().all(|&v| v == 0.0) {
            if row.cap < -scaled_tol(1e-9, row.cap) {
                return Err(Error::EmptyPolytope);
            }
            continue;
        }
        p.add_le(a, row.cap)?;
    }
    let opts = QpOptions::default();
    let sol = match qp::solve(&p, &opts) {
        Ok(s) => s,
        Err(QpError::Infeasible(_)) => return Err(Error::EmptyPolytope),
        Err(e) => return Err(e.into()),
    };
    let mut u = vec![0.0; vcg.len()];
    for (i, &l) in vars.iter().enumerate() {
        u[l] = sol.x[i].max(0.0);
    }
    Ok(u)
}

/// Default ε for an optimum of value `objective`.
pub fn default_epsilon(objective: f64) -> f64 {
    scaled_tol(1e-6, objective)
}

pub fn mpcs_with(clearing: &Clearing<'_>, options: &MpcsOptions) -> Result<MpcsResult> {
    let n = clearing.num_bidders();
    let j = clearing.objective();
    let full = clearing.full();
    let winners = clearing.winners();
    let vcg = clearing.vcg_utilities()?;
    let epsilon = options.epsilon.unwrap_or_else(|| default_epsilon(j));
    if winners.len() > options.separation_limit {
        return Err(Error::CapExceeded {
            needed: 1u128 << winners.len(),
            cap: 1u128 << options.separation_limit,
        });
    }
    let cap_row = |blocking: Coalition, value: f64| CapRow {
        members: full.difference(blocking),
        cap: value - j,
    };

    let mut rows: Vec<CapRow> = Vec::new();
    match options.mode {
        CoreMode::Enumerate => {
            let removed: Vec<Coalition> = winners.subsets().filter(|k| !k.is_empty()).collect();
            let blocking: Vec<Coalition> = removed.iter().map(|&k| full.difference(k)).collect();
            let vals = clearing.values.values(&blocking)?;
            for (s, v) in blocking.into_iter().zip(vals) {
                if v.is_finite() {
                    rows.push(cap_row(s, v));
                }
            }
        }
        CoreMode::Generate => {
            for l in winners.members() {
                rows.push(CapRow {
                    members: Coalition::singleton(l),
                    cap: vcg[l],
                });
            }
        }
    }
    let initial_rows = rows.len();
    let tol = scaled_tol(options.convergence, j);
    let mut steps = Vec::new();
    let utilities = loop {
        let u = mpcs_master(&rows, &vcg, winners, epsilon)?;
        if options.mode == CoreMode::Enumerate {
            steps.push(GenerationStep {
                iteration: 0,
                violation: 0.0,
                added: None,
                utilities: u.clone(),
            });
            break u;
        }
        let operator = -j - u.iter().sum::<f64>();
        let sep = separation_oracle(&clearing.values, winners, &u, operator, options.separation_limit)?;
        let iteration = steps.len();
        if sep.violation <= tol {
            steps.push(GenerationStep {
                iteration,
                violation: sep.violation,
                added: None,
                utilities: u.clone(),
            });
            break u;
        }
        if iteration + 1 >= options.max_iterations {
            return Err(Error::IterationLimit {
                iterations: iteration + 1,
                violation: sep.violation,
            });
        }
        let value = clearing.values.value(sep.coalition)?;
        let row = cap_row(sep.coalition, value);
        if rows.iter().any(|r| r.members == row.members) {
            // the master already enforces this row, so the violation is
            // solver noise
            return Err(Error::IterationLimit {
                iterations: iteration + 1,
                violation: sep.violation,
            });
        }
        log::debug!("mpcs iteration {iteration}: adding {:?} (violation {})", sep.coalition, sep.violation);
        steps.push(GenerationStep {
            iteration,
            violation: sep.violation,
            added: Some(sep.coalition),
            utilities: u,
        });
        rows.push(row);
    };
    debug_assert_eq!(utilities.len(), n);
    Ok(MpcsResult {
        outcome: PaymentOutcome::from_utilities(Mechanism::Mpcs, clearing, utilities),
        log: GenerationLog {
            mode: options.mode,
            epsilon,
            winners,
            vcg,
            initial_rows,
            rows,
            steps,
        },
    })
}

/// Maximum-payment core-selecting rule.
pub fn mpcs(instance: &MarketInstance, options: &MpcsOptions) -> Result<MpcsResult> {
    mpcs_with(&Clearing::new(instance)?, options)
}
