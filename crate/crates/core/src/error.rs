use thiserror::Error;

use crate::qp::QpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quantity {quantity:?} is outside the admissible set of the curve")]
    OutOfDomain { quantity: Vec<f64> },

    #[error("invalid bid curve: {0}")]
    InvalidCurve(String),

    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("unknown {kind} '{name}'")]
    UnknownReference { kind: &'static str, name: String },

    #[error("unsupported market structure: {0}")]
    UnsupportedStructure(String),

    #[error("network is not connected: node '{0}' is unreachable from the reference node")]
    DisconnectedNetwork(String),

    #[error("quadratic bid of '{0}' has a negative curvature coefficient")]
    NonconvexUnsupported(String),

    #[error("enumeration needs {needed} evaluations, cap is {cap}")]
    CapExceeded { needed: u128, cap: u128 },

    #[error("dispatch becomes infeasible when bidder '{0}' is removed")]
    RemovalInfeasible(String),

    #[error("dispatch is infeasible")]
    Infeasible,

    #[error("LMP requires convex bids; '{0}' is not convex")]
    NonconvexBids(String),

    #[error("nodal duals unavailable: {0}")]
    DualsUnavailable(String),

    #[error("constraint generation stopped after {iterations} iterations (violation {violation})")]
    IterationLimit { iterations: usize, violation: f64 },

    #[error("core rows describe an empty polytope")]
    EmptyPolytope,

    #[error("bidder '{0}' has no true cost curve")]
    MissingTrueCurve(String),

    #[error("bidder '{0}' is not allocated under truthful bidding")]
    LosingBidder(String),

    #[error("utility vector is not in the core (worst violation {0})")]
    NotCoreMember(f64),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("solver failure: {0}")]
    Solver(#[from] QpError),
}
