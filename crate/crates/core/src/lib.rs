//! Market clearing and payment rules for auctions and exchanges.
//!
//! The crate solves the economic dispatch of a market (optionally on a DC
//! network), computes payments under pay-as-bid, locational marginal
//! pricing, VCG and maximum-payment core-selecting rules, and checks the
//! properties those rules are known to satisfy on concrete instances.
//!
//! ```
//! use coremarket::market::{BidCurve, Bidder, LinearConstraint, MarketInstance, MarketKind, Sense};
//! use coremarket::mechanisms::vcg;
//!
//! let market = MarketInstance::new(
//!     "pair",
//!     MarketKind::Exchange,
//!     vec![
//!         Bidder::new("S", BidCurve::quadratic(0.0, 1.0, 0.0, 1.0)),
//!         Bidder::new("B", BidCurve::quadratic(0.0, 3.0, -1.0, 0.0)),
//!     ],
//! )
//! .with_constraint(LinearConstraint::new("balance", [("S", 1.0), ("B", 1.0)], Sense::Eq, 0.0));
//!
//! let outcome = vcg(&market).unwrap();
//! assert!((outcome.payments[0] - 3.0).abs() < 1e-9);
//! assert!((outcome.operator_utility + 2.0).abs() < 1e-9);
//! ```

pub mod analysis;
pub mod dispatch;
pub mod error;
pub mod linalg;
pub mod market;
pub mod mechanisms;
pub mod qp;
pub mod scalar;

/// Absolute comparison tolerance, scaled by `max(1, |magnitude|)`.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

pub type QpProblem64 = qp::QpProblem<f64>;
pub type QpProblem32 = qp::QpProblem<f32>;
pub type QpSolution64 = qp::QpSolution<f64>;
pub type QpSolution32 = qp::QpSolution<f32>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;

pub use error::{Error, Result};
pub use market::{BidCurve, Bidder, MarketInstance, MarketKind};
