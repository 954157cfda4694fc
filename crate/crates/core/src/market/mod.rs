//! Market descriptions: bids, networks, side constraints and their file form.

pub mod curve;
pub mod instance;
pub mod io;
pub mod replicate;
pub mod validate;

pub use curve::{BidCurve, Offer, QuadraticTerm};
pub use instance::{
    Bidder, Line, LinearConstraint, MarketInstance, MarketKind, Network, Recourse,
    RecourseVariable, Scenario, Sense,
};
pub use io::{emit_market, parse_market, ParsedMarket};
pub use replicate::replicate_instance;
pub use validate::{validate_instance, ValidationReport, Violation};
