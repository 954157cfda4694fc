//! Bid and cost curves.

use crate::error::{Error, Result};
use crate::scalar::scaled_tol;
use crate::DEFAULT_TOLERANCE;

/// One separable component `a x² + b x` on `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTerm {
    pub a: f64,
    pub b: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offer {
    pub quantity: Vec<f64>,
    pub price: f64,
}

/// A reported (or true) cost function over a bidder's quantity vector.
///
/// Every variant evaluates to zero at the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub enum BidCurve {
    /// Separable quadratic, one term per supply type.
    Quadratic(Vec<QuadraticTerm>),
    /// Convex piecewise-linear cost over a scalar quantity; breakpoints are
    /// `(quantity, cumulative cost)` starting at `(0, 0)`.
    PiecewiseLinear(Vec<(f64, f64)>),
    /// Exclusive offers: at most one is accepted, or none at zero cost.
    DiscreteOffers(Vec<Offer>),
    /// `base(x) + charge` for `x != 0`, and `0` at `x = 0`.
    FixedCharge { base: Box<BidCurve>, charge: f64 },
}

impl BidCurve {
    pub fn quadratic(a: f64, b: f64, lower: f64, upper: f64) -> Self {
        BidCurve::Quadratic(vec![QuadraticTerm { a, b, lower, upper }])
    }

    pub fn piecewise_linear(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        let curve = BidCurve::PiecewiseLinear(breakpoints);
        curve.check()?;
        Ok(curve)
    }

    pub fn discrete(offers: Vec<Offer>) -> Result<Self> {
        let curve = BidCurve::DiscreteOffers(offers);
        curve.check()?;
        Ok(curve)
    }

    pub fn fixed_charge(base: BidCurve, charge: f64) -> Self {
        BidCurve::FixedCharge {
            base: Box::new(base),
            charge,
        }
    }

    /// Number of supply types the curve is defined over.
    pub fn dim(&self) -> usize {
        match self {
            BidCurve::Quadratic(terms) => terms.len(),
            BidCurve::PiecewiseLinear(_) => 1,
            BidCurve::DiscreteOffers(offers) => offers.first().map_or(1, |o| o.quantity.len()),
            BidCurve::FixedCharge { base, .. } => base.dim(),
        }
    }

    /// Convex curves are cleared by the continuous solver and admit duals.
    pub fn is_convex(&self) -> bool {
        match self {
            BidCurve::Quadratic(terms) => terms.iter().all(|t| t.a >= 0.0),
            BidCurve::PiecewiseLinear(_) => true,
            BidCurve::DiscreteOffers(_) | BidCurve::FixedCharge { .. } => false,
        }
    }

    /// Checks structural invariants of the variant.
    pub fn check(&self) -> Result<()> {
        match self {
            BidCurve::Quadratic(terms) => {
                if terms.is_empty() {
                    return Err(Error::InvalidCurve("quadratic curve without terms".into()));
                }
                for t in terms {
                    if !t.a.is_finite() || !t.b.is_finite() {
                        return Err(Error::InvalidCurve("non-finite coefficient".into()));
                    }
                    if t.lower.is_nan() || t.upper.is_nan() || t.lower > 0.0 || t.upper < 0.0 {
                        return Err(Error::InvalidCurve(format!(
                            "domain [{}, {}] must contain 0",
                            t.lower, t.upper
                        )));
                    }
                }
            }
            BidCurve::PiecewiseLinear(bp) => {
                if bp.first() != Some(&(0.0, 0.0)) {
                    return Err(Error::InvalidCurve("first breakpoint must be (0, 0)".into()));
                }
                let mut last_slope = f64::NEG_INFINITY;
                for w in bp.windows(2) {
                    let (q0, c0) = w[0];
                    let (q1, c1) = w[1];
                    if !(q1 > q0) || !c1.is_finite() {
                        return Err(Error::InvalidCurve(
                            "breakpoint quantities must be strictly increasing".into(),
                        ));
                    }
                    let slope = (c1 - c0) / (q1 - q0);
                    if slope < last_slope - scaled_tol(DEFAULT_TOLERANCE, slope) {
                        return Err(Error::InvalidCurve("slopes must be nondecreasing".into()));
                    }
                    last_slope = slope;
                }
            }
            BidCurve::DiscreteOffers(offers) => {
                let dim = self.dim();
                for o in offers {
                    if !o.price.is_finite() || o.quantity.iter().any(|q| !q.is_finite()) {
                        return Err(Error::InvalidCurve("offers must be finite".into()));
                    }
                    if o.quantity.len() != dim || dim == 0 {
                        return Err(Error::InvalidCurve("offer dimensions differ".into()));
                    }
                }
            }
            BidCurve::FixedCharge { base, charge } => {
                if !charge.is_finite() {
                    return Err(Error::InvalidCurve("fixed charge must be finite".into()));
                }
                base.check()?;
            }
        }
        Ok(())
    }

    /// Smallest admissible value per component (negative means buying).
    pub fn lower_bounds(&self) -> Vec<f64> {
        match self {
            BidCurve::Quadratic(terms) => terms.iter().map(|t| t.lower).collect(),
            BidCurve::PiecewiseLinear(_) => vec![0.0],
            BidCurve::DiscreteOffers(offers) => {
                let mut lo = vec![0.0f64; self.dim()];
                for o in offers {
                    for (l, q) in lo.iter_mut().zip(&o.quantity) {
                        *l = (*l).min(*q);
                    }
                }
                lo
            }
            BidCurve::FixedCharge { base, .. } => base.lower_bounds(),
        }
    }

    /// Largest admissible value per component.
    pub fn upper_bounds(&self) -> Vec<f64> {
        match self {
            BidCurve::Quadratic(terms) => terms.iter().map(|t| t.upper).collect(),
            BidCurve::PiecewiseLinear(bp) => vec![bp.last().map_or(0.0, |p| p.0)],
            BidCurve::DiscreteOffers(offers) => {
                let mut hi = vec![0.0f64; self.dim()];
                for o in offers {
                    for (h, q) in hi.iter_mut().zip(&o.quantity) {
                        *h = (*h).max(*q);
                    }
                }
                hi
            }
            BidCurve::FixedCharge { base, .. } => base.upper_bounds(),
        }
    }

    /// Evaluates the curve; errors when `x` is not admissible.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let out = || Error::OutOfDomain {
            quantity: x.to_vec(),
        };
        if x.len() != self.dim() {
            return Err(out());
        }
        let is_zero = x.iter().all(|&v| v == 0.0);
        match self {
            BidCurve::Quadratic(terms) => {
                let mut total = 0.0;
                for (t, &v) in terms.iter().zip(x) {
                    let tol = scaled_tol(DEFAULT_TOLERANCE, v);
                    if v < t.lower - tol || v > t.upper + tol {
                        return Err(out());
                    }
                    total += t.a * v * v + t.b * v;
                }
                Ok(total)
            }
            BidCurve::PiecewiseLinear(bp) => {
                let v = x[0];
                let tol = scaled_tol(DEFAULT_TOLERANCE, v);
                let last = bp.last().map_or(0.0, |p| p.0);
                if v < -tol || v > last + tol {
                    return Err(out());
                }
                let v = v.clamp(0.0, last);
                for w in bp.windows(2) {
                    let (q0, c0) = w[0];
                    let (q1, c1) = w[1];
                    if v <= q1 {
                        return Ok(c0 + (c1 - c0) * (v - q0) / (q1 - q0));
                    }
                }
                Ok(bp.last().map_or(0.0, |p| p.1))
            }
            BidCurve::DiscreteOffers(offers) => {
                if is_zero {
                    return Ok(0.0);
                }
                offers
                    .iter()
                    .filter(|o| {
                        o.quantity
                            .iter()
                            .zip(x)
                            .all(|(q, v)| (q - v).abs() <= scaled_tol(DEFAULT_TOLERANCE, *q))
                    })
                    .map(|o| o.price)
                    .fold(None, |best: Option<f64>, p| Some(best.map_or(p, |b| b.min(p))))
                    .ok_or_else(out)
            }
            BidCurve::FixedCharge { base, charge } => {
                if is_zero {
                    Ok(0.0)
                } else {
                    Ok(base.evaluate(x)? + charge)
                }
            }
        }
    }

    /// Slopes of the piecewise-linear segments.
    pub fn segment_slopes(&self) -> Option<Vec<f64>> {
        match self {
            BidCurve::PiecewiseLinear(bp) => Some(
                bp.windows(2)
                    .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Piecewise-linear cost as the maximum of its affine supports, the
    /// epigraph form of the same curve.
    pub fn max_affine_support(&self, v: f64) -> Option<f64> {
        let BidCurve::PiecewiseLinear(bp) = self else {
            return None;
        };
        if bp.len() < 2 {
            return Some(0.0);
        }
        bp.windows(2)
            .map(|w| {
                let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                w[0].1 + slope * (v - w[0].0)
            })
            .fold(None, |m: Option<f64>, y| Some(m.map_or(y, |m| m.max(y))))
    }

    /// `k · curve(x) + shift · Σx` for quadratic curves (used to build
    /// unilateral misreports). Other variants are scaled only.
    pub fn distorted(&self, scale: f64, shift: f64) -> BidCurve {
        match self {
            BidCurve::Quadratic(terms) => BidCurve::Quadratic(
                terms
                    .iter()
                    .map(|t| QuadraticTerm {
                        a: t.a * scale,
                        b: t.b * scale + shift,
                        lower: t.lower,
                        upper: t.upper,
                    })
                    .collect(),
            ),
            BidCurve::PiecewiseLinear(bp) => {
                BidCurve::PiecewiseLinear(bp.iter().map(|&(q, c)| (q, c * scale)).collect())
            }
            BidCurve::DiscreteOffers(offers) => BidCurve::DiscreteOffers(
                offers
                    .iter()
                    .map(|o| Offer {
                        quantity: o.quantity.clone(),
                        price: o.price * scale,
                    })
                    .collect(),
            ),
            BidCurve::FixedCharge { base, charge } => BidCurve::FixedCharge {
                base: Box::new(base.distorted(scale, shift)),
                charge: charge * scale,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_values() {
        let c = BidCurve::quadratic(5.0, 4.0, 0.0, f64::INFINITY);
        assert_eq!(c.evaluate(&[1.0]).unwrap(), 9.0);
        assert_eq!(c.evaluate(&[0.0]).unwrap(), 0.0);
        let demand = BidCurve::quadratic(1.0, 20.0, -8.0, 0.0);
        let v = demand.evaluate(&[-5.16]).unwrap();
        assert!((v - (-76.5744)).abs() < 1e-9);
        assert_eq!(format!("{v:.2}"), "-76.57");
        assert!(matches!(c.evaluate(&[-1.0]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn piecewise_linear_evaluation_and_checks() {
        let c = BidCurve::piecewise_linear(vec![(0.0, 0.0), (1.0, 2.0), (3.0, 8.0)]).unwrap();
        assert_eq!(c.evaluate(&[0.5]).unwrap(), 1.0);
        assert_eq!(c.evaluate(&[2.0]).unwrap(), 5.0);
        assert!(c.evaluate(&[3.5]).is_err());
        assert!(BidCurve::piecewise_linear(vec![(0.0, 0.0), (1.0, 3.0), (2.0, 4.0)]).is_err());
        assert!(BidCurve::piecewise_linear(vec![(1.0, 0.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn discrete_offers_are_exclusive() {
        let c = BidCurve::discrete(vec![
            Offer {
                quantity: vec![2.0],
                price: 7.0,
            },
            Offer {
                quantity: vec![5.0],
                price: 15.0,
            },
        ])
        .unwrap();
        assert_eq!(c.evaluate(&[0.0]).unwrap(), 0.0);
        assert_eq!(c.evaluate(&[5.0]).unwrap(), 15.0);
        assert!(c.evaluate(&[7.0]).is_err());
        assert!(!c.is_convex());
    }

    #[test]
    fn fixed_charge_is_zero_at_origin() {
        let c = BidCurve::fixed_charge(BidCurve::quadratic(1.0, 1.0, 0.0, 10.0), 3.0);
        assert_eq!(c.evaluate(&[0.0]).unwrap(), 0.0);
        assert_eq!(c.evaluate(&[1.0]).unwrap(), 5.0);
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(BidCurve::quadratic(1.0, 1.0, 1.0, 2.0).check().is_err());
        assert!(BidCurve::quadratic(-1.0, 1.0, 0.0, 2.0).check().is_ok());
        assert!(!BidCurve::quadratic(-1.0, 1.0, 0.0, 2.0).is_convex());
    }
}
