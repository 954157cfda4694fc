//! Market description files.
//!
//! Scenarios are TOML documents with the sections `meta`, `network`,
//! `bidders`, `constraints` and `recourse`; `docs/market-format.md` in the
//! repository lists every field. Unknown fields are reported as warnings and
//! otherwise ignored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::curve::{BidCurve, Offer, QuadraticTerm};
use crate::market::instance::{
    Bidder, LinearConstraint, Line, MarketInstance, MarketKind, Network, Recourse,
    RecourseVariable, Scenario, Sense,
};
use crate::DEFAULT_TOLERANCE;

#[derive(Debug, Serialize, Deserialize)]
struct MarketFile {
    meta: MetaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    network: Option<NetworkSpec>,
    #[serde(default)]
    bidders: Vec<BidderSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    constraints: Vec<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recourse: Option<RecourseSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaSpec {
    #[serde(default)]
    name: String,
    kind: KindSpec,
    #[serde(default = "default_currency")]
    currency: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
}

fn default_currency() -> String {
    "USD".into()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindSpec {
    OneSided,
    Exchange,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkSpec {
    nodes: Vec<String>,
    reference: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    demand: BTreeMap<String, f64>,
    #[serde(default)]
    lines: Vec<LineSpec>,
}

fn default_true() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

fn infinite() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Serialize, Deserialize)]
struct LineSpec {
    from: String,
    to: String,
    #[serde(default = "one")]
    susceptance: f64,
    #[serde(default = "infinite")]
    limit: f64,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    bidirectional: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
struct BidderSpec {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node: Option<String>,
    curve: CurveSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_curve: Option<CurveSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum CurveSpec {
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        terms: Option<Vec<TermSpec>>,
    },
    PiecewiseLinear {
        breakpoints: Vec<[f64; 2]>,
    },
    Discrete {
        offers: Vec<OfferSpec>,
    },
    FixedCharge {
        charge: f64,
        base: Box<CurveSpec>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct TermSpec {
    #[serde(default)]
    a: f64,
    #[serde(default)]
    b: f64,
    #[serde(default)]
    lower: f64,
    #[serde(default = "infinite")]
    upper: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct OfferSpec {
    quantity: Vec<f64>,
    price: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConstraintSpec {
    #[serde(default)]
    name: String,
    sense: SenseSpec,
    rhs: f64,
    terms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SenseSpec {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecourseSpec {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    x_linear: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    scenarios: Vec<ScenarioSpec>,
    #[serde(default)]
    variables: Vec<RecourseVarSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioSpec {
    name: String,
    weight: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecourseVarSpec {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenario: Option<String>,
    #[serde(default)]
    lower: f64,
    #[serde(default = "infinite")]
    upper: f64,
    #[serde(default)]
    linear: f64,
    #[serde(default)]
    quadratic: f64,
}

/// A parsed scenario together with non-fatal diagnostics.
#[derive(Debug, Clone)]
pub struct ParsedMarket {
    pub instance: MarketInstance,
    pub warnings: Vec<String>,
}

fn schema(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        location: location.into(),
        message: message.into(),
    }
}

/// Parses a market description.
pub fn parse_market(bytes: &[u8]) -> Result<ParsedMarket> {
    let text = std::str::from_utf8(bytes).map_err(|e| schema("document", e.to_string()))?;
    let de = toml::Deserializer::parse(text).map_err(|e| schema("document", e.to_string()))?;
    let mut warnings = Vec::new();
    let file: MarketFile = serde_ignored::deserialize(de, |path| {
        warnings.push(format!("ignoring unknown field `{path}`"));
    })
    .map_err(|e| schema("document", e.to_string().trim_end().to_string()))?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ParsedMarket {
        instance: from_file(file)?,
        warnings,
    })
}

fn curve_from_spec(spec: CurveSpec, location: &str) -> Result<BidCurve> {
    let curve = match spec {
        CurveSpec::Quadratic {
            a,
            b,
            lower,
            upper,
            terms,
        } => match terms {
            Some(terms) => {
                if a.is_some() || b.is_some() || lower.is_some() || upper.is_some() {
                    return Err(schema(location, "use either `terms` or scalar coefficients"));
                }
                BidCurve::Quadratic(
                    terms
                        .into_iter()
                        .map(|t| QuadraticTerm {
                            a: t.a,
                            b: t.b,
                            lower: t.lower,
                            upper: t.upper,
                        })
                        .collect(),
                )
            }
            None => BidCurve::quadratic(
                a.unwrap_or(0.0),
                b.unwrap_or(0.0),
                lower.unwrap_or(0.0),
                upper.unwrap_or(f64::INFINITY),
            ),
        },
        CurveSpec::PiecewiseLinear { breakpoints } => {
            BidCurve::PiecewiseLinear(breakpoints.into_iter().map(|[q, c]| (q, c)).collect())
        }
        CurveSpec::Discrete { offers } => BidCurve::DiscreteOffers(
            offers
                .into_iter()
                .map(|o| Offer {
                    quantity: o.quantity,
                    price: o.price,
                })
                .collect(),
        ),
        CurveSpec::FixedCharge { charge, base } => {
            BidCurve::fixed_charge(curve_from_spec(*base, &format!("{location}.base"))?, charge)
        }
    };
    curve
        .check()
        .map_err(|e| schema(location, e.to_string()))?;
    Ok(curve)
}

fn curve_to_spec(curve: &BidCurve) -> CurveSpec {
    match curve {
        BidCurve::Quadratic(terms) if terms.len() == 1 => {
            let t = &terms[0];
            CurveSpec::Quadratic {
                a: Some(t.a),
                b: Some(t.b),
                lower: Some(t.lower),
                upper: Some(t.upper),
                terms: None,
            }
        }
        BidCurve::Quadratic(terms) => CurveSpec::Quadratic {
            a: None,
            b: None,
            lower: None,
            upper: None,
            terms: Some(
                terms
                    .iter()
                    .map(|t| TermSpec {
                        a: t.a,
                        b: t.b,
                        lower: t.lower,
                        upper: t.upper,
                    })
                    .collect(),
            ),
        },
        BidCurve::PiecewiseLinear(bp) => CurveSpec::PiecewiseLinear {
            breakpoints: bp.iter().map(|&(q, c)| [q, c]).collect(),
        },
        BidCurve::DiscreteOffers(offers) => CurveSpec::Discrete {
            offers: offers
                .iter()
                .map(|o| OfferSpec {
                    quantity: o.quantity.clone(),
                    price: o.price,
                })
                .collect(),
        },
        BidCurve::FixedCharge { base, charge } => CurveSpec::FixedCharge {
            charge: *charge,
            base: Box::new(curve_to_spec(base)),
        },
    }
}

fn from_file(file: MarketFile) -> Result<MarketInstance> {
    let kind = match file.meta.kind {
        KindSpec::OneSided => MarketKind::OneSided,
        KindSpec::Exchange => MarketKind::Exchange,
    };
    let tolerance = file.meta.tolerance.unwrap_or(DEFAULT_TOLERANCE);
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(schema("meta.tolerance", "must be a positive number"));
    }
    let mut bidders = Vec::with_capacity(file.bidders.len());
    for (i, b) in file.bidders.into_iter().enumerate() {
        let loc = format!("bidders[{i}]");
        let curve = curve_from_spec(b.curve, &format!("{loc}.curve"))?;
        let true_curve = b
            .true_curve
            .map(|c| curve_from_spec(c, &format!("{loc}.true_curve")))
            .transpose()?;
        bidders.push(Bidder {
            id: b.id,
            node: b.node,
            curve,
            true_curve,
        });
    }
    let network = file.network.map(|n| Network {
        nodes: n.nodes,
        reference: n.reference,
        demand: n.demand,
        lines: n
            .lines
            .into_iter()
            .map(|l| Line {
                from: l.from,
                to: l.to,
                susceptance: l.susceptance,
                limit: l.limit,
                bidirectional: l.bidirectional,
            })
            .collect(),
    });
    let constraints = file
        .constraints
        .into_iter()
        .map(|c| LinearConstraint {
            name: c.name,
            terms: c.terms,
            sense: match c.sense {
                SenseSpec::Le => Sense::Le,
                SenseSpec::Ge => Sense::Ge,
                SenseSpec::Eq => Sense::Eq,
            },
            rhs: c.rhs,
        })
        .collect();
    let recourse = file.recourse.map(|r| Recourse {
        x_linear: r.x_linear,
        scenarios: r
            .scenarios
            .into_iter()
            .map(|s| Scenario {
                name: s.name,
                weight: s.weight,
            })
            .collect(),
        variables: r
            .variables
            .into_iter()
            .map(|v| RecourseVariable {
                name: v.name,
                scenario: v.scenario,
                lower: v.lower,
                upper: v.upper,
                linear: v.linear,
                quadratic: v.quadratic,
            })
            .collect(),
    });
    Ok(MarketInstance {
        name: file.meta.name,
        kind,
        currency: file.meta.currency,
        tolerance,
        bidders,
        network,
        constraints,
        recourse,
    })
}

/// Serialises an instance in canonical form.
pub fn emit_market(instance: &MarketInstance) -> Result<String> {
    let file = MarketFile {
        meta: MetaSpec {
            name: instance.name.clone(),
            kind: match instance.kind {
                MarketKind::OneSided => KindSpec::OneSided,
                MarketKind::Exchange => KindSpec::Exchange,
            },
            currency: instance.currency.clone(),
            tolerance: (instance.tolerance != DEFAULT_TOLERANCE).then_some(instance.tolerance),
        },
        network: instance.network.as_ref().map(|n| NetworkSpec {
            nodes: n.nodes.clone(),
            reference: n.reference.clone(),
            demand: n.demand.clone(),
            lines: n
                .lines
                .iter()
                .map(|l| LineSpec {
                    from: l.from.clone(),
                    to: l.to.clone(),
                    susceptance: l.susceptance,
                    limit: l.limit,
                    bidirectional: l.bidirectional,
                })
                .collect(),
        }),
        bidders: instance
            .bidders
            .iter()
            .map(|b| BidderSpec {
                id: b.id.clone(),
                node: b.node.clone(),
                curve: curve_to_spec(&b.curve),
                true_curve: b.true_curve.as_ref().map(curve_to_spec),
            })
            .collect(),
        constraints: instance
            .constraints
            .iter()
            .map(|c| ConstraintSpec {
                name: c.name.clone(),
                sense: match c.sense {
                    Sense::Le => SenseSpec::Le,
                    Sense::Ge => SenseSpec::Ge,
                    Sense::Eq => SenseSpec::Eq,
                },
                rhs: c.rhs,
                terms: c.terms.clone(),
            })
            .collect(),
        recourse: instance.recourse.as_ref().map(|r| RecourseSpec {
            x_linear: r.x_linear.clone(),
            scenarios: r
                .scenarios
                .iter()
                .map(|s| ScenarioSpec {
                    name: s.name.clone(),
                    weight: s.weight,
                })
                .collect(),
            variables: r
                .variables
                .iter()
                .map(|v| RecourseVarSpec {
                    name: v.name.clone(),
                    scenario: v.scenario.clone(),
                    lower: v.lower,
                    upper: v.upper,
                    linear: v.linear,
                    quadratic: v.quadratic,
                })
                .collect(),
        }),
    };
    toml::to_string(&file).map_err(|e| schema("document", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[meta]
name = "pair"
kind = "exchange"

[[bidders]]
id = "S"
curve = { type = "quadratic", a = 0.0, b = 1.0, lower = 0.0, upper = 1.0 }

[[bidders]]
id = "B"
curve = { type = "quadratic", a = 0.0, b = 3.0, lower = -1.0, upper = 0.0 }

[[constraints]]
name = "balance"
sense = "eq"
rhs = 0.0
terms = { S = 1.0, B = 1.0 }
"#;

    #[test]
    fn parses_minimal_exchange() {
        let parsed = parse_market(SMALL.as_bytes()).unwrap();
        assert!(parsed.warnings.is_empty());
        let m = parsed.instance;
        assert_eq!(m.kind, MarketKind::Exchange);
        assert_eq!(m.bidders.len(), 2);
        assert_eq!(m.bidders[1].curve, BidCurve::quadratic(0.0, 3.0, -1.0, 0.0));
        assert_eq!(m.constraints[0].terms.len(), 2);
    }

    #[test]
    fn unknown_fields_warn() {
        let text = SMALL.replace("kind = \"exchange\"", "kind = \"exchange\"\noperator = \"tso\"");
        let parsed = parse_market(text.as_bytes()).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.warnings[0].contains("meta.operator"));
    }

    #[test]
    fn empty_document_is_a_schema_error() {
        let err = parse_market(b"").unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
        assert!(err.to_string().contains("meta"));
    }

    #[test]
    fn bad_curve_reports_location() {
        let text = SMALL.replace("lower = -1.0, upper = 0.0", "lower = -1.0, upper = -0.5");
        let err = parse_market(text.as_bytes()).unwrap_err();
        match err {
            Error::Schema { location, .. } => assert_eq!(location, "bidders[1].curve"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_line() {
        let err = parse_market(b"[meta]\nkind = \n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn emit_is_a_fixed_point() {
        let m = parse_market(SMALL.as_bytes()).unwrap().instance;
        let text = emit_market(&m).unwrap();
        let again = parse_market(text.as_bytes()).unwrap().instance;
        assert_eq!(again, m);
        assert_eq!(emit_market(&again).unwrap(), text);
    }
}
