//! JSON documents for graphs and attacks.
//!
//! Numbers may be decimal strings (`"1.5"`), `p/q` strings, plain JSON
//! numbers, or `{"num": p, "den": q}` objects. Rationals are kept exact.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::{AttackSpec, GraphBuilder, OperatorId, RestakingGraph, ServiceId};
use crate::error::{Error, Result};
use crate::scalar::{parse_decimal, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntDoc {
    Int(i64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberDoc {
    Ratio { num: IntDoc, den: IntDoc },
    Text(String),
    Plain(serde_json::Number),
}

impl NumberDoc {
    pub fn to_rational(&self) -> Result<BigRational> {
        let parsed = match self {
            NumberDoc::Ratio { num, den } => {
                let num = int_value(num)?;
                let den = int_value(den)?;
                if den.is_zero() {
                    return Err(Error::Parse("rational with zero denominator".into()));
                }
                Some(BigRational::new(num, den))
            }
            NumberDoc::Text(text) => parse_decimal(text),
            NumberDoc::Plain(number) => parse_decimal(&number.to_string()),
        };
        parsed.ok_or_else(|| Error::Parse(format!("not a number: {self:?}")))
    }

    pub fn from_scalar<T: Scalar>(value: &T) -> Self {
        if T::is_exact() {
            if let Some(r) = parse_decimal(&value.render()) {
                let int = |b: &BigInt| b.to_i64().map(IntDoc::Int).unwrap_or_else(|| IntDoc::Text(b.to_string()));
                return NumberDoc::Ratio { num: int(r.numer()), den: int(r.denom()) };
            }
        }
        NumberDoc::Text(value.render())
    }
}

fn int_value(doc: &IntDoc) -> Result<BigInt> {
    match doc {
        IntDoc::Int(i) => Ok(BigInt::from(*i)),
        IntDoc::Text(t) => t.trim().parse().map_err(|_| Error::Parse(format!("not an integer: `{t}`"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceDoc {
    pub id: String,
    pub pi: NumberDoc,
    pub alpha: NumberDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorDoc {
    pub id: String,
    pub stake: NumberDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub services: Vec<ServiceDoc>,
    pub operators: Vec<OperatorDoc>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackerDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<NumberDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackDoc {
    #[serde(default)]
    pub services: Vec<String>,
    #[serde(default)]
    pub attackers: Vec<AttackerDoc>,
}

impl GraphDoc {
    pub fn into_graph<T: Scalar>(&self) -> Result<RestakingGraph<T>> {
        let mut builder = GraphBuilder::new();
        for s in &self.services {
            builder.add_service(s.id.as_str(), scalar(&s.pi)?, scalar(&s.alpha)?);
        }
        for v in &self.operators {
            builder.add_operator(v.id.as_str(), scalar(&v.stake)?);
        }
        for (s, v) in &self.edges {
            builder.add_edge(s.as_str(), v.as_str());
        }
        builder.build()
    }

    pub fn from_graph<T: Scalar>(graph: &RestakingGraph<T>) -> Self {
        Self {
            services: graph
                .services()
                .map(|(id, s)| ServiceDoc {
                    id: id.to_string(),
                    pi: NumberDoc::from_scalar(&s.pi),
                    alpha: NumberDoc::from_scalar(&s.alpha),
                })
                .collect(),
            operators: graph
                .operators()
                .map(|(id, v)| OperatorDoc { id: id.to_string(), stake: NumberDoc::from_scalar(&v.stake) })
                .collect(),
            edges: graph.edges().map(|(s, v)| (s.to_string(), v.to_string())).collect(),
        }
    }
}

impl AttackDoc {
    /// Missing `x` defaults to the operator's full stake.
    pub fn into_attack<T: Scalar>(&self, graph: &RestakingGraph<T>) -> Result<AttackSpec<T>> {
        let services: BTreeSet<ServiceId> = self.services.iter().map(|s| ServiceId::from(s.as_str())).collect();
        let mut attackers = BTreeMap::new();
        for a in &self.attackers {
            let id = OperatorId::from(a.id.as_str());
            let x = match &a.x {
                Some(x) => scalar(x)?,
                None => graph.stake(&id)?.clone(),
            };
            if attackers.insert(id, x).is_some() {
                return Err(Error::DuplicateId(a.id.clone()));
            }
        }
        let attack = AttackSpec::new(services, attackers);
        attack.validate(graph)?;
        Ok(attack)
    }

    pub fn from_attack<T: Scalar>(attack: &AttackSpec<T>) -> Self {
        Self {
            services: attack.services.iter().map(ToString::to_string).collect(),
            attackers: attack
                .attackers
                .iter()
                .map(|(id, x)| AttackerDoc { id: id.to_string(), x: Some(NumberDoc::from_scalar(x)) })
                .collect(),
        }
    }
}

fn scalar<T: Scalar>(doc: &NumberDoc) -> Result<T> {
    Ok(T::from_rational(&doc.to_rational()?))
}

fn parse_json<D: for<'de> Deserialize<'de>>(text: &str) -> Result<D> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))
}

pub fn read_graph<T: Scalar>(text: &str) -> Result<RestakingGraph<T>> {
    parse_json::<GraphDoc>(text)?.into_graph()
}

pub fn write_graph<T: Scalar>(graph: &RestakingGraph<T>) -> String {
    serde_json::to_string_pretty(&GraphDoc::from_graph(graph)).expect("graph documents always serialize")
}

pub fn read_attack<T: Scalar>(text: &str, graph: &RestakingGraph<T>) -> Result<AttackSpec<T>> {
    if text.trim().is_empty() {
        return Err(Error::MalformedAttack("attack file is empty".into()));
    }
    parse_json::<AttackDoc>(text)?.into_attack(graph)
}

pub fn write_attack<T: Scalar>(attack: &AttackSpec<T>) -> String {
    serde_json::to_string_pretty(&AttackDoc::from_attack(attack)).expect("attack documents always serialize")
}
