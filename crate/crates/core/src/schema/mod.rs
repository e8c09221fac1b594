//! Simulation parameter space and run-record corpora.

mod corpus;

pub use corpus::{
    ingest_path, ingest_runs, read_generated, write_generated, write_runs, write_runs_with_ids, GeneratedReader,
    GeneratedWriter, RunCorpus, CONFIG_ID, PREDICTED, RUN_ID, VOTE_FRACTION,
};

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_SCHEMA: &str = include_str!("../../data/default_schema.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousParamSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl ContinuousParamSpec {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Policy,
    Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteParamSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    pub alternatives: Vec<String>,
}

impl DiscreteParamSpec {
    pub fn position(&self, symbol: &str) -> Option<usize> {
        self.alternatives.iter().position(|a| a == symbol)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDoc {
    #[serde(default)]
    continuous: Vec<ContinuousParamSpec>,
    #[serde(default)]
    discrete: Vec<DiscreteParamSpec>,
}

/// Validated parameter space.
///
/// Parameters are ordered continuous first, then discrete, each in
/// declaration order. That order is the column order everywhere.
/// The policy parameter's first alternative is the no-policy baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSchema {
    continuous: Vec<ContinuousParamSpec>,
    discrete: Vec<DiscreteParamSpec>,
    policy: usize,
    region: usize,
}

impl ParameterSchema {
    pub fn new(continuous: Vec<ContinuousParamSpec>, discrete: Vec<DiscreteParamSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in continuous.iter().map(|c| &c.name).chain(discrete.iter().map(|d| &d.name)) {
            if name.trim().is_empty() {
                return Err(Error::Schema("empty parameter name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate parameter name `{name}`")));
            }
        }
        for c in &continuous {
            if !c.lower.is_finite() || !c.upper.is_finite() {
                return Err(Error::Schema(format!("`{}`: bounds must be finite", c.name)));
            }
            if c.lower >= c.upper {
                return Err(Error::Schema(format!(
                    "`{}`: lower bound {} is not below upper bound {}",
                    c.name, c.lower, c.upper
                )));
            }
        }
        for d in &discrete {
            if d.alternatives.is_empty() {
                return Err(Error::Schema(format!("`{}`: empty alternatives", d.name)));
            }
            let mut alts = HashSet::new();
            for a in &d.alternatives {
                if !alts.insert(a.as_str()) {
                    return Err(Error::Schema(format!("`{}`: duplicate alternative `{a}`", d.name)));
                }
            }
            if d.alternatives.len() > u16::MAX as usize {
                return Err(Error::Schema(format!("`{}`: too many alternatives", d.name)));
            }
        }
        let designated = |role: Role| -> Result<usize> {
            let mut hits = discrete.iter().enumerate().filter(|(_, d)| d.role == Some(role));
            match (hits.next(), hits.next()) {
                (Some((i, _)), None) => Ok(i),
                (None, _) => Err(Error::Schema(format!("no parameter designated `{role}`"))),
                (Some(_), Some(_)) => Err(Error::Schema(format!("more than one parameter designated `{role}`"))),
            }
        };
        let policy = designated(Role::Policy)?;
        let region = designated(Role::Region)?;
        Ok(Self {
            continuous,
            discrete,
            policy,
            region,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: SchemaDoc = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::new(doc.continuous, doc.discrete)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> String {
        let doc = SchemaDoc {
            continuous: self.continuous.clone(),
            discrete: self.discrete.clone(),
        };
        toml::to_string(&doc).expect("schema serializes")
    }

    /// The shipped schema: bounds and alternatives of the housing-policy model.
    pub fn default_schema() -> Self {
        Self::parse(DEFAULT_SCHEMA).expect("bundled schema is valid")
    }

    pub fn continuous(&self) -> &[ContinuousParamSpec] {
        &self.continuous
    }

    pub fn discrete(&self) -> &[DiscreteParamSpec] {
        &self.discrete
    }

    /// Index into [`Self::discrete`] of the policy parameter.
    pub fn policy_index(&self) -> usize {
        self.policy
    }

    pub fn region_index(&self) -> usize {
        self.region
    }

    pub fn policy(&self) -> &DiscreteParamSpec {
        &self.discrete[self.policy]
    }

    pub fn region(&self) -> &DiscreteParamSpec {
        &self.discrete[self.region]
    }

    pub fn baseline_policy(&self) -> &str {
        &self.policy().alternatives[0]
    }

    pub fn n_params(&self) -> usize {
        self.continuous.len() + self.discrete.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.continuous
            .iter()
            .map(|c| c.name.as_str())
            .chain(self.discrete.iter().map(|d| d.name.as_str()))
    }

    pub fn continuous_position(&self, name: &str) -> Option<usize> {
        self.continuous.iter().position(|c| c.name == name)
    }
}

/// One parameter value of an ingested run.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Real(f64),
    Symbol(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Symbol(s) => f.write_str(s),
        }
    }
}

/// One simulation run: configuration in schema order plus output indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub id: u64,
    pub config: Vec<ParamValue>,
    /// Aligned with [`RunCorpus::indicator_names`].
    pub indicators: Vec<f64>,
    pub valid: bool,
}

impl RunRecord {
    pub fn real(&self, schema: &ParameterSchema, index: usize) -> Option<f64> {
        debug_assert!(index < schema.continuous().len());
        match self.config.get(index) {
            Some(ParamValue::Real(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn symbol(&self, schema: &ParameterSchema, discrete_index: usize) -> Option<&str> {
        match self.config.get(schema.continuous().len() + discrete_index) {
            Some(ParamValue::Symbol(s)) => Some(s),
            _ => None,
        }
    }

    /// Alternative index of a discrete parameter, if the symbol is known.
    pub fn choice(&self, schema: &ParameterSchema, discrete_index: usize) -> Option<usize> {
        self.symbol(schema, discrete_index)
            .and_then(|s| schema.discrete()[discrete_index].position(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    OutOfBounds {
        param: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    NonFinite {
        param: String,
    },
    UnknownAlternative {
        param: String,
        value: String,
    },
    WrongKind {
        param: String,
    },
    MissingValue {
        param: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfBounds {
                param,
                value,
                lower,
                upper,
            } => {
                if value > upper {
                    write!(f, "out-of-bounds: {param} > {upper}")
                } else {
                    write!(f, "out-of-bounds: {param} < {lower}")
                }
            }
            Violation::NonFinite { param } => write!(f, "non-finite: {param}"),
            Violation::UnknownAlternative { param, value } => {
                write!(f, "unknown alternative: {param} = {value}")
            }
            Violation::WrongKind { param } => write!(f, "wrong value kind: {param}"),
            Violation::MissingValue { param } => write!(f, "missing value: {param}"),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Policy => "policy",
            Role::Region => "region",
        })
    }
}

pub fn validate_record(record: &RunRecord, schema: &ParameterSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    let n_cont = schema.continuous().len();
    for (i, spec) in schema.continuous().iter().enumerate() {
        match record.config.get(i) {
            Some(ParamValue::Real(v)) if !v.is_finite() => out.push(Violation::NonFinite {
                param: spec.name.clone(),
            }),
            Some(ParamValue::Real(v)) if !spec.contains(*v) => out.push(Violation::OutOfBounds {
                param: spec.name.clone(),
                value: *v,
                lower: spec.lower,
                upper: spec.upper,
            }),
            Some(ParamValue::Real(_)) => {}
            Some(ParamValue::Symbol(_)) => out.push(Violation::WrongKind {
                param: spec.name.clone(),
            }),
            None => out.push(Violation::MissingValue {
                param: spec.name.clone(),
            }),
        }
    }
    for (j, spec) in schema.discrete().iter().enumerate() {
        match record.config.get(n_cont + j) {
            Some(ParamValue::Symbol(s)) if spec.position(s).is_none() => {
                out.push(Violation::UnknownAlternative {
                    param: spec.name.clone(),
                    value: s.clone(),
                })
            }
            Some(ParamValue::Symbol(_)) => {}
            Some(ParamValue::Real(_)) => out.push(Violation::WrongKind {
                param: spec.name.clone(),
            }),
            None => out.push(Violation::MissingValue {
                param: spec.name.clone(),
            }),
        }
    }
    out
}
