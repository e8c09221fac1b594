//! Synthetic stand-in for the housing simulation.
//!
//! Each run's production and inequality indicators are linear in the
//! normalized continuous parameters plus region and policy shifts and
//! optional Gaussian noise:
//!
//! ```text
//! gdp_index  = sum_j w_gdp[j]  * z_j + region.gdp  + policy.gdp  + noise * e1
//! gini_index = sum_j w_gini[j] * z_j + region.gini + policy.gini + noise * e2
//! z_j        = (x_j - lower_j) / (upper_j - lower_j)
//! ```
//!
//! The remaining 64 indicator columns mix the two with unit noise so a toy
//! corpus has the same width as a real one.

use std::collections::HashMap;
use std::path::Path;

use rand_core::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::GeneratedConfig;
use crate::schema::{ParamValue, ParameterSchema, RunCorpus, RunRecord};
use crate::seeding::{self, Domain};
use crate::stats::normal_quantile;

pub const GDP_INDICATOR: &str = "gdp_index";
pub const GINI_INDICATOR: &str = "gini_index";
pub const N_INDICATORS: usize = 66;

/// Noise level at which the default world stays learnable but labels near
/// the quantile boundaries are no longer a deterministic function of the
/// configuration.
pub const CALIBRATED_NOISE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Shift {
    pub gdp: f64,
    pub gini: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedShift {
    pub name: String,
    pub gdp: f64,
    pub gini: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loading {
    pub param: String,
    pub gdp: f64,
    pub gini: f64,
}

/// Shift for one alternative of a discrete parameter other than policy and
/// region. Unlisted alternatives shift nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteShift {
    pub param: String,
    pub alternative: String,
    pub gdp: f64,
    pub gini: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyWorldSpec {
    pub noise: f64,
    /// Corpus seed; when absent the caller's master seed is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, rename = "loading")]
    pub loadings: Vec<Loading>,
    #[serde(rename = "policy")]
    pub policies: Vec<NamedShift>,
    #[serde(rename = "region")]
    pub regions: Vec<NamedShift>,
    #[serde(default, rename = "effect", skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<DiscreteShift>,
}

impl ToyWorldSpec {
    /// Purchase lowers production and raises inequality; rent vouchers and
    /// monetary aid do the opposite, monetary aid more strongly. Belo
    /// Horizonte is always optimal and Brasília never is. A single
    /// productivity parameter drives both indicators.
    pub fn default_preset(schema: &ParameterSchema) -> Self {
        let policies = schema
            .policy()
            .alternatives
            .iter()
            .map(|name| {
                let (gdp, gini) = match name.as_str() {
                    "Purchase" => (-0.2, 0.2),
                    "Rent vouchers" => (0.2, -0.1),
                    "Monetary aid" => (0.0, -0.7),
                    _ => (0.0, 0.0),
                };
                NamedShift { name: name.clone(), gdp, gini }
            })
            .collect();
        let regions = schema
            .region()
            .alternatives
            .iter()
            .map(|name| {
                let (gdp, gini) = match name.as_str() {
                    "Belo Horizonte" => (2.0, -2.0),
                    "Brasília" => (-2.0, 2.0),
                    _ => (0.0, 0.0),
                };
                NamedShift { name: name.clone(), gdp, gini }
            })
            .collect();
        let mut loadings = Vec::new();
        if schema.continuous_position("Productivity: exponent").is_some() {
            loadings.push(Loading { param: "Productivity: exponent".into(), gdp: 1.0, gini: -1.0 });
        }
        Self {
            noise: 0.0,
            seed: None,
            loadings,
            policies,
            regions,
            effects: Vec::new(),
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("toy world: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("world serializes")
    }
}

/// A world resolved against a schema: every lookup is by index.
#[derive(Debug, Clone)]
pub struct ToyWorld {
    noise: f64,
    seed: Option<u64>,
    /// `(continuous index, lower, width, weights)`
    loadings: Vec<(usize, f64, f64, Shift)>,
    policies: Vec<Shift>,
    regions: Vec<Shift>,
    /// `(discrete index, per-alternative shifts)`
    effects: Vec<(usize, Vec<Shift>)>,
    policy_index: usize,
    region_index: usize,
    filler: Vec<(f64, f64)>,
}

fn resolve_shifts(kind: &str, alternatives: &[String], shifts: &[NamedShift]) -> Result<Vec<Shift>> {
    let mut by_name: HashMap<&str, Shift> = HashMap::new();
    for s in shifts {
        if !alternatives.contains(&s.name) {
            return Err(Error::Config(format!("toy world: unknown {kind} `{}`", s.name)));
        }
        if by_name.insert(&s.name, Shift { gdp: s.gdp, gini: s.gini }).is_some() {
            return Err(Error::Config(format!("toy world: {kind} `{}` listed twice", s.name)));
        }
    }
    alternatives
        .iter()
        .map(|a| {
            by_name
                .get(a.as_str())
                .copied()
                .ok_or_else(|| Error::Config(format!("toy world: no effect for {kind} `{a}`")))
        })
        .collect()
}

impl ToyWorld {
    pub fn new(spec: &ToyWorldSpec, schema: &ParameterSchema) -> Result<Self> {
        if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
            return Err(Error::Config(format!("toy world: noise {} must be finite and >= 0", spec.noise)));
        }
        let mut loadings = Vec::with_capacity(spec.loadings.len());
        for l in &spec.loadings {
            let j = schema
                .continuous_position(&l.param)
                .ok_or_else(|| Error::Config(format!("toy world: unknown continuous parameter `{}`", l.param)))?;
            let c = &schema.continuous()[j];
            loadings.push((j, c.lower, c.width(), Shift { gdp: l.gdp, gini: l.gini }));
        }
        let mut effects: Vec<(usize, Vec<Shift>)> = Vec::new();
        for e in &spec.effects {
            let d = schema
                .discrete()
                .iter()
                .position(|d| d.name == e.param)
                .ok_or_else(|| Error::Config(format!("toy world: unknown discrete parameter `{}`", e.param)))?;
            if d == schema.policy_index() || d == schema.region_index() {
                return Err(Error::Config(format!(
                    "toy world: `{}` effects belong in the policy or region tables",
                    e.param
                )));
            }
            let spec_d = &schema.discrete()[d];
            let a = spec_d.position(&e.alternative).ok_or_else(|| {
                Error::Config(format!("toy world: `{}` has no alternative `{}`", e.param, e.alternative))
            })?;
            let slot = match effects.iter().position(|(i, _)| *i == d) {
                Some(k) => k,
                None => {
                    effects.push((d, vec![Shift::default(); spec_d.alternatives.len()]));
                    effects.len() - 1
                }
            };
            effects[slot].1[a] = Shift { gdp: e.gdp, gini: e.gini };
        }
        let filler = (3..=N_INDICATORS)
            .map(|k| {
                let a = k as f64;
                (a.cos(), a.sin())
            })
            .collect();
        Ok(Self {
            noise: spec.noise,
            seed: spec.seed,
            loadings,
            policies: resolve_shifts("policy", &schema.policy().alternatives, &spec.policies)?,
            regions: resolve_shifts("region", &schema.region().alternatives, &spec.regions)?,
            policy_index: schema.policy_index(),
            region_index: schema.region_index(),
            effects,
            filler,
        })
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// The noise-free `(gdp_index, gini_index)` of a configuration.
    pub fn expected(&self, config: &GeneratedConfig) -> (f64, f64) {
        let p = self.policies[config.choices[self.policy_index] as usize];
        let r = self.regions[config.choices[self.region_index] as usize];
        let (mut gdp, mut gini) = (p.gdp + r.gdp, p.gini + r.gini);
        for (d, shifts) in &self.effects {
            let s = shifts[config.choices[*d] as usize];
            gdp += s.gdp;
            gini += s.gini;
        }
        for &(j, lower, width, w) in &self.loadings {
            let z = (config.reals[j] - lower) / width;
            gdp += w.gdp * z;
            gini += w.gini * z;
        }
        (gdp, gini)
    }

    /// All indicators of one run, in [`indicator_names`] order.
    pub fn simulate_run<R: RngCore + ?Sized>(&self, config: &GeneratedConfig, rng: &mut R) -> Vec<f64> {
        let (mut gdp, mut gini) = self.expected(config);
        if self.noise > 0.0 {
            gdp += self.noise * standard_normal(rng);
            gini += self.noise * standard_normal(rng);
        }
        let mut out = Vec::with_capacity(N_INDICATORS);
        out.push(gdp);
        out.push(gini);
        for &(a, b) in &self.filler {
            out.push(a * gdp + b * gini + standard_normal(rng));
        }
        out
    }
}

fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    // midpoint of a 2^-53 cell, so never 0 or 1
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    normal_quantile(u)
}

pub fn indicator_names() -> Vec<String> {
    let mut names = vec![GDP_INDICATOR.to_string(), GINI_INDICATOR.to_string()];
    names.extend((3..=N_INDICATORS).map(|k| format!("indicator_{k:02}")));
    names
}

/// Uniform draw over the schema: continuous bounds and discrete alternatives.
pub fn uniform_config<R: RngCore + ?Sized>(schema: &ParameterSchema, id: u64, rng: &mut R) -> GeneratedConfig {
    let reals = schema
        .continuous()
        .iter()
        .map(|c| c.lower + seeding::uniform01(rng) * c.width())
        .collect();
    let choices = schema
        .discrete()
        .iter()
        .map(|d| seeding::uniform_index(rng, d.alternatives.len()) as u16)
        .collect();
    GeneratedConfig { id, reals, choices }
}

pub fn to_record(schema: &ParameterSchema, config: &GeneratedConfig, indicators: Vec<f64>) -> RunRecord {
    let mut values: Vec<ParamValue> = config.reals.iter().map(|&v| ParamValue::Real(v)).collect();
    values.extend(
        config
            .choices
            .iter()
            .zip(schema.discrete())
            .map(|(&c, d)| ParamValue::Symbol(d.alternatives[c as usize].clone())),
    );
    RunRecord {
        id: config.id,
        config: values,
        indicators,
        valid: true,
    }
}

/// `n` runs with uniformly drawn configurations. Run `i` uses its own
/// stream `(seed, ToyRun, i)`, so the corpus does not depend on threading.
pub fn generate_corpus(world: &ToyWorld, schema: &ParameterSchema, n: usize, seed: u64) -> Result<RunCorpus> {
    if n == 0 {
        return Err(Error::InvalidArgument("a toy corpus needs at least one run".into()));
    }
    let records = (0..n)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let i = i as u64;
            let mut rng = seeding::stream(seed, Domain::ToyRun, i);
            let config = uniform_config(schema, i, &mut rng);
            let indicators = world.simulate_run(&config, &mut rng);
            to_record(schema, &config, indicators)
        })
        .collect();
    Ok(RunCorpus {
        indicator_names: indicator_names(),
        records,
        violations: Vec::new(),
    })
}
