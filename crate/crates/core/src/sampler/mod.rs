//! New parameter configurations drawn around the empirical sample.
//!
//! Discrete parameters are uniform over their alternatives. Continuous
//! parameters follow a normal with the sample mean and three times the
//! sample standard deviation, truncated to the schema bounds.
//!
//! Configuration `i` is drawn from its own stream
//! `seeding::stream(master_seed, Domain::Config, i)`: continuous parameters
//! first in schema order (one uniform each), then discrete parameters (one
//! bounded integer each). Any contiguous shard of ids can therefore be
//! produced independently and concatenated.

mod truncnorm;

pub use truncnorm::TruncatedNormal;

use std::ops::Range;

use rand_core::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::schema::{ContinuousParamSpec, DiscreteParamSpec, ParameterSchema, RunRecord};
use crate::seeding::{self, Domain};

pub const STD_INFLATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
}

/// Mean and standard deviation of every continuous parameter, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMoments {
    pub params: Vec<Moments>,
}

pub fn moments_of(values: &[f64]) -> Result<Moments> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "moments need at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(Moments {
        mean,
        std: (ss / (n - 1.0)).sqrt(),
    })
}

pub fn fit_moments(records: &[&RunRecord], schema: &ParameterSchema) -> Result<EmpiricalMoments> {
    let valid: Vec<&RunRecord> = records.iter().copied().filter(|r| r.valid).collect();
    if valid.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "moments need at least 2 valid records, got {}",
            valid.len()
        )));
    }
    let mut params = Vec::with_capacity(schema.continuous().len());
    for (i, spec) in schema.continuous().iter().enumerate() {
        let column = valid
            .iter()
            .map(|r| {
                r.real(schema, i)
                    .ok_or_else(|| Error::InvalidArgument(format!("record {} lacks `{}`", r.id, spec.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        params.push(moments_of(&column)?);
    }
    Ok(EmpiricalMoments { params })
}

pub fn sampler_for(spec: &ContinuousParamSpec, moments: &Moments) -> TruncatedNormal {
    TruncatedNormal::new(moments.mean, STD_INFLATION * moments.std, spec.lower, spec.upper)
}

/// One draw of a continuous parameter.
pub fn sample_continuous<R: RngCore + ?Sized>(spec: &ContinuousParamSpec, moments: &Moments, rng: &mut R) -> f64 {
    sampler_for(spec, moments).sample(rng)
}

/// Uniform index into `spec.alternatives`.
pub fn sample_discrete<R: RngCore + ?Sized>(spec: &DiscreteParamSpec, rng: &mut R) -> usize {
    seeding::uniform_index(rng, spec.alternatives.len())
}

/// A generated configuration: continuous values then alternative indices,
/// both in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedConfig {
    pub id: u64,
    pub reals: Vec<f64>,
    pub choices: Vec<u16>,
}

impl GeneratedConfig {
    pub fn policy(&self, schema: &ParameterSchema) -> usize {
        self.choices[schema.policy_index()] as usize
    }

    pub fn region(&self, schema: &ParameterSchema) -> usize {
        self.choices[schema.region_index()] as usize
    }
}

#[derive(Debug, Clone)]
pub struct ConfigGenerator {
    continuous: Vec<TruncatedNormal>,
    arities: Vec<usize>,
}

impl ConfigGenerator {
    pub fn new(schema: &ParameterSchema, moments: &EmpiricalMoments) -> Result<Self> {
        if moments.params.len() != schema.continuous().len() {
            return Err(Error::InvalidArgument(format!(
                "{} moments for {} continuous parameters",
                moments.params.len(),
                schema.continuous().len()
            )));
        }
        Ok(Self {
            continuous: schema
                .continuous()
                .iter()
                .zip(&moments.params)
                .map(|(s, m)| sampler_for(s, m))
                .collect(),
            arities: schema.discrete().iter().map(|d| d.alternatives.len()).collect(),
        })
    }

    pub fn config(&self, master_seed: u64, id: u64) -> GeneratedConfig {
        let mut rng = seeding::stream(master_seed, Domain::Config, id);
        let reals = self.continuous.iter().map(|t| t.sample(&mut rng)).collect();
        let choices = self
            .arities
            .iter()
            .map(|&m| seeding::uniform_index(&mut rng, m) as u16)
            .collect();
        GeneratedConfig { id, reals, choices }
    }

    /// Configurations with ids in `range`, generated in parallel.
    pub fn range(&self, master_seed: u64, range: Range<u64>) -> Vec<GeneratedConfig> {
        let start = range.start;
        let len = range.end.saturating_sub(start) as usize;
        (0..len)
            .into_par_iter()
            .with_min_len(256)
            .map(|i| self.config(master_seed, start + i as u64))
            .collect()
    }

    /// Shard `k` of `shards`: a contiguous id range of `0..n`.
    pub fn shard(&self, master_seed: u64, n: u64, k: u64, shards: u64) -> Vec<GeneratedConfig> {
        assert!(shards > 0 && k < shards);
        let start = n * k / shards;
        let end = n * (k + 1) / shards;
        self.range(master_seed, start..end)
    }

    /// Lazily yields configurations in batches of `batch` ids.
    pub fn batches(&self, master_seed: u64, n: u64, batch: u64) -> impl Iterator<Item = Vec<GeneratedConfig>> + '_ {
        let batch = batch.max(1);
        (0..n.div_ceil(batch)).map(move |b| self.range(master_seed, b * batch..((b + 1) * batch).min(n)))
    }
}

pub fn generate_configs(
    schema: &ParameterSchema,
    moments: &EmpiricalMoments,
    n: u64,
    master_seed: u64,
) -> Result<Vec<GeneratedConfig>> {
    if n == 0 {
        return Err(Error::InvalidArgument("generate at least one configuration".into()));
    }
    Ok(ConfigGenerator::new(schema, moments)?.range(master_seed, 0..n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ParamValue;

    #[test]
    fn moments_examples() {
        assert_eq!(moments_of(&[1.0, 1.0, 1.0]).unwrap(), Moments { mean: 1.0, std: 0.0 });
        let m = moments_of(&[0.0, 2.0]).unwrap();
        assert_eq!(m.mean, 1.0);
        assert!((m.std - 2f64.sqrt()).abs() < 1e-15);
        assert!(moments_of(&[1.0]).is_err());
    }

    #[test]
    fn fit_moments_skips_invalid_and_needs_two() {
        let schema = ParameterSchema::default_schema();
        let rec = |id, v: f64, valid| {
            let mut config: Vec<ParamValue> = schema.continuous().iter().map(|c| ParamValue::Real(c.lower.max(v.min(c.upper)))).collect();
            config.extend(schema.discrete().iter().map(|d| ParamValue::Symbol(d.alternatives[0].clone())));
            RunRecord { id, config, indicators: vec![], valid }
        };
        let a = rec(0, 0.0, true);
        let b = rec(1, 1.0, true);
        let c = rec(2, 1e9, false);
        let m = fit_moments(&[&a, &b, &c], &schema).unwrap();
        let markup = schema.continuous_position("Markup").unwrap();
        assert_eq!(m.params[markup].mean, 0.25);
        assert!(fit_moments(&[&a, &c], &schema).is_err());
    }

    #[test]
    fn constant_column_is_degenerate() {
        let spec = ContinuousParamSpec { name: "x".into(), lower: 0.0, upper: 0.5 };
        let mut rng = seeding::stream(0, Domain::Test, 0);
        for _ in 0..10 {
            assert_eq!(sample_continuous(&spec, &Moments { mean: 0.3, std: 0.0 }, &mut rng), 0.3);
            assert_eq!(sample_continuous(&spec, &Moments { mean: 0.9, std: 0.0 }, &mut rng), 0.5);
        }
    }

    #[test]
    fn single_alternative_always_chosen() {
        let spec = DiscreteParamSpec { name: "x".into(), role: None, alternatives: vec!["only".into()] };
        let mut rng = seeding::stream(0, Domain::Test, 1);
        assert!((0..100).all(|_| sample_discrete(&spec, &mut rng) == 0));
    }

    #[test]
    fn shards_concatenate_to_the_full_stream() {
        let schema = ParameterSchema::default_schema();
        let moments = EmpiricalMoments {
            params: schema
                .continuous()
                .iter()
                .map(|c| Moments { mean: c.lower + 0.3 * c.width(), std: 0.2 * c.width() })
                .collect(),
        };
        let g = ConfigGenerator::new(&schema, &moments).unwrap();
        let full = generate_configs(&schema, &moments, 1000, 5).unwrap();
        let sharded: Vec<GeneratedConfig> = (0..7).flat_map(|k| g.shard(5, 1000, k, 7)).collect();
        assert_eq!(full, sharded);
        let batched: Vec<GeneratedConfig> = g.batches(5, 1000, 128).flatten().collect();
        assert_eq!(full, batched);
        for cfg in &full {
            for (v, c) in cfg.reals.iter().zip(schema.continuous()) {
                assert!(c.contains(*v));
            }
        }
    }
}
