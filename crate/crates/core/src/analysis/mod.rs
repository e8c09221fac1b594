//! Aggregation of classified configurations into per-region, per-policy
//! tables, and the statistics reported on them.

mod report;
mod welch;

pub use report::{emit_report, Report, REPORT_FILES};
pub use welch::{welch_from_summaries, welch_t_test, Summary, WelchResult};

use std::io::Read;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::GeneratedConfig;
use crate::schema::{ParamValue, ParameterSchema, RunRecord};

/// Row label of the pooled region.
pub const ALL: &str = "All";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub n: u64,
    pub optimal: u64,
}

impl Counts {
    pub fn add(&mut self, class: u8) {
        self.n += 1;
        self.optimal += u64::from(class == 1);
    }

    pub fn merge(&mut self, other: &Counts) {
        self.n += other.n;
        self.optimal += other.optimal;
    }

    /// Optimal share in percent; `None` for an empty group.
    pub fn share_pct(&self) -> Option<f64> {
        (self.n > 0).then(|| self.optimal as f64 * 100.0 / self.n as f64)
    }
}

/// Everything the report needs, accumulated in one pass over classified
/// configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    n_policies: usize,
    region_index: usize,
    policy_index: usize,
    /// Region-major `(region, policy)` counts.
    cells: Vec<Counts>,
    /// Per discrete parameter, per alternative.
    choices: Vec<Vec<Counts>>,
    /// Per continuous parameter, split by class.
    optimal: Vec<Summary>,
    non_optimal: Vec<Summary>,
}

/// Items folded sequentially per chunk; chunks are merged in order, so the
/// floating-point result does not depend on the thread count.
const CHUNK: usize = 4096;

impl Aggregate {
    pub fn new(schema: &ParameterSchema) -> Self {
        let n_regions = schema.region().alternatives.len();
        let n_policies = schema.policy().alternatives.len();
        let n_cont = schema.continuous().len();
        Self {
            n_policies,
            region_index: schema.region_index(),
            policy_index: schema.policy_index(),
            cells: vec![Counts::default(); n_regions * n_policies],
            choices: schema
                .discrete()
                .iter()
                .map(|d| vec![Counts::default(); d.alternatives.len()])
                .collect(),
            optimal: vec![Summary::default(); n_cont],
            non_optimal: vec![Summary::default(); n_cont],
        }
    }

    pub fn add(&mut self, reals: &[f64], choices: &[u16], class: u8) {
        let r = choices[self.region_index] as usize;
        let p = choices[self.policy_index] as usize;
        self.cells[r * self.n_policies + p].add(class);
        for (counts, &c) in self.choices.iter_mut().zip(choices) {
            counts[c as usize].add(class);
        }
        let side = if class == 1 { &mut self.optimal } else { &mut self.non_optimal };
        for (s, &x) in side.iter_mut().zip(reals) {
            s.push(x);
        }
    }

    pub fn add_config(&mut self, config: &GeneratedConfig, class: u8) {
        self.add(&config.reals, &config.choices, class);
    }

    pub fn merge(&mut self, other: &Aggregate) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.merge(b);
        }
        for (a, b) in self.choices.iter_mut().flatten().zip(other.choices.iter().flatten()) {
            a.merge(b);
        }
        for (a, b) in self.optimal.iter_mut().zip(&other.optimal) {
            a.merge(b);
        }
        for (a, b) in self.non_optimal.iter_mut().zip(&other.non_optimal) {
            a.merge(b);
        }
    }

    /// Parallel aggregation with a thread-count-independent result.
    pub fn from_pairs(schema: &ParameterSchema, configs: &[GeneratedConfig], classes: &[u8]) -> Result<Self> {
        if configs.len() != classes.len() {
            return Err(Error::DimensionMismatch {
                expected: configs.len(),
                actual: classes.len(),
            });
        }
        let parts: Vec<Aggregate> = configs
            .par_chunks(CHUNK)
            .zip(classes.par_chunks(CHUNK))
            .map(|(cs, ks)| {
                let mut a = Aggregate::new(schema);
                for (c, &k) in cs.iter().zip(ks) {
                    a.add_config(c, k);
                }
                a
            })
            .collect();
        let mut total = Aggregate::new(schema);
        for p in &parts {
            total.merge(p);
        }
        Ok(total)
    }

    /// Aggregates labeled simulation runs (the reference columns of the
    /// report). Records whose symbols are unknown are rejected.
    pub fn from_records(schema: &ParameterSchema, records: &[&RunRecord], labels: &[u8]) -> Result<Self> {
        if records.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: records.len(),
                actual: labels.len(),
            });
        }
        let mut a = Aggregate::new(schema);
        let n_cont = schema.continuous().len();
        let mut reals = vec![0.0; n_cont];
        let mut choices = vec![0u16; schema.discrete().len()];
        for (rec, &label) in records.iter().zip(labels) {
            for (i, v) in rec.config.iter().enumerate() {
                match v {
                    ParamValue::Real(x) if i < n_cont => reals[i] = *x,
                    ParamValue::Symbol(s) if i >= n_cont => {
                        let d = &schema.discrete()[i - n_cont];
                        choices[i - n_cont] = d.position(s).ok_or_else(|| Error::UnknownAlternative {
                            param: d.name.clone(),
                            value: s.clone(),
                        })? as u16;
                    }
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "record {} has a malformed value at column {i}",
                            rec.id
                        )))
                    }
                }
            }
            a.add(&reals, &choices, label);
        }
        Ok(a)
    }

    pub fn total(&self) -> Counts {
        let mut t = Counts::default();
        for c in &self.cells {
            t.merge(c);
        }
        t
    }

    pub fn choice_counts(&self, discrete_index: usize) -> &[Counts] {
        &self.choices[discrete_index]
    }

    pub fn optimal_summaries(&self) -> &[Summary] {
        &self.optimal
    }

    pub fn non_optimal_summaries(&self) -> &[Summary] {
        &self.non_optimal
    }
}

/// Counts per (region, policy), with the pooled row available separately.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupShareTable {
    pub regions: Vec<String>,
    pub policies: Vec<String>,
    /// Region-major.
    pub cells: Vec<Counts>,
}

impl GroupShareTable {
    pub fn from_aggregate(schema: &ParameterSchema, aggregate: &Aggregate) -> Result<Self> {
        if aggregate.total().n == 0 {
            return Err(Error::Analysis("no predictions to aggregate".into()));
        }
        Ok(Self {
            regions: schema.region().alternatives.clone(),
            policies: schema.policy().alternatives.clone(),
            cells: aggregate.cells.clone(),
        })
    }

    pub fn counts(&self, region: usize, policy: usize) -> Counts {
        self.cells[region * self.policies.len() + policy]
    }

    /// All regions pooled.
    pub fn pooled(&self, policy: usize) -> Counts {
        let mut c = Counts::default();
        for r in 0..self.regions.len() {
            c.merge(&self.counts(r, policy));
        }
        c
    }

    pub fn region_total(&self, region: usize) -> Counts {
        let mut c = Counts::default();
        for p in 0..self.policies.len() {
            c.merge(&self.counts(region, p));
        }
        c
    }

    pub fn total(&self) -> Counts {
        let mut c = Counts::default();
        for cell in &self.cells {
            c.merge(cell);
        }
        c
    }
}

/// Share table of classified configurations; the policy's first
/// alternative is the baseline.
pub fn optimal_share_by_group<'a>(
    schema: &ParameterSchema,
    predictions: impl IntoIterator<Item = (&'a GeneratedConfig, u8)>,
) -> Result<GroupShareTable> {
    let mut a = Aggregate::new(schema);
    for (cfg, class) in predictions {
        a.add_config(cfg, class);
    }
    GroupShareTable::from_aggregate(schema, &a)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub region: String,
    /// Baseline optimal share, percent.
    pub baseline: f64,
    /// Policy share minus baseline share, percentage points, in
    /// [`BaselineDeltaTable::policies`] order.
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineDeltaTable {
    pub baseline: String,
    /// Non-baseline policies.
    pub policies: Vec<String>,
    pub rows: Vec<DeltaRow>,
    pub all: DeltaRow,
}

fn delta_row(region: &str, counts: impl Fn(usize) -> Counts, n_policies: usize) -> Result<DeltaRow> {
    let baseline = counts(0)
        .share_pct()
        .ok_or_else(|| Error::Analysis(format!("region `{region}` has no baseline configurations")))?;
    let deltas = (1..n_policies)
        .map(|p| {
            counts(p)
                .share_pct()
                .map(|s| s - baseline)
                .ok_or_else(|| Error::Analysis(format!("region `{region}` has no configurations for policy {p}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeltaRow {
        region: region.to_string(),
        baseline,
        deltas,
    })
}

pub fn diff_to_baseline(table: &GroupShareTable) -> Result<BaselineDeltaTable> {
    let np = table.policies.len();
    let rows = table
        .regions
        .iter()
        .enumerate()
        .map(|(r, name)| delta_row(name, |p| table.counts(r, p), np))
        .collect::<Result<Vec<_>>>()?;
    let all = delta_row(ALL, |p| table.pooled(p), np)?;
    Ok(BaselineDeltaTable {
        baseline: table.policies[0].clone(),
        policies: table.policies[1..].to_vec(),
        rows,
        all,
    })
}

impl BaselineDeltaTable {
    /// Reads a delimited table with header `region, <baseline>, <policy>...`;
    /// the row labelled `All` is the pooled row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3 {
            return Err(Error::Analysis("delta table needs a region, a baseline and at least one policy column".into()));
        }
        let baseline = header[1].to_string();
        let policies: Vec<String> = header.iter().skip(2).map(String::from).collect();
        let mut rows = Vec::new();
        let mut all = None;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                rec[j].parse().map_err(|_| Error::BadNumber {
                    row: i + 1,
                    column: header[j].to_string(),
                    value: rec[j].to_string(),
                })
            };
            let row = DeltaRow {
                region: rec[0].to_string(),
                baseline: num(1)?,
                deltas: (2..header.len()).map(num).collect::<Result<_>>()?,
            };
            if row.region == ALL {
                all = Some(row);
            } else {
                rows.push(row);
            }
        }
        let all = all.ok_or_else(|| Error::Analysis("delta table lacks an `All` row".into()))?;
        Ok(Self {
            baseline,
            policies,
            rows,
            all,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionBest {
    pub region: String,
    /// Policies (indices into [`BaselineDeltaTable::policies`]) sharing the
    /// largest delta. More than one means a tie.
    pub best: Vec<usize>,
    /// False when no policy beats the baseline; such regions are left out
    /// of the tally.
    pub gain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyRanking {
    pub regions: Vec<RegionBest>,
    /// Regions won outright, per policy.
    pub tally: Vec<u64>,
    pub ties: u64,
    pub no_gain: u64,
}

pub fn rank_policies_per_mr(table: &BaselineDeltaTable) -> PolicyRanking {
    let mut tally = vec![0u64; table.policies.len()];
    let (mut ties, mut no_gain) = (0, 0);
    let regions = table
        .rows
        .iter()
        .map(|row| {
            let max = row.deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let best: Vec<usize> = (0..row.deltas.len()).filter(|&i| row.deltas[i] == max).collect();
            let gain = max > 0.0;
            match (gain, best.len()) {
                (false, _) => no_gain += 1,
                (true, 1) => tally[best[0]] += 1,
                (true, _) => ties += 1,
            }
            RegionBest {
                region: row.region.clone(),
                best,
                gain,
            }
        })
        .collect();
    PolicyRanking {
        regions,
        tally,
        ties,
        no_gain,
    }
}

/// Standard deviation, in percentage points, of a Bernoulli outcome with
/// success probability `p` (a fraction).
pub fn bernoulli_std_pct(p: f64) -> f64 {
    (p * (1.0 - p)).max(0.0).sqrt() * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub region: String,
    pub policy: String,
    pub n: u64,
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

fn band(region: &str, policy: &str, c: Counts) -> Option<Band> {
    let mean = c.share_pct()?;
    let std = bernoulli_std_pct(mean / 100.0);
    Some(Band {
        region: region.to_string(),
        policy: policy.to_string(),
        n: c.n,
        mean,
        std,
        lower: mean - std,
        upper: mean + std,
    })
}

/// Mean plus and minus one standard deviation of the optimal indicator per
/// (region, policy), followed by the pooled rows. Empty groups are skipped.
pub fn mean_std_bands(table: &GroupShareTable) -> Vec<Band> {
    let mut out = Vec::new();
    for (r, region) in table.regions.iter().enumerate() {
        for (p, policy) in table.policies.iter().enumerate() {
            out.extend(band(region, policy, table.counts(r, p)));
        }
    }
    for (p, policy) in table.policies.iter().enumerate() {
        out.extend(band(ALL, policy, table.pooled(p)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamScore {
    pub name: String,
    /// Min-max score of the mean over optimal simulation runs, when a
    /// labeled corpus is available.
    pub abm_optimal: Option<f64>,
    pub surrogate_optimal: f64,
    pub surrogate_all: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamScoreTable {
    pub rows: Vec<ParamScore>,
}

/// `(mean - lower) / (upper - lower)` per continuous parameter.
pub fn standardized_param_score(
    schema: &ParameterSchema,
    surrogate: &Aggregate,
    reference: Option<&Aggregate>,
) -> Result<ParamScoreTable> {
    let score = |i: usize, s: &Summary| {
        let c = &schema.continuous()[i];
        (s.mean - c.lower) / c.width()
    };
    if surrogate.optimal.first().is_some_and(|s| s.n == 0) || surrogate.total().optimal == 0 {
        return Err(Error::Analysis("no configuration was classified optimal".into()));
    }
    let rows = schema
        .continuous()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut all = surrogate.optimal[i];
            all.merge(&surrogate.non_optimal[i]);
            ParamScore {
                name: c.name.clone(),
                abm_optimal: reference
                    .map(|r| r.optimal[i])
                    .filter(|s| s.n > 0)
                    .map(|s| score(i, &s)),
                surrogate_optimal: score(i, &surrogate.optimal[i]),
                surrogate_all: score(i, &all),
            }
        })
        .collect();
    Ok(ParamScoreTable { rows })
}

/// Welch's test of equal means between optimal and non-optimal
/// configurations, per continuous parameter. `None` where undefined.
pub fn welch_by_param(schema: &ParameterSchema, aggregate: &Aggregate) -> Vec<(String, Option<WelchResult>)> {
    schema
        .continuous()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            (
                c.name.clone(),
                welch_from_summaries(&aggregate.optimal[i], &aggregate.non_optimal[i]).ok(),
            )
        })
        .collect()
}
