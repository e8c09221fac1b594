//! Binary optimal / non-optimal targets from two indicator columns, and
//! train/test splitting.
//!
//! A run is optimal when its production indicator sits at or above the
//! pooled `high_quantile` and its inequality indicator at or below the
//! pooled `low_quantile`. Quantiles are taken over the whole corpus, never
//! per region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::FeatureMatrix;
use crate::schema::{ParameterSchema, RunRecord};
use crate::seeding::{self, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpec {
    pub high_indicator: String,
    pub low_indicator: String,
    #[serde(default = "default_high")]
    pub high_quantile: f64,
    #[serde(default = "default_low")]
    pub low_quantile: f64,
}

fn default_high() -> f64 {
    0.75
}

fn default_low() -> f64 {
    0.25
}

impl LabelSpec {
    pub fn new(high_indicator: impl Into<String>, low_indicator: impl Into<String>) -> Self {
        Self {
            high_indicator: high_indicator.into(),
            low_indicator: low_indicator.into(),
            high_quantile: default_high(),
            low_quantile: default_low(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for q in [self.high_quantile, self.low_quantile] {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidArgument(format!("quantile {q} outside (0, 1)")));
            }
        }
        if self.high_indicator == self.low_indicator {
            return Err(Error::InvalidArgument(
                "high and low indicators must differ".into(),
            ));
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of the sorted values (h = (n - 1) q).
pub fn compute_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile {q} outside [0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in quantile sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&sorted, q))
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Labels from raw indicator columns.
pub fn label_values(high: &[f64], low: &[f64], spec: &LabelSpec) -> Result<Vec<u8>> {
    spec.validate()?;
    if high.len() != low.len() {
        return Err(Error::InvalidArgument("indicator columns differ in length".into()));
    }
    let high_cut = compute_quantile(high, spec.high_quantile)?;
    let low_cut = compute_quantile(low, spec.low_quantile)?;
    Ok(high
        .iter()
        .zip(low)
        .map(|(&h, &l)| u8::from(h >= high_cut && l <= low_cut))
        .collect())
}

fn indicator_column(records: &[&RunRecord], names: &[String], name: &str) -> Result<Vec<f64>> {
    let pos = names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::MissingIndicator(name.to_string()))?;
    records
        .iter()
        .map(|r| {
            r.indicators
                .get(pos)
                .copied()
                .ok_or_else(|| Error::MissingIndicator(name.to_string()))
        })
        .collect()
}

pub fn label_dataset(records: &[&RunRecord], indicator_names: &[String], spec: &LabelSpec) -> Result<Vec<u8>> {
    let high = indicator_column(records, indicator_names, &spec.high_indicator)?;
    let low = indicator_column(records, indicator_names, &spec.low_indicator)?;
    label_values(&high, &low, spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: FeatureMatrix,
    pub labels: Vec<u8>,
    /// Source record id of every row.
    pub provenance: Vec<u64>,
}

impl LabeledDataset {
    pub fn new(features: FeatureMatrix, labels: Vec<u8>, provenance: Vec<u64>) -> Result<Self> {
        if features.n_rows() != labels.len() || labels.len() != provenance.len() {
            return Err(Error::InvalidArgument(format!(
                "row counts differ: features {}, labels {}, provenance {}",
                features.n_rows(),
                labels.len(),
                provenance.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        Ok(Self {
            features,
            labels,
            provenance,
        })
    }

    /// Encodes and labels records in one pass.
    pub fn from_records(
        records: &[&RunRecord],
        indicator_names: &[String],
        schema: &ParameterSchema,
        spec: &LabelSpec,
    ) -> Result<Self> {
        let labels = label_dataset(records, indicator_names, spec)?;
        let features = FeatureMatrix::from_records(records, schema)?;
        let provenance = records.iter().map(|r| r.id).collect();
        Self::new(features, labels, provenance)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_optimal(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            provenance: rows.iter().map(|&i| self.provenance[i]).collect(),
        }
    }
}

/// Size of the test split: `round(n * fraction)`.
pub fn test_size(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).round() as usize
}

/// Row indices `(train, test)`, each ascending.
///
/// Stratified splits allocate the test rows across classes by largest
/// remainder, so every class count is within one of its exact share.
pub fn split_indices(labels: &[u8], test_fraction: f64, seed: u64, stratified: bool) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = labels.len();
    let n_test = test_size(n, test_fraction);
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} on {n} rows leaves an empty split"
        )));
    }
    let mut in_test = vec![false; n];
    if stratified {
        let classes: [Vec<usize>; 2] = [0u8, 1].map(|c| (0..n).filter(|&i| labels[i] == c).collect());
        let exact: Vec<f64> = classes.iter().map(|c| c.len() as f64 * n_test as f64 / n as f64).collect();
        let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut short = n_test - take.iter().sum::<usize>();
        let mut order = [0usize, 1];
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        for &c in order.iter().cycle() {
            if short == 0 {
                break;
            }
            if take[c] < classes[c].len() {
                take[c] += 1;
                short -= 1;
            }
        }
        for (c, mut members) in classes.into_iter().enumerate() {
            let mut rng = seeding::stream(seed, Domain::Split, c as u64);
            seeding::shuffle(&mut rng, &mut members);
            for &i in &members[..take[c]] {
                in_test[i] = true;
            }
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        let mut rng = seeding::stream(seed, Domain::Split, u64::MAX);
        seeding::shuffle(&mut rng, &mut all);
        for &i in &all[..n_test] {
            in_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| in_test[i]);
    Ok((train, test))
}

pub fn split_train_test(
    data: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = split_indices(&data.labels, test_fraction, seed, stratified)?;
    Ok((data.subset(&train), data.subset(&test)))
}
