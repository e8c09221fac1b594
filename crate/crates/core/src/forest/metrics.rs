use std::fmt;

use serde::{Deserialize, Serialize};

use super::Forest;
use crate::error::{Error, Result};
use crate::labeling::LabeledDataset;

/// Rows are observed classes, columns predicted classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    pub fn from_pairs(observed: &[u8], predicted: &[u8]) -> Self {
        let mut cm = Self::default();
        for (&o, &p) in observed.iter().zip(predicted) {
            cm.record(o, p);
        }
        cm
    }

    pub fn record(&mut self, observed: u8, predicted: u8) {
        match (observed, predicted) {
            (0, 0) => self.tn += 1,
            (0, _) => self.fp += 1,
            (_, 0) => self.fn_ += 1,
            _ => self.tp += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = [self.tn, self.fp, self.fn_, self.tp]
            .iter()
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1)
            .max(11);
        writeln!(f, "{:21}Predicted", "")?;
        writeln!(f, "{:21}{:>w$}  {:>w$}", "", "Non-optimal", "Optimal")?;
        writeln!(f, "Observed Non-optimal {:>w$}  {:>w$}", self.tn, self.fp)?;
        write!(f, "         Optimal     {:>w$}  {:>w$}", self.fn_, self.tp)
    }
}

/// Ratios whose denominator is zero are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Metrics {
    let accuracy = ratio(cm.tp + cm.tn, cm.total());
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        accuracy,
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

pub fn evaluate(forest: &Forest, test: &LabeledDataset) -> Result<Evaluation> {
    if test.features.encoding() != forest.encoding() {
        return Err(Error::EncodingMismatch(
            "test set layout differs from the training layout".into(),
        ));
    }
    let predicted: Vec<u8> = forest
        .predict_matrix(&test.features)?
        .into_iter()
        .map(|p| p.class)
        .collect();
    let confusion = ConfusionMatrix::from_pairs(&test.labels, &predicted);
    Ok(Evaluation {
        confusion,
        metrics: metrics_from_confusion(&confusion),
    })
}
