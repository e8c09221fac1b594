//! Bagged random forest over mixed-encoded features.
//!
//! Tree `i` is grown from a bootstrap resample and per-node feature
//! subsamples drawn from a stream that depends only on the master seed and
//! `i`, so the trained forest is identical for any worker count.

mod encode;
mod io;
mod metrics;
mod tree;

pub use encode::{EncodedParam, FeatureEncoding, FeatureMatrix};
pub use io::{load_forest, read_forest, save_forest, write_forest, FORMAT_VERSION, MAGIC};
pub use metrics::{evaluate, metrics_from_confusion, ConfusionMatrix, Evaluation, Metrics};
pub use tree::{best_split, bootstrap, fit_tree, gini_impurity, grow_tree, SplitChoice, Tree, TreeNode};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate features per node; `None` means ceil(sqrt(n_cols)).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features_per_split: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_trees: 10_000,
            max_depth: 15,
            features_per_split: None,
            min_samples_leaf: 1,
        }
    }
}

impl Hyperparams {
    pub fn resolved_features_per_split(&self, n_cols: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_cols as f64).sqrt().ceil() as usize)
            .clamp(1, n_cols.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument("min_samples_leaf must be at least 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::InvalidArgument("features_per_split must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: u8,
    /// Share of trees voting optimal.
    pub vote_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    hyperparams: Hyperparams,
    master_seed: u64,
    encoding: FeatureEncoding,
}

pub fn tree_seed(master_seed: u64, index: usize) -> u64 {
    seeding::sub_seed(master_seed, Domain::Tree, index as u64)
}

pub fn fit_forest(matrix: &FeatureMatrix, labels: &[u8], hyperparams: &Hyperparams, master_seed: u64) -> Result<Forest> {
    hyperparams.validate()?;
    if labels.len() != matrix.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} rows",
            labels.len(),
            matrix.n_rows()
        )));
    }
    if matrix.n_rows() < 2 {
        return Err(Error::InvalidArgument("need at least two training rows".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::SingleClass);
    }
    let trees = (0..hyperparams.n_trees)
        .into_par_iter()
        .map(|i| fit_tree(matrix, labels, tree_seed(master_seed, i), hyperparams))
        .collect();
    Ok(Forest {
        trees,
        hyperparams: *hyperparams,
        master_seed,
        encoding: matrix.encoding().clone(),
    })
}

impl Forest {
    pub fn from_parts(
        trees: Vec<Tree>,
        hyperparams: Hyperparams,
        master_seed: u64,
        encoding: FeatureEncoding,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
        }
        let n_cols = encoding.n_cols();
        for t in &trees {
            for node in t.nodes() {
                if let TreeNode::Split { feature, .. } = node {
                    if *feature as usize >= n_cols {
                        return Err(Error::CorruptFile(format!("split on column {feature} of {n_cols}")));
                    }
                }
            }
        }
        Ok(Self {
            trees,
            hyperparams,
            master_seed,
            encoding,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn encoding(&self) -> &FeatureEncoding {
        &self.encoding
    }

    pub fn n_cols(&self) -> usize {
        self.encoding.n_cols()
    }

    /// Equal-weight vote; exactly half the trees voting optimal predicts 0.
    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        if row.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                actual: row.len(),
            });
        }
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[f64]) -> Prediction {
        let votes: usize = self.trees.iter().map(|t| t.vote(row) as usize).sum();
        let n = self.trees.len();
        Prediction {
            class: u8::from(2 * votes > n),
            vote_fraction: votes as f64 / n as f64,
        }
    }

    /// Predicts every row, in parallel, preserving order.
    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<Prediction>> {
        if matrix.encoding() != &self.encoding {
            return Err(Error::EncodingMismatch(
                "matrix layout differs from the training layout".into(),
            ));
        }
        let n_cols = matrix.n_cols();
        Ok((0..matrix.n_rows())
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let row = matrix.row(i);
                debug_assert_eq!(row.len(), n_cols);
                self.predict_unchecked(row)
            })
            .collect())
    }

    /// Same forest with its trees in another order.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut out = self.clone();
        out.trees = order.iter().map(|&i| self.trees[i].clone()).collect();
        out
    }
}
