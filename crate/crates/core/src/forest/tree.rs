//! CART trees grown on Gini impurity.

use rand_core::RngCore;

use super::{FeatureMatrix, Hyperparams};
use crate::error::{Error, Result};
use crate::seeding;

/// Gini impurity `1 - p0^2 - p1^2` of a two-class node.
pub fn gini_impurity(counts: [u32; 2]) -> Result<f64> {
    let total = counts[0] as f64 + counts[1] as f64;
    if total == 0.0 {
        return Err(Error::InvalidArgument("gini impurity of an empty node".into()));
    }
    // 1 - p0^2 - p1^2 == 2 p0 p1
    Ok(2.0 * counts[0] as f64 * counts[1] as f64 / (total * total))
}

/// Flat pre-order node. The left child of a split always follows it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        right: u32,
    },
    Leaf {
        counts: [u32; 2],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    /// Validates a pre-order node list.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        fn walk(nodes: &[TreeNode], at: usize) -> std::result::Result<usize, String> {
            match nodes.get(at) {
                None => Err(format!("node {at} out of range")),
                Some(TreeNode::Leaf { counts }) => {
                    if counts[0] == 0 && counts[1] == 0 {
                        Err(format!("leaf {at} is empty"))
                    } else {
                        Ok(at + 1)
                    }
                }
                Some(TreeNode::Split { right, threshold, .. }) => {
                    if !threshold.is_finite() {
                        return Err(format!("split {at} has a non-finite threshold"));
                    }
                    let after_left = walk(nodes, at + 1)?;
                    if *right as usize != after_left {
                        return Err(format!("split {at} has a misplaced right child"));
                    }
                    walk(nodes, after_left)
                }
            }
        }
        match walk(&nodes, 0) {
            Ok(end) if end == nodes.len() => Ok(Self { nodes }),
            Ok(_) => Err(Error::CorruptFile("trailing tree nodes".into())),
            Err(e) => Err(Error::CorruptFile(e)),
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_counts(&self, row: &[f64]) -> [u32; 2] {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    at = if row[feature as usize] <= threshold {
                        at + 1
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    /// Majority class of the reached leaf; a tied leaf votes 0.
    pub fn vote(&self, row: &[f64]) -> u8 {
        let c = self.leaf_counts(row);
        u8::from(c[1] > c[0])
    }

    /// Maximum edge count from the root to a leaf.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> (usize, usize) {
            match nodes[at] {
                TreeNode::Leaf { .. } => (0, at + 1),
                TreeNode::Split { .. } => {
                    let (dl, next) = walk(nodes, at + 1);
                    let (dr, end) = walk(nodes, next);
                    (1 + dl.max(dr), end)
                }
            }
        }
        walk(&self.nodes, 0).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Child-size-weighted Gini impurity of the two children.
    pub impurity: f64,
}

/// Exact split score `(l0^2 + l1^2) * nr + (r0^2 + r1^2) * nl` over `nl * nr`.
/// Larger is purer; weighted child impurity is `1 - score / n`.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn of(left: [u64; 2], right: [u64; 2]) -> Self {
        let nl = (left[0] + left[1]) as u128;
        let nr = (right[0] + right[1]) as u128;
        let sl = (left[0] as u128).pow(2) + (left[1] as u128).pow(2);
        let sr = (right[0] as u128).pow(2) + (right[1] as u128).pow(2);
        Self {
            num: sl * nr + sr * nl,
            den: nl * nr,
        }
    }

    fn parent(counts: [u64; 2]) -> Self {
        Self {
            num: (counts[0] as u128).pow(2) + (counts[1] as u128).pow(2),
            den: (counts[0] + counts[1]) as u128,
        }
    }

    fn beats(&self, other: &Score) -> bool {
        self.num * other.den > other.num * self.den
    }

    fn weighted_impurity(&self, n: u64) -> f64 {
        1.0 - self.num as f64 / (self.den as f64 * n as f64)
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Best Gini split of `rows` over `candidates`.
///
/// Thresholds are midpoints between consecutive distinct values; rows with
/// `x <= threshold` go left. Ties resolve to the lowest feature index, then
/// the lowest threshold. Returns `None` unless some split respecting
/// `min_samples_leaf` strictly lowers the impurity.
pub fn best_split(
    rows: &[usize],
    matrix: &FeatureMatrix,
    labels: &[u8],
    candidates: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitChoice> {
    let mut scratch = Vec::with_capacity(rows.len());
    best_split_with(rows, matrix, labels, candidates, min_samples_leaf, &mut scratch)
}

fn best_split_with(
    rows: &[usize],
    matrix: &FeatureMatrix,
    labels: &[u8],
    candidates: &[usize],
    min_samples_leaf: usize,
    scratch: &mut Vec<(f64, u8)>,
) -> Option<SplitChoice> {
    let n = rows.len();
    let msl = min_samples_leaf.max(1);
    if n < 2 * msl {
        return None;
    }
    let mut totals = [0u64; 2];
    for &r in rows {
        totals[labels[r] as usize] += 1;
    }
    if totals[0] == 0 || totals[1] == 0 {
        return None;
    }
    let mut best_score = Score::parent(totals);
    let mut best: Option<(usize, f64)> = None;

    let mut sorted_candidates = candidates.to_vec();
    sorted_candidates.sort_unstable();
    sorted_candidates.dedup();
    for &feature in &sorted_candidates {
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (matrix.get(r, feature), labels[r])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0u64; 2];
        for i in 0..n - 1 {
            left[scratch[i].1 as usize] += 1;
            let (here, next) = (scratch[i].0, scratch[i + 1].0);
            if here == next {
                continue;
            }
            let n_left = i + 1;
            if n_left < msl {
                continue;
            }
            if n - n_left < msl {
                break;
            }
            let right = [totals[0] - left[0], totals[1] - left[1]];
            let score = Score::of(left, right);
            if score.beats(&best_score) {
                best_score = score;
                best = Some((feature, midpoint(here, next)));
            }
        }
    }
    best.map(|(feature, threshold)| SplitChoice {
        feature,
        threshold,
        impurity: best_score.weighted_impurity(n as u64),
    })
}

struct Grower<'a, R: RngCore> {
    matrix: &'a FeatureMatrix,
    labels: &'a [u8],
    params: &'a Hyperparams,
    features_per_split: usize,
    rng: &'a mut R,
    nodes: Vec<TreeNode>,
    order: Vec<usize>,
    candidates: Vec<usize>,
    scratch: Vec<(f64, u8)>,
}

impl<R: RngCore> Grower<'_, R> {
    /// Features are visited in a fresh random order; a feature counts toward
    /// `features_per_split` only if it is not constant within the node.
    fn draw_candidates(&mut self, rows: &[usize]) {
        self.candidates.clear();
        let n_cols = self.matrix.n_cols();
        if self.features_per_split >= n_cols {
            self.candidates.extend(0..n_cols);
            return;
        }
        self.order.clear();
        self.order.extend(0..n_cols);
        for i in 0..n_cols {
            if self.candidates.len() == self.features_per_split {
                break;
            }
            let j = i + seeding::uniform_index(self.rng, n_cols - i);
            self.order.swap(i, j);
            let f = self.order[i];
            let first = self.matrix.get(rows[0], f);
            if rows.iter().any(|&r| self.matrix.get(r, f) != first) {
                self.candidates.push(f);
            }
        }
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) {
        let mut counts = [0u32; 2];
        for &r in rows.iter() {
            counts[self.labels[r] as usize] += 1;
        }
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.params.max_depth || rows.len() < 2 * self.params.min_samples_leaf.max(1) {
            self.nodes.push(TreeNode::Leaf { counts });
            return;
        }
        self.draw_candidates(rows);
        let candidates = std::mem::take(&mut self.candidates);
        let choice = best_split_with(
            rows,
            self.matrix,
            self.labels,
            &candidates,
            self.params.min_samples_leaf,
            &mut self.scratch,
        );
        self.candidates = candidates;
        let Some(choice) = choice else {
            self.nodes.push(TreeNode::Leaf { counts });
            return;
        };
        let mut split_at = 0;
        for i in 0..rows.len() {
            if self.matrix.get(rows[i], choice.feature) <= choice.threshold {
                rows.swap(i, split_at);
                split_at += 1;
            }
        }
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Split {
            feature: choice.feature as u32,
            threshold: choice.threshold,
            right: 0,
        });
        let (left, right) = rows.split_at_mut(split_at);
        self.grow(left, depth + 1);
        let right_at = self.nodes.len() as u32;
        if let TreeNode::Split { right, .. } = &mut self.nodes[at] {
            *right = right_at;
        }
        self.grow(right, depth + 1);
    }
}

/// Grows a tree on the given rows (duplicates allowed) without resampling.
pub fn grow_tree<R: RngCore>(
    matrix: &FeatureMatrix,
    labels: &[u8],
    rows: &mut [usize],
    params: &Hyperparams,
    rng: &mut R,
) -> Tree {
    assert!(!rows.is_empty(), "cannot grow a tree on zero rows");
    let mut grower = Grower {
        matrix,
        labels,
        params,
        features_per_split: params.resolved_features_per_split(matrix.n_cols()),
        rng,
        nodes: Vec::new(),
        order: Vec::with_capacity(matrix.n_cols()),
        candidates: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
    };
    grower.grow(rows, 0);
    Tree { nodes: grower.nodes }
}

/// Draws `n` rows with replacement.
pub fn bootstrap<R: RngCore>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| seeding::uniform_index(rng, n)).collect()
}

/// Tree on a bootstrap resample of all rows, seeded by `seed`.
pub fn fit_tree(matrix: &FeatureMatrix, labels: &[u8], seed: u64, params: &Hyperparams) -> Tree {
    let mut rng = seeding::rng_from_seed(seed);
    let mut rows = bootstrap(matrix.n_rows(), &mut rng);
    grow_tree(matrix, labels, &mut rows, params, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_impurity([5, 0]).unwrap(), 0.0);
        assert_eq!(gini_impurity([4, 4]).unwrap(), 0.5);
        assert_eq!(gini_impurity([3, 1]).unwrap(), 0.375);
        assert!(gini_impurity([0, 0]).is_err());
    }

    #[test]
    fn gini_properties() {
        for a in 0..30u32 {
            for b in 0..30u32 {
                if a + b == 0 {
                    continue;
                }
                let g = gini_impurity([a, b]).unwrap();
                assert_eq!(g, gini_impurity([b, a]).unwrap());
                assert!((0.0..=0.5).contains(&g));
                assert_eq!(g == 0.0, a == 0 || b == 0);
                if a == b {
                    assert_eq!(g, 0.5);
                }
            }
        }
    }

    #[test]
    fn one_dimensional_split() {
        let m = matrix(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let s = best_split(&[0, 1, 2, 3], &m, &[0, 0, 1, 1], &[0], 1).unwrap();
        assert_eq!((s.feature, s.threshold, s.impurity), (0, 1.5, 0.0));
    }

    #[test]
    fn no_split_cases() {
        let m = matrix(&[vec![0.0], vec![1.0], vec![2.0]]);
        assert!(best_split(&[0, 1, 2], &m, &[1, 1, 1], &[0], 1).is_none());
        let twins = matrix(&[vec![4.0], vec![4.0]]);
        assert!(best_split(&[0, 1], &twins, &[0, 1], &[0], 1).is_none());
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let m = matrix(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        // the only perfect split leaves one row on the left
        let s = best_split(&[0, 1, 2, 3], &m, &[0, 1, 1, 1], &[0], 2).unwrap();
        assert_eq!(s.threshold, 1.5);
        assert!(best_split(&[0, 1, 2, 3], &m, &[0, 1, 1, 1], &[0], 3).is_none());
    }

    #[test]
    fn pure_input_is_a_single_leaf() {
        let m = matrix(&[vec![0.0], vec![5.0], vec![2.0]]);
        let t = fit_tree(&m, &[1, 1, 1], 3, &Hyperparams::default());
        assert_eq!(t.nodes(), [TreeNode::Leaf { counts: [0, 3] }]);
    }

    #[test]
    fn depth_one_has_at_most_three_nodes() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * 7 % 11) as f64]).collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        let m = matrix(&rows);
        let params = Hyperparams {
            max_depth: 1,
            ..Hyperparams::default()
        };
        for seed in 0..20 {
            let t = fit_tree(&m, &labels, seed, &params);
            assert!(t.n_nodes() <= 3);
            assert!(t.depth() <= 1);
        }
    }

    #[test]
    fn from_nodes_rejects_bad_layouts() {
        assert!(Tree::from_nodes(vec![TreeNode::Leaf { counts: [0, 0] }]).is_err());
        let bad = vec![
            TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                right: 5,
            },
            TreeNode::Leaf { counts: [1, 0] },
            TreeNode::Leaf { counts: [0, 1] },
        ];
        assert!(Tree::from_nodes(bad).is_err());
    }
}
