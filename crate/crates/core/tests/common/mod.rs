//! Independent reference implementations used as test oracles.

#![allow(dead_code, clippy::needless_range_loop)]

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use surrogate_core::forest::TreeNode;

/// Linear-interpolation quantile over a fully sorted copy.
pub fn quantile_by_sort(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[lo] + (h - lo as f64) * (v[lo + 1] - v[lo])
}

pub fn brute_force_labels(high: &[f64], low: &[f64], qh: f64, ql: f64) -> Vec<u8> {
    let th = quantile_by_sort(high, qh);
    let tl = quantile_by_sort(low, ql);
    high.iter()
        .zip(low)
        .map(|(&h, &l)| u8::from(h >= th && l <= tl))
        .collect()
}

/// Weighted child impurity as an exact fraction `num / den` (times n):
/// `2 l0 l1 / nl + 2 r0 r1 / nr`.
fn split_cost(l: [u64; 2], r: [u64; 2]) -> (u128, u128) {
    let nl = (l[0] + l[1]) as u128;
    let nr = (r[0] + r[1]) as u128;
    let num = 2 * l[0] as u128 * l[1] as u128 * nr + 2 * r[0] as u128 * r[1] as u128 * nl;
    (num, nl * nr)
}

fn less(a: (u128, u128), b: (u128, u128)) -> bool {
    a.0 * b.1 < b.0 * a.1
}

/// Exhaustive best split: every feature, every midpoint between distinct
/// values. Ties keep the first found (lowest feature, then lowest threshold).
/// Returns `(feature, threshold, weighted impurity)`.
pub fn exhaustive_split(rows: &[Vec<f64>], labels: &[u8], subset: &[usize]) -> Option<(usize, f64, f64)> {
    let n = subset.len() as u64;
    let mut total = [0u64; 2];
    for &i in subset {
        total[labels[i] as usize] += 1;
    }
    if total[0] == 0 || total[1] == 0 {
        return None;
    }
    // parent cost 2 t0 t1 / n, as a fraction with denominator n
    let mut best_cost = (2 * total[0] as u128 * total[1] as u128, n as u128);
    let mut best = None;
    for f in 0..rows[0].len() {
        let mut values: Vec<f64> = subset.iter().map(|&i| rows[i][f]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let mut l = [0u64; 2];
            let mut r = [0u64; 2];
            for &i in subset {
                if rows[i][f] <= t {
                    l[labels[i] as usize] += 1;
                } else {
                    r[labels[i] as usize] += 1;
                }
            }
            let c = split_cost(l, r);
            if less(c, best_cost) {
                best_cost = c;
                best = Some((f, t));
            }
        }
    }
    best.map(|(f, t)| (f, t, best_cost.0 as f64 / best_cost.1 as f64 / n as f64))
}

/// Greedy tree grown with the exhaustive oracle at every node, pre-order.
pub fn greedy_tree(rows: &[Vec<f64>], labels: &[u8], max_depth: usize) -> Vec<TreeNode> {
    fn grow(rows: &[Vec<f64>], labels: &[u8], subset: Vec<usize>, depth: usize, max_depth: usize, out: &mut Vec<TreeNode>) {
        let mut counts = [0u32; 2];
        for &i in &subset {
            counts[labels[i] as usize] += 1;
        }
        let split = if depth < max_depth { exhaustive_split(rows, labels, &subset) } else { None };
        let Some((feature, threshold, _)) = split else {
            out.push(TreeNode::Leaf { counts });
            return;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = subset.iter().partition(|&&i| rows[i][feature] <= threshold);
        let at = out.len();
        out.push(TreeNode::Split {
            feature: feature as u32,
            threshold,
            right: 0,
        });
        grow(rows, labels, left, depth + 1, max_depth, out);
        let right_at = out.len() as u32;
        if let TreeNode::Split { right, .. } = &mut out[at] {
            *right = right_at;
        }
        grow(rows, labels, right, depth + 1, max_depth, out);
    }
    let mut out = Vec::new();
    grow(rows, labels, (0..rows.len()).collect(), 0, max_depth, &mut out);
    out
}

pub fn truncated_normal_cdf(x: f64, mean: f64, std: f64, lower: f64, upper: f64) -> f64 {
    let n = Normal::new(mean, std).unwrap();
    let (a, b) = (n.cdf(lower), n.cdf(upper));
    ((n.cdf(x) - a) / (b - a)).clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov statistic of a sample against a CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Welch's t, Welch-Satterthwaite df, and two-sided p from two-pass moments.
pub fn textbook_welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let moments = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = moments(a);
    let (nb, mb, vb) = moments(b);
    let (qa, qb) = (va / na, vb / nb);
    let t = (ma - mb) / (qa + qb).sqrt();
    let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    let p = 2.0 * dist.sf(t.abs());
    (t, df, p)
}
