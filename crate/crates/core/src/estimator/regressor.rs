//! Small regressors for the accuracy estimator: ridge least squares and
//! gradient-boosted regression trees on squared loss.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearModel {
    /// Ridge regression with an unpenalized intercept (fit on centered data).
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], ridge: f64) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let y_mean = targets.iter().sum::<f64>() / n as f64;
        let x_mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n as f64).collect();
        let x = DMatrix::from_fn(n, d, |i, k| rows[i][k] - x_mean[k]);
        let y = DVector::from_fn(n, |i, _| targets[i] - y_mean);
        let mut gram = x.transpose() * &x;
        let scale = (gram.trace() / d.max(1) as f64).max(1.0);
        for k in 0..d {
            gram[(k, k)] += ridge * scale;
        }
        let rhs = x.transpose() * y;
        let weights = gram.cholesky().map(|c| c.solve(&rhs)).map_or_else(|| vec![0.0; d], |w| w.iter().copied().collect());
        let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
        LinearModel { intercept, weights }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], sample: &[usize], max_depth: usize, min_leaf: usize) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        tree.grow(rows, targets, sample.to_vec(), max_depth, min_leaf.max(1));
        tree
    }

    fn grow(&mut self, rows: &[Vec<f64>], targets: &[f64], idx: Vec<usize>, depth: usize, min_leaf: usize) -> usize {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| targets[i]).sum();
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(if n == 0 { 0.0 } else { total / n as f64 }));
        if depth == 0 || n < 2 * min_leaf {
            return slot;
        }

        let d = rows[idx[0]].len();
        let base = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in 0..d {
            let mut order = idx.clone();
            order.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for split in 1..n {
                left_sum += targets[order[split - 1]];
                let (lo, hi) = (rows[order[split - 1]][feature], rows[order[split]][feature]);
                if split < min_leaf || n - split < min_leaf || lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / split as f64 + right_sum * right_sum / (n - split) as f64 - base;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, 0.5 * (lo + hi)));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            return slot;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| rows[i][feature] <= threshold);
        let left = self.grow(rows, targets, l, depth - 1, min_leaf);
        let right = self.grow(rows, targets, r, depth - 1, min_leaf);
        self.nodes[slot] = Node::Split { feature, threshold, left, right };
        slot
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// row fraction drawn (without replacement) for each tree
    pub subsample: f64,
    /// start from a ridge fit instead of the label mean
    pub linear_base: bool,
    pub ridge: f64,
}

impl Default for BoostingConfig {
    fn default() -> Self {
        BoostingConfig {
            n_trees: 60,
            learning_rate: 0.1,
            max_depth: 2,
            min_samples_leaf: 5,
            subsample: 0.8,
            linear_base: true,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    base: LinearModel,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
}

impl BoostedTrees {
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], cfg: &BoostingConfig, rng: &mut Rng) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let base = if cfg.linear_base {
            LinearModel::fit(rows, targets, cfg.ridge)
        } else {
            LinearModel { intercept: targets.iter().sum::<f64>() / n as f64, weights: vec![0.0; d] }
        };
        let mut pred: Vec<f64> = rows.iter().map(|r| base.predict(r)).collect();
        let take = ((n as f64 * cfg.subsample).round() as usize).clamp(1, n);
        let mut trees = Vec::with_capacity(cfg.n_trees);
        for _ in 0..cfg.n_trees {
            let residual: Vec<f64> = targets.iter().zip(&pred).map(|(y, p)| y - p).collect();
            let mut sample = if take == n { (0..n).collect() } else { index::sample(rng, n, take).into_vec() };
            sample.sort_unstable();
            let tree = RegressionTree::fit(rows, &residual, &sample, cfg.max_depth, cfg.min_samples_leaf);
            for (p, r) in pred.iter_mut().zip(rows) {
                *p += cfg.learning_rate * tree.predict(r);
            }
            trees.push(tree);
        }
        BoostedTrees { base, learning_rate: cfg.learning_rate, trees }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base.predict(x) + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn linear_recovers_exact_plane() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 + 0.5 * r[0] - 2.0 * r[1]).collect();
        let m = LinearModel::fit(&rows, &y, 1e-9);
        for (r, t) in rows.iter().zip(&y) {
            assert!((m.predict(r) - t).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_single_point_interpolates() {
        let m = LinearModel::fit(&[vec![90.0, 80.0]], &[85.5], 1e-6);
        assert_eq!(m.predict(&[90.0, 80.0]), 85.5);
    }

    #[test]
    fn tree_splits_step_function() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { 1.0 } else { 4.0 }).collect();
        let t = RegressionTree::fit(&rows, &y, &(0..10).collect::<Vec<_>>(), 1, 1);
        assert_eq!(t.predict(&[2.0]), 1.0);
        assert_eq!(t.predict(&[7.0]), 4.0);
    }

    #[test]
    fn boosting_fits_nonlinear_target() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 8) as f64, (i / 8) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] > 3.0 { 10.0 } else { 0.0 } + r[1]).collect();
        let cfg = BoostingConfig { n_trees: 200, subsample: 1.0, min_samples_leaf: 1, linear_base: false, ..Default::default() };
        let m = BoostedTrees::fit(&rows, &y, &cfg, &mut stream(0, Stream::Learner, 0));
        let rmse = (rows.iter().zip(&y).map(|(r, t)| (m.predict(r) - t).powi(2)).sum::<f64>() / 40.0).sqrt();
        assert!(rmse < 0.2, "rmse {rmse}");
    }
}
