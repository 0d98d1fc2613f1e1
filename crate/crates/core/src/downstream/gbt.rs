use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub max_depth: usize,
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            max_depth: 15,
            n_estimators: 1500,
            learning_rate: 0.01,
            min_samples_leaf: 1,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.n_estimators == 0 || self.min_samples_leaf == 0 {
            return Err(Error::invalid("GBT depth, estimator count and leaf size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("GBT learning rate must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A regression tree stored as a flat node arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    target: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn mean(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.target[i]).sum::<f64>() / idx.len() as f64
    }

    /// Best (feature, threshold, gain) by exact scan of sorted values.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.target[i]).sum();
        let base = total * total / n as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted = idx.to_vec();
        for f in 0..self.x.cols() {
            sorted.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.target[sorted[k]];
                let (lo, hi) = (self.x.get(sorted[k], f), self.x.get(sorted[k + 1], f));
                let left_n = k + 1;
                if lo == hi || left_n < self.min_leaf || n - left_n < self.min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / left_n as f64 + right_sum * right_sum / (n - left_n) as f64;
                let gain = score - base;
                if gain > 1e-12 * (1.0 + base.abs()) && best.is_none_or(|b| gain > b.2) {
                    best = Some((f, lo + 0.5 * (hi - lo), gain));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.mean(&idx)));
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold, _)) = self.best_split(&idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x.get(i, feature) <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn fit_tree(x: &Matrix, target: &[f64], max_depth: usize, min_leaf: usize) -> Tree {
    let mut b = Builder {
        x,
        target,
        max_depth,
        min_leaf,
        nodes: Vec::new(),
    };
    b.grow((0..x.rows()).collect(), 0);
    Tree { nodes: b.nodes }
}

/// Squared-error gradient-boosted regression trees.
#[derive(Clone, Debug, PartialEq)]
pub struct GbtModel {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Training MSE before any tree and after each round.
    pub train_loss: Vec<f64>,
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / a.len() as f64
}

pub fn gbt_fit(x: &Matrix, y: &[f64], params: &GbtParams) -> Result<GbtModel> {
    params.validate()?;
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::invalid("GBT needs a non-empty design matrix"));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape {
            op: "gbt_fit",
            left: x.shape(),
            right: (y.len(), 1),
        });
    }
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let mut pred = vec![base; y.len()];
    let mut train_loss = vec![mse(&pred, y)];
    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let tree = fit_tree(x, &resid, params.max_depth, params.min_samples_leaf);
        for (r, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict_row(x.row(r));
        }
        train_loss.push(mse(&pred, y));
        trees.push(tree);
    }
    Ok(GbtModel {
        base,
        learning_rate: params.learning_rate,
        trees,
        train_loss,
    })
}

impl GbtModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .map(|r| {
                let row = x.row(r);
                self.base + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::downstream::r2_score;

    #[test]
    fn one_stump_fits_a_step() {
        let x = Matrix::column_vector((0..10).map(f64::from).collect());
        let y: Vec<f64> = (0..10).map(|i| if i < 4 { -1.0 } else { 3.0 }).collect();
        let p = GbtParams {
            max_depth: 1,
            n_estimators: 1,
            learning_rate: 1.0,
            min_samples_leaf: 1,
        };
        let m = gbt_fit(&x, &y, &p).unwrap();
        assert!((r2_score(&y, &m.predict(&x)).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(m.trees[0].leaves(), 2);
    }

    #[test]
    fn zero_rate_predicts_mean() {
        let x = Matrix::column_vector(vec![1.0, 5.0, 2.0, 8.0]);
        let y = [1.0, 2.0, 3.0, 6.0];
        let m = gbt_fit(
            &x,
            &y,
            &GbtParams {
                learning_rate: 0.0,
                n_estimators: 5,
                max_depth: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(m.predict(&x).iter().all(|p| *p == 3.0));
    }

    #[test]
    fn rejects_empty_and_bad_params() {
        assert!(gbt_fit(&Matrix::zeros(0, 2), &[], &GbtParams::default()).is_err());
        let x = Matrix::column_vector(vec![1.0, 2.0]);
        let bad = GbtParams {
            n_estimators: 0,
            ..Default::default()
        };
        assert!(gbt_fit(&x, &[1.0, 2.0], &bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn training_loss_never_increases(
            data in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -5.0..5.0f64), 5..40),
            depth in 1usize..4,
            rate in 0.05..1.0f64,
        ) {
            let x = Matrix::from_rows(&data.iter().map(|(a, b, _)| vec![*a, *b]).collect::<Vec<_>>()).unwrap();
            let y: Vec<f64> = data.iter().map(|t| t.2).collect();
            let m = gbt_fit(&x, &y, &GbtParams { max_depth: depth, n_estimators: 15, learning_rate: rate, min_samples_leaf: 1 }).unwrap();
            for w in m.train_loss.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }
}
