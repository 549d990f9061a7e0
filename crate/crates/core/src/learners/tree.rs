//! Greedy regression trees (CART) shared by the forest and the booster.
//!
//! A node's score is `T(G, l1)² / (n + l2)` where `G` is the response sum,
//! `n` the row count and `T` soft thresholding. With `l1 = l2 = 0` the split
//! gain is exactly the decrease in sum of squares and the leaf value is the
//! mean; the booster uses the regularized form on residuals.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::elastic_net::soft_threshold;
use super::Dataset;
use crate::error::{Error, Result};
use crate::randkit::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        count: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    n_features: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeParams {
    /// `None` grows until the size constraint stops it.
    pub max_depth: Option<usize>,
    /// Minimum training rows in every leaf.
    pub min_node_size: usize,
    /// Candidate features drawn at every split.
    pub mtry: usize,
    pub l2: f64,
    pub l1: f64,
    /// Multiplies the gain of features not yet used in this tree; 1 disables.
    pub regularization_factor: f64,
}

impl TreeParams {
    pub fn cart(p: usize, max_depth: Option<usize>, min_node_size: usize) -> Self {
        Self {
            max_depth,
            min_node_size,
            mtry: p,
            l2: 0.0,
            l1: 0.0,
            regularization_factor: 1.0,
        }
    }
}

/// Number of candidate features for a fraction of `p`, clamped to `[1, p]`.
pub fn mtry_count(fraction: f64, p: usize) -> usize {
    ((fraction * p as f64).ceil() as usize).clamp(1, p)
}

pub fn fit_tree(
    d: &Dataset,
    max_depth: Option<usize>,
    min_node_size: usize,
    mtry_fraction: f64,
    rng: &mut RngStream,
) -> Result<Tree> {
    if min_node_size == 0 {
        return Err(Error::InvalidConfig("min_node_size must be >= 1".into()));
    }
    if !(mtry_fraction > 0.0 && mtry_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "mtry fraction must be in (0, 1], got {mtry_fraction}"
        )));
    }
    let mut params = TreeParams::cart(d.p(), max_depth, min_node_size);
    params.mtry = mtry_count(mtry_fraction, d.p());
    let rows: Vec<usize> = (0..d.n()).collect();
    Ok(Tree::grow(d.x().view(), d.y().view(), rows, &params, rng))
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    params: &'a TreeParams,
    used: Vec<bool>,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Tree {
    /// Grows a tree on `rows` (duplicates allowed, as in a bootstrap sample).
    pub fn grow(
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        rows: Vec<usize>,
        params: &TreeParams,
        rng: &mut RngStream,
    ) -> Tree {
        let p = x.ncols();
        let mut b = Builder {
            x,
            y,
            params,
            used: vec![false; p],
            nodes: Vec::new(),
        };
        b.build(rows, 0, rng);
        Tree {
            nodes: b.nodes,
            n_features: p,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        Ok(x.rows().into_iter().map(|r| self.predict_row(r)).collect())
    }
}

impl<'a> Builder<'a> {
    fn score(&self, sum: f64, count: usize) -> f64 {
        let t = soft_threshold(sum, self.params.l1);
        t * t / (count as f64 + self.params.l2)
    }

    fn leaf_value(&self, sum: f64, count: usize) -> f64 {
        soft_threshold(sum, self.params.l1) / (count as f64 + self.params.l2)
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut RngStream) -> usize {
        let id = self.nodes.len();
        let sum: f64 = rows.iter().map(|&r| self.y[r]).sum();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(sum, rows.len()),
            count: rows.len(),
        });

        let depth_ok = self.params.max_depth.map_or(true, |m| depth < m);
        if !depth_ok || rows.len() < 2 * self.params.min_node_size {
            return id;
        }
        let Some(best) = self.best_split(&rows, sum, rng) else {
            return id;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.x[[r, best.feature]] <= best.threshold);
        self.used[best.feature] = true;
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[usize], sum: f64, rng: &mut RngStream) -> Option<Candidate> {
        let p = self.x.ncols();
        let features: Vec<usize> = if self.params.mtry >= p {
            (0..p).collect()
        } else {
            let mut f = rng.sample_indices(p, self.params.mtry);
            f.sort_unstable();
            f
        };

        let n = rows.len();
        let min = self.params.min_node_size;
        let parent = self.score(sum, n);
        let ssq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let eps = 1e-12 * (ssq + 1e-300);

        let mut best: Option<Candidate> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &f in &features {
            order.clear();
            order.extend(rows.iter().map(|&r| (self.x[[r, f]], self.y[r])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let penalty = if self.used[f] {
                1.0
            } else {
                self.params.regularization_factor
            };

            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += order[i].1;
                let left_n = i + 1;
                if order[i].0 == order[i + 1].0 || left_n < min || n - left_n < min {
                    continue;
                }
                let gain = (self.score(left_sum, left_n) + self.score(sum - left_sum, n - left_n)
                    - parent)
                    * penalty;
                if gain > eps && best.as_ref().map_or(true, |b| gain > b.gain) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: 0.5 * (order[i].0 + order[i + 1].0),
                        gain,
                    });
                }
            }
        }
        best
    }
}
