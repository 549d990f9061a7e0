//! Stagewise squared-loss gradient boosting with regression trees.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};
use super::Dataset;
use crate::error::{Error, Result};
use crate::randkit::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_trees: usize,
    pub eta: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub lambda_l2: f64,
    pub alpha_l1: f64,
    pub min_node_size: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_trees: 140,
            eta: 0.3,
            max_depth: 6,
            subsample: 1.0,
            lambda_l2: 1.0,
            alpha_l1: 0.0,
            min_node_size: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub base: f64,
    pub eta: f64,
    /// Members with unshrunk leaf weights.
    trees: Vec<Tree>,
}

impl BoostedTrees {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.trees.first().map_or(0, Tree::n_features)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let mut acc = Array1::<f64>::zeros(x.nrows());
        for t in &self.trees {
            acc += &t.predict(x)?;
        }
        Ok(acc * self.eta + self.base)
    }
}

pub fn fit_gbt(d: &Dataset, params: &BoostParams, rng: &mut RngStream) -> Result<BoostedTrees> {
    if !(params.eta > 0.0) {
        return Err(Error::InvalidConfig(format!("eta must be > 0, got {}", params.eta)));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(Error::InvalidConfig("subsample must be in (0, 1]".into()));
    }
    if params.n_trees == 0 || params.min_node_size == 0 {
        return Err(Error::InvalidConfig("n_trees and min_node_size must be >= 1".into()));
    }
    let n = d.n();
    let x = d.x().view();
    let base = d.y().mean().expect("non-empty");
    let mut fitted = Array1::from_elem(n, base);
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_node_size: params.min_node_size,
        mtry: d.p(),
        l2: params.lambda_l2,
        l1: params.alpha_l1,
        regularization_factor: 1.0,
    };
    let n_sub = ((params.subsample * n as f64).round() as usize).clamp(1, n);

    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let residual = d.y() - &fitted;
        let rows = if n_sub == n {
            (0..n).collect()
        } else {
            let mut r = rng.sample_indices(n, n_sub);
            r.sort_unstable();
            r
        };
        let tree = Tree::grow(x, residual.view(), rows, &tree_params, rng);
        fitted.scaled_add(params.eta, &tree.predict(x)?);
        trees.push(tree);
    }
    Ok(BoostedTrees {
        base,
        eta: params.eta,
        trees,
    })
}
