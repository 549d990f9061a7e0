//! Bagged CART ensembles with per-split feature subsampling.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::tree::{mtry_count, Tree, TreeParams};
use super::Dataset;
use crate::error::{Error, Result};
use crate::randkit::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Fraction of features offered at each split; `None` uses `⌊√p⌋`.
    pub mtry_fraction: Option<f64>,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub regularization_factor: f64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry_fraction: None,
            min_node_size: 5,
            max_depth: None,
            regularization_factor: 1.0,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn mtry(&self, p: usize) -> usize {
        match self.mtry_fraction {
            Some(f) => mtry_count(f, p),
            None => ((p as f64).sqrt().floor() as usize).clamp(1, p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.trees[0].n_features()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let mut acc = Array1::<f64>::zeros(x.nrows());
        for t in &self.trees {
            acc += &t.predict(x)?;
        }
        Ok(acc / self.trees.len() as f64)
    }
}

pub fn fit_rf(d: &Dataset, params: &ForestParams, rng: &mut RngStream) -> Result<Forest> {
    if params.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be >= 1".into()));
    }
    if params.min_node_size == 0 {
        return Err(Error::InvalidConfig("min_node_size must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&params.regularization_factor) {
        return Err(Error::InvalidConfig(
            "regularization_factor must be in [0, 1]".into(),
        ));
    }
    let n = d.n();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_node_size: params.min_node_size,
        mtry: params.mtry(d.p()),
        l2: 0.0,
        l1: 0.0,
        regularization_factor: params.regularization_factor,
    };
    let trees = (0..params.n_trees)
        .map(|_| {
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.below(n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::grow(d.x().view(), d.y().view(), rows, &tree_params, rng)
        })
        .collect();
    Ok(Forest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::fit_tree;
    use crate::randkit::split_rng;
    use ndarray::Array2;

    fn data(seed: u64) -> Dataset {
        let mut rng = split_rng(seed, 0);
        let x = Array2::from_shape_fn((200, 4), |_| rng.normal());
        let y = Array1::from_shape_fn(200, |i| x[[i, 0]] + x[[i, 1]] * x[[i, 2]] + 0.2 * rng.normal());
        Dataset::with_default_names(x, y).unwrap()
    }

    #[test]
    fn single_unbagged_tree_equals_cart() {
        let d = data(1);
        let params = ForestParams {
            n_trees: 1,
            mtry_fraction: Some(1.0),
            bootstrap: false,
            ..Default::default()
        };
        let f = fit_rf(&d, &params, &mut split_rng(1, 1)).unwrap();
        let t = fit_tree(&d, None, 5, 1.0, &mut split_rng(1, 1)).unwrap();
        assert_eq!(
            f.predict(d.x().view()).unwrap(),
            t.predict(d.x().view()).unwrap()
        );
    }

    #[test]
    fn prediction_is_member_mean() {
        let d = data(2);
        let f = fit_rf(&d, &ForestParams { n_trees: 25, ..Default::default() }, &mut split_rng(2, 1))
            .unwrap();
        let pred = f.predict(d.x().view()).unwrap();
        for i in 0..d.n() {
            let row = d.x().row(i);
            let mean = f.trees().iter().map(|t| t.predict_row(row)).sum::<f64>() / 25.0;
            assert!((pred[i] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn default_mtry_is_floor_sqrt() {
        let p = ForestParams::default();
        assert_eq!(p.mtry(5), 2);
        assert_eq!(p.mtry(100), 10);
        assert_eq!(p.mtry(1), 1);
        let q = ForestParams { mtry_fraction: Some(0.0), ..Default::default() };
        assert_eq!(q.mtry(30), 1);
    }

    #[test]
    fn deterministic_given_stream() {
        let d = data(3);
        let a = fit_rf(&d, &ForestParams::default(), &mut split_rng(9, 4)).unwrap();
        let b = fit_rf(&d, &ForestParams::default(), &mut split_rng(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    fn distinct_features(f: &Forest) -> usize {
        let mut used = std::collections::BTreeSet::new();
        for t in f.trees() {
            for n in t.nodes() {
                if let crate::learners::tree::Node::Split { feature, .. } = n {
                    used.insert(*feature);
                }
            }
        }
        used.len()
    }

    #[test]
    fn regularization_factor_penalizes_new_features() {
        let d = data(4);
        let params = |factor: f64| ForestParams {
            n_trees: 1,
            max_depth: Some(4),
            mtry_fraction: Some(1.0),
            bootstrap: false,
            regularization_factor: factor,
            ..Default::default()
        };
        // Every feature is new at the root, so a zero factor zeroes all gains.
        let stump = fit_rf(&d, &params(0.0), &mut split_rng(4, 1)).unwrap();
        assert_eq!(stump.trees()[0].nodes().len(), 1);

        let free = fit_rf(&d, &params(1.0), &mut split_rng(4, 1)).unwrap();
        let penalized = fit_rf(&d, &params(0.05), &mut split_rng(4, 1)).unwrap();
        assert!(distinct_features(&free) >= 2);
        assert!(distinct_features(&penalized) < distinct_features(&free));
    }
}
