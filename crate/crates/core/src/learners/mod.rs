//! The predictive algorithms, each deterministic given an [`RngStream`].

mod booster;
mod dataset;
mod elastic_net;
mod forest;
mod gbt;
mod linear;
mod nn;
mod tree;

use std::fmt;

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randkit::RngStream;

pub use booster::{fit_linear_booster, LinearBoosterFit};
pub use dataset::{default_feature_names, Dataset};
pub use elastic_net::{
    cv_select_lambda, fit_elastic_net, lambda_grid, lambda_max, soft_threshold, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
pub use forest::{fit_rf, Forest, ForestParams};
pub use gbt::{fit_gbt, BoostParams, BoostedTrees};
pub use linear::{fit_ols, least_squares, LinearModel};
pub use nn::{fit_nn, Activation, Layer, Network, NnConfig, Optimizer, TraceHook, SELU_ALPHA, SELU_LAMBDA};
pub use tree::{fit_tree, mtry_count, Node, Tree, TreeParams};

/// Anything that maps a feature matrix to predictions.
pub trait Predictor: Sync {
    fn n_features(&self) -> usize;
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>>;
}

impl Predictor for LinearModel {
    fn n_features(&self) -> usize {
        LinearModel::n_features(self)
    }
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        LinearModel::predict(self, x)
    }
}

impl Predictor for Tree {
    fn n_features(&self) -> usize {
        Tree::n_features(self)
    }
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Tree::predict(self, x)
    }
}

impl Predictor for Forest {
    fn n_features(&self) -> usize {
        Forest::n_features(self)
    }
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Forest::predict(self, x)
    }
}

impl Predictor for BoostedTrees {
    fn n_features(&self) -> usize {
        BoostedTrees::n_features(self)
    }
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        BoostedTrees::predict(self, x)
    }
}

impl Predictor for Network {
    fn n_features(&self) -> usize {
        Network::n_features(self)
    }
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Network::predict(self, x)
    }
}

/// Wraps a row-wise closure as a predictor.
pub struct FnPredictor<F> {
    p: usize,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(ndarray::ArrayView1<f64>) -> f64 + Sync,
{
    pub fn new(p: usize, f: F) -> Self {
        Self { p, f }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(ndarray::ArrayView1<f64>) -> f64 + Sync,
{
    fn n_features(&self) -> usize {
        self.p
    }
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: x.ncols(),
            });
        }
        Ok(x.rows().into_iter().map(|r| (self.f)(r)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Ols,
    ElasticNet,
    Tree,
    RandomForest,
    Gbt,
    LinearBooster,
    NeuralNet,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Ols => "ols",
            LearnerKind::ElasticNet => "elastic_net",
            LearnerKind::Tree => "tree",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::Gbt => "gbt",
            LearnerKind::LinearBooster => "linear_booster",
            LearnerKind::NeuralNet => "neural_net",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_enet_alpha() -> f64 {
    0.2
}
fn default_cv_folds() -> usize {
    10
}
fn default_n_lambda() -> usize {
    50
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_min_node() -> usize {
    5
}
fn default_mtry_fraction() -> f64 {
    1.0
}
fn default_booster_steps() -> usize {
    1000
}
fn default_booster_eta() -> f64 {
    0.1
}

/// A learner plus its hyperparameters. Serializes with a `kind` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    Ols,
    ElasticNet {
        #[serde(default = "default_enet_alpha")]
        alpha: f64,
        /// Fixed penalty; `None` selects it by cross-validation.
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default = "default_cv_folds")]
        cv_folds: usize,
        #[serde(default = "default_n_lambda")]
        n_lambda: usize,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    Tree {
        #[serde(default)]
        max_depth: Option<usize>,
        #[serde(default = "default_min_node")]
        min_node_size: usize,
        #[serde(default = "default_mtry_fraction")]
        mtry_fraction: f64,
    },
    RandomForest(ForestParams),
    Gbt(BoostParams),
    LinearBooster {
        #[serde(default = "default_booster_steps")]
        n_steps: usize,
        #[serde(default = "default_booster_eta")]
        eta: f64,
    },
    NeuralNet(NnConfig),
}

/// Names accepted by [`LearnerConfig::preset`].
pub const PRESETS: [&str; 8] = ["ols", "enet", "tree", "rf", "gbt", "booster", "nn", "nn_dropout"];

impl LearnerConfig {
    pub fn elastic_net_cv() -> Self {
        LearnerConfig::ElasticNet {
            alpha: default_enet_alpha(),
            lambda: None,
            cv_folds: default_cv_folds(),
            n_lambda: default_n_lambda(),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    /// Default configuration for a short model name.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "ols" => LearnerConfig::Ols,
            "enet" | "elastic_net" => Self::elastic_net_cv(),
            "tree" => LearnerConfig::Tree {
                max_depth: None,
                min_node_size: default_min_node(),
                mtry_fraction: 1.0,
            },
            "rf" | "random_forest" => LearnerConfig::RandomForest(ForestParams::default()),
            "gbt" => LearnerConfig::Gbt(BoostParams::default()),
            "booster" | "linear_booster" => LearnerConfig::LinearBooster {
                n_steps: default_booster_steps(),
                eta: default_booster_eta(),
            },
            "nn" | "neural_net" => LearnerConfig::NeuralNet(NnConfig::default()),
            "nn_dropout" => LearnerConfig::NeuralNet(NnConfig {
                dropout_rate: 0.3,
                ..NnConfig::default()
            }),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown model `{other}`; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerConfig::Ols => LearnerKind::Ols,
            LearnerConfig::ElasticNet { .. } => LearnerKind::ElasticNet,
            LearnerConfig::Tree { .. } => LearnerKind::Tree,
            LearnerConfig::RandomForest(_) => LearnerKind::RandomForest,
            LearnerConfig::Gbt(_) => LearnerKind::Gbt,
            LearnerConfig::LinearBooster { .. } => LearnerKind::LinearBooster,
            LearnerConfig::NeuralNet(_) => LearnerKind::NeuralNet,
        }
    }

    pub fn fit(&self, d: &Dataset, rng: &mut RngStream) -> Result<TrainedModel> {
        Ok(match self {
            LearnerConfig::Ols => TrainedModel::Ols(fit_ols(d)?),
            LearnerConfig::ElasticNet {
                alpha,
                lambda,
                cv_folds,
                n_lambda,
                tol,
                max_iter,
            } => {
                let lambda = match lambda {
                    Some(l) => *l,
                    None => {
                        let ratio = if d.n() > d.p() { 1e-4 } else { 1e-2 };
                        let grid = lambda_grid(d, *alpha, *n_lambda, ratio);
                        cv_select_lambda(d, *alpha, (*cv_folds).min(d.n()), &grid, rng)?
                    }
                };
                let model = fit_elastic_net(d, *alpha, lambda, *tol, *max_iter)?;
                TrainedModel::ElasticNet { model, lambda }
            }
            LearnerConfig::Tree {
                max_depth,
                min_node_size,
                mtry_fraction,
            } => TrainedModel::Tree(fit_tree(d, *max_depth, *min_node_size, *mtry_fraction, rng)?),
            LearnerConfig::RandomForest(params) => TrainedModel::RandomForest(fit_rf(d, params, rng)?),
            LearnerConfig::Gbt(params) => TrainedModel::Gbt(fit_gbt(d, params, rng)?),
            LearnerConfig::LinearBooster { n_steps, eta } => {
                TrainedModel::LinearBooster(fit_linear_booster(d, *n_steps, *eta)?)
            }
            LearnerConfig::NeuralNet(cfg) => TrainedModel::NeuralNet(fit_nn(d, cfg, rng, None)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TrainedModel {
    Ols(LinearModel),
    ElasticNet { model: LinearModel, lambda: f64 },
    Tree(Tree),
    RandomForest(Forest),
    Gbt(BoostedTrees),
    LinearBooster(LinearBoosterFit),
    NeuralNet(Network),
}

impl TrainedModel {
    pub fn kind(&self) -> LearnerKind {
        match self {
            TrainedModel::Ols(_) => LearnerKind::Ols,
            TrainedModel::ElasticNet { .. } => LearnerKind::ElasticNet,
            TrainedModel::Tree(_) => LearnerKind::Tree,
            TrainedModel::RandomForest(_) => LearnerKind::RandomForest,
            TrainedModel::Gbt(_) => LearnerKind::Gbt,
            TrainedModel::LinearBooster(_) => LearnerKind::LinearBooster,
            TrainedModel::NeuralNet(_) => LearnerKind::NeuralNet,
        }
    }

    /// The fitted linear model for the linear learners.
    pub fn linear(&self) -> Option<&LinearModel> {
        match self {
            TrainedModel::Ols(m) => Some(m),
            TrainedModel::ElasticNet { model, .. } => Some(model),
            TrainedModel::LinearBooster(fit) => Some(&fit.model),
            _ => None,
        }
    }

    fn as_predictor(&self) -> &dyn Predictor {
        match self {
            TrainedModel::Ols(m) => m,
            TrainedModel::ElasticNet { model, .. } => model,
            TrainedModel::Tree(t) => t,
            TrainedModel::RandomForest(f) => f,
            TrainedModel::Gbt(b) => b,
            TrainedModel::LinearBooster(fit) => &fit.model,
            TrainedModel::NeuralNet(n) => n,
        }
    }
}

impl Predictor for TrainedModel {
    fn n_features(&self) -> usize {
        self.as_predictor().n_features()
    }
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.as_predictor().predict(x)
    }
}
