//! Fully connected regression networks trained by minibatch gradient descent.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::Dataset;
use crate::error::{Error, Result};
use crate::randkit::RngStream;

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;
const LEAKY_SLOPE: f64 = 0.01;
const CELU_ALPHA: f64 = 1.0;

const ADAMAX_BETA1: f64 = 0.9;
const ADAMAX_BETA2: f64 = 0.999;
const ADAMAX_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Selu,
    Elu,
    Celu,
    Gelu,
}

impl Activation {
    pub const ALL: [Activation; 7] = [
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Tanh,
        Activation::Selu,
        Activation::Elu,
        Activation::Celu,
        Activation::Gelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Selu => "selu",
            Activation::Elu => "elu",
            Activation::Celu => "celu",
            Activation::Gelu => "gelu",
        }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA * z
                } else {
                    SELU_LAMBDA * SELU_ALPHA * z.exp_m1()
                }
            }
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Celu => {
                if z > 0.0 {
                    z
                } else {
                    CELU_ALPHA * (z / CELU_ALPHA).exp_m1()
                }
            }
            Activation::Gelu => 0.5 * z * (1.0 + erf(z / std::f64::consts::SQRT_2)),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA
                } else {
                    SELU_LAMBDA * SELU_ALPHA * z.exp()
                }
            }
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            Activation::Celu => {
                if z > 0.0 {
                    1.0
                } else {
                    (z / CELU_ALPHA).exp()
                }
            }
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
                let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + z * pdf
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown activation `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adamax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnConfig {
    /// Number of hidden layers; 0 gives a single linear unit.
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    /// Batch size as a fraction of the training rows.
    pub batch_fraction: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub dropout_rate: f64,
    pub penalty_alpha: f64,
    pub penalty_lambda: f64,
}

impl Default for NnConfig {
    /// Three hidden layers of 50 ReLU units, AdaMax at 0.01, 32 epochs and a
    /// batch of 10% of the rows (100 at n = 1000).
    fn default() -> Self {
        Self {
            depth: 3,
            width: 50,
            activation: Activation::Relu,
            batch_fraction: 0.1,
            learning_rate: 0.01,
            epochs: 32,
            optimizer: Optimizer::Adamax,
            dropout_rate: 0.0,
            penalty_alpha: 0.5,
            penalty_lambda: 0.0,
        }
    }
}

impl NnConfig {
    pub fn batch_size(&self, n: usize) -> usize {
        ((self.batch_fraction * n as f64).round() as usize).max(1)
    }

    pub fn batches_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size(n))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.depth > 0 && self.width == 0 {
            return bad("width must be >= 1");
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return bad("batch_fraction must be in (0, 1]");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.penalty_alpha) {
            return bad("penalty_alpha must be in [0, 1]");
        }
        if !(self.penalty_lambda >= 0.0) {
            return bad("penalty_lambda must be >= 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Gradient of the loss for every layer, same shapes as the parameters.
struct Gradients {
    weights: Vec<Array2<f64>>,
    bias: Vec<Array1<f64>>,
}

struct Penalty {
    alpha: f64,
    lambda: f64,
}

impl Network {
    /// Freshly initialized network for `p` inputs.
    pub fn init(p: usize, cfg: &NnConfig, rng: &mut RngStream) -> Self {
        let mut dims = vec![p];
        dims.extend(std::iter::repeat(cfg.width).take(cfg.depth));
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weights = if cfg.activation == Activation::Selu {
                    let sd = (1.0 / fan_in as f64).sqrt();
                    Array2::from_shape_fn((fan_in, fan_out), |_| sd * rng.normal())
                } else {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Array2::from_shape_fn((fan_in, fan_out), |_| limit * (2.0 * rng.uniform() - 1.0))
                };
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Network {
            layers,
            activation: cfg.activation,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Training loss (without dropout) on a batch and its gradient with
    /// respect to every weight matrix.
    pub fn loss_and_weight_gradients(
        &self,
        x: ArrayView2<f64>,
        y: &Array1<f64>,
        penalty_alpha: f64,
        penalty_lambda: f64,
    ) -> (f64, Vec<Array2<f64>>) {
        let pen = Penalty {
            alpha: penalty_alpha,
            lambda: penalty_lambda,
        };
        let (loss, g) = self.loss_and_gradient(x, y, None, &pen);
        (loss, g.weights)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_features(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weights) + &layer.bias;
            if i < last {
                h.mapv_inplace(|z| self.activation.apply(z));
            }
        }
        Ok(h.column(0).to_owned())
    }

    fn penalty_value(&self, pen: &Penalty) -> f64 {
        if pen.lambda == 0.0 {
            return 0.0;
        }
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        for layer in &self.layers {
            for w in layer.weights.iter() {
                l1 += w.abs();
                l2 += w * w;
            }
        }
        pen.lambda * (pen.alpha * l1 + (1.0 - pen.alpha) * l2)
    }

    /// Mean squared error plus penalty on a batch, and its gradient.
    /// `masks` holds inverted-dropout multipliers per hidden layer.
    fn loss_and_gradient(
        &self,
        x: ArrayView2<f64>,
        y: &Array1<f64>,
        masks: Option<&[Array2<f64>]>,
        pen: &Penalty,
    ) -> (f64, Gradients) {
        let m = x.nrows() as f64;
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weights) + &layer.bias;
            inputs.push(h);
            if i < last {
                let mut a = z.mapv(|v| self.activation.apply(v));
                if let Some(masks) = masks {
                    a *= &masks[i];
                }
                pre.push(z);
                h = a;
            } else {
                pre.push(z.clone());
                h = z;
            }
        }
        let out = h.column(0);
        let diff = &out - y;
        let loss = diff.dot(&diff) / m + self.penalty_value(pen);

        let mut weights = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut bias = vec![Array1::zeros(0); self.layers.len()];
        let mut delta = (diff * (2.0 / m)).insert_axis(Axis(1));
        for i in (0..self.layers.len()).rev() {
            let mut gw = inputs[i].t().dot(&delta);
            if pen.lambda != 0.0 {
                let w = &self.layers[i].weights;
                gw.zip_mut_with(w, |g, &wv| {
                    *g += pen.lambda * (pen.alpha * sign(wv) + 2.0 * (1.0 - pen.alpha) * wv);
                });
            }
            weights[i] = gw;
            bias[i] = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                if let Some(masks) = masks {
                    back *= &masks[i - 1];
                }
                back.zip_mut_with(&pre[i - 1], |d, &z| *d *= self.activation.derivative(z));
                delta = back;
            }
        }
        (loss, Gradients { weights, bias })
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    t: i32,
    m_w: Vec<Array2<f64>>,
    u_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    u_b: Vec<Array1<f64>>,
}

impl OptimizerState {
    fn new(net: &Network, kind: Optimizer, lr: f64) -> Self {
        let zw = || net.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect();
        let zb = || net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect();
        Self {
            kind,
            lr,
            t: 0,
            m_w: zw(),
            u_w: zw(),
            m_b: zb(),
            u_b: zb(),
        }
    }

    fn step(&mut self, net: &mut Network, g: &Gradients) {
        self.t += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (layer, (gw, gb)) in net.layers.iter_mut().zip(g.weights.iter().zip(&g.bias)) {
                    layer.weights.scaled_add(-self.lr, gw);
                    layer.bias.scaled_add(-self.lr, gb);
                }
            }
            Optimizer::Adamax => {
                let rate = self.lr / (1.0 - ADAMAX_BETA1.powi(self.t));
                for i in 0..net.layers.len() {
                    adamax_update(
                        net.layers[i].weights.iter_mut(),
                        g.weights[i].iter(),
                        self.m_w[i].iter_mut(),
                        self.u_w[i].iter_mut(),
                        rate,
                    );
                    adamax_update(
                        net.layers[i].bias.iter_mut(),
                        g.bias[i].iter(),
                        self.m_b[i].iter_mut(),
                        self.u_b[i].iter_mut(),
                        rate,
                    );
                }
            }
        }
    }
}

fn adamax_update<'a>(
    params: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'a f64>,
    m: impl Iterator<Item = &'a mut f64>,
    u: impl Iterator<Item = &'a mut f64>,
    rate: f64,
) {
    for (((p, g), m), u) in params.zip(grads).zip(m).zip(u) {
        *m = ADAMAX_BETA1 * *m + (1.0 - ADAMAX_BETA1) * g;
        *u = (ADAMAX_BETA2 * *u).max(g.abs());
        *p -= rate * *m / (*u + ADAMAX_EPS);
    }
}

/// Called after every optimizer step with the 1-based step index.
pub type TraceHook<'a> = &'a mut dyn FnMut(usize, &Network);

pub fn fit_nn(
    d: &Dataset,
    cfg: &NnConfig,
    rng: &mut RngStream,
    mut trace: Option<TraceHook<'_>>,
) -> Result<Network> {
    cfg.validate()?;
    let n = d.n();
    let mut net = Network::init(d.p(), cfg, rng);
    let mut opt = OptimizerState::new(&net, cfg.optimizer, cfg.learning_rate);
    let pen = Penalty {
        alpha: cfg.penalty_alpha,
        lambda: cfg.penalty_lambda,
    };
    let batch = cfg.batch_size(n);
    let keep = 1.0 - cfg.dropout_rate;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for rows in order.chunks(batch) {
            let xb = d.x().select(Axis(0), rows);
            let yb = d.y().select(Axis(0), rows);
            let masks: Option<Vec<Array2<f64>>> = (cfg.dropout_rate > 0.0).then(|| {
                (0..cfg.depth)
                    .map(|_| {
                        Array2::from_shape_fn((rows.len(), cfg.width), |_| {
                            if rng.uniform() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect()
            });
            let (loss, grads) = net.loss_and_gradient(xb.view(), &yb, masks.as_deref(), &pen);
            step += 1;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { step });
            }
            opt.step(&mut net, &grads);
            if net.layers.iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
                return Err(Error::DivergedLoss { step });
            }
            if let Some(hook) = trace.as_mut() {
                hook(step, &net);
            }
        }
    }
    Ok(net)
}
