//! Componentwise linear boosting.
//!
//! Each step regresses the current residuals on the single feature with the
//! largest absolute residual correlation and adds a shrunken copy of that
//! slope to the running coefficient vector.

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use super::{Dataset, LinearModel};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBoosterFit {
    pub model: LinearModel,
    /// Cumulative coefficients after each step.
    pub trajectory: Vec<Array1<f64>>,
    /// Coefficient increment contributed by each step.
    pub increments: Vec<Array1<f64>>,
    /// Feature chosen at each step.
    pub selected: Vec<usize>,
}

pub fn fit_linear_booster(d: &Dataset, n_steps: usize, eta: f64) -> Result<LinearBoosterFit> {
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be >= 1".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidConfig(format!("eta must be > 0, got {eta}")));
    }
    let p = d.p();
    let means = d.x().mean_axis(Axis(0)).expect("non-empty");
    let xc = d.x() - &means;
    let ss: Vec<f64> = xc.columns().into_iter().map(|c| c.dot(&c)).collect();
    let y_mean = d.y().mean().expect("non-empty");
    let mut residual = d.y() - y_mean;

    let mut beta = Array1::<f64>::zeros(p);
    let mut trajectory = Vec::with_capacity(n_steps);
    let mut increments = Vec::with_capacity(n_steps);
    let mut selected = Vec::with_capacity(n_steps);

    for _ in 0..n_steps {
        let mut best = None;
        let mut best_score = -1.0;
        for j in 0..p {
            if ss[j] == 0.0 {
                continue;
            }
            let score = xc.column(j).dot(&residual).abs() / ss[j].sqrt();
            if score > best_score {
                best_score = score;
                best = Some(j);
            }
        }
        let mut step = Array1::<f64>::zeros(p);
        if let Some(j) = best {
            let slope = xc.column(j).dot(&residual) / ss[j];
            let delta = eta * slope;
            beta[j] += delta;
            step[j] = delta;
            residual.scaled_add(-delta, &xc.column(j));
            selected.push(j);
        }
        trajectory.push(beta.clone());
        increments.push(step);
    }

    let intercept = y_mean - beta.dot(&means);
    Ok(LinearBoosterFit {
        model: LinearModel {
            intercept,
            coefficients: beta,
            converged: true,
            iterations: n_steps,
        },
        trajectory,
        increments,
        selected,
    })
}
