//! Elastic net by cyclic coordinate descent with covariance updates.
//!
//! The objective, on internally standardized features (population sd), is
//!
//! ```text
//! (1/2n)·‖y − β₀ − Xβ‖² + λ·[α‖β‖₁ + (1−α)/2·‖β‖₂²]
//! ```
//!
//! with an unpenalized intercept. Coefficients are mapped back to the
//! original feature scale before returning.

use ndarray::{Array1, Array2, Axis};

use super::{Dataset, LinearModel};
use crate::error::{Error, Result};
use crate::randkit::RngStream;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Standardized sufficient statistics shared by the solver and the λ grid.
struct Standardized {
    means: Array1<f64>,
    sds: Array1<f64>,
    y_mean: f64,
    gram: Array2<f64>,
    xty: Array1<f64>,
}

fn standardize(d: &Dataset) -> Standardized {
    let n = d.n() as f64;
    let x = d.x();
    let means = x.mean_axis(Axis(0)).expect("non-empty");
    let sds = x.var_axis(Axis(0), 0.0).mapv(f64::sqrt);
    let mut xs = x - &means;
    for (mut col, &sd) in xs.columns_mut().into_iter().zip(sds.iter()) {
        if sd > 0.0 {
            col /= sd;
        } else {
            col.fill(0.0);
        }
    }
    let y_mean = d.y().mean().expect("non-empty");
    let yc = d.y() - y_mean;
    let gram = xs.t().dot(&xs) / n;
    let xty = xs.t().dot(&yc) / n;
    Standardized {
        means,
        sds,
        y_mean,
        gram,
        xty,
    }
}

/// Smallest λ at which every coefficient is zero.
pub fn lambda_max(d: &Dataset, alpha: f64) -> f64 {
    let s = standardize(d);
    let m = s.xty.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    m / alpha.max(1e-3)
}

/// Geometric grid from `lambda_max` down to `ratio·lambda_max`, descending.
pub fn lambda_grid(d: &Dataset, alpha: f64, count: usize, ratio: f64) -> Vec<f64> {
    let hi = lambda_max(d, alpha).max(1e-12);
    if count <= 1 {
        return vec![hi];
    }
    let step = ratio.ln() / (count - 1) as f64;
    (0..count).map(|i| hi * (step * i as f64).exp()).collect()
}

pub fn fit_elastic_net(
    d: &Dataset,
    alpha: f64,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LinearModel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha must be in [0, 1], got {alpha}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let s = standardize(d);
    let p = d.p();
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);

    let mut beta = Array1::<f64>::zeros(p);
    // gram · beta, maintained incrementally.
    let mut gb = Array1::<f64>::zeros(p);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let gjj = s.gram[[j, j]];
            if gjj == 0.0 {
                continue;
            }
            let old = beta[j];
            let z = s.xty[j] - gb[j] + gjj * old;
            let new = soft_threshold(z, l1) / (gjj + l2);
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                gb.scaled_add(delta, &s.gram.column(j));
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < tol {
            converged = true;
            break;
        }
    }

    let coefficients = Array1::from_shape_fn(p, |j| {
        if s.sds[j] > 0.0 {
            beta[j] / s.sds[j]
        } else {
            0.0
        }
    });
    let intercept = s.y_mean - coefficients.dot(&s.means);
    let model = LinearModel {
        intercept,
        coefficients,
        converged,
        iterations,
    };
    if converged {
        Ok(model)
    } else {
        Err(Error::NotConverged {
            iterations,
            partial: Box::new(model),
        })
    }
}

/// Picks the grid value with the lowest mean out-of-fold squared error.
/// Ties go to the larger λ.
pub fn cv_select_lambda(
    d: &Dataset,
    alpha: f64,
    folds: usize,
    lambda_grid: &[f64],
    rng: &mut RngStream,
) -> Result<f64> {
    if folds < 2 || folds > d.n() {
        return Err(Error::InvalidConfig(format!(
            "folds must be in [2, n], got {folds}"
        )));
    }
    if lambda_grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    let mut order: Vec<usize> = (0..d.n()).collect();
    rng.shuffle(&mut order);
    let mut assignment = vec![0usize; d.n()];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % folds;
    }

    let mut errors = vec![0.0; lambda_grid.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..d.n()).filter(|&i| assignment[i] != fold).collect();
        let test: Vec<usize> = (0..d.n()).filter(|&i| assignment[i] == fold).collect();
        let train_d = d.select_rows(&train);
        let test_d = d.select_rows(&test);
        for (e, &lambda) in errors.iter_mut().zip(lambda_grid) {
            let model = match fit_elastic_net(&train_d, alpha, lambda, DEFAULT_TOL, DEFAULT_MAX_ITER)
            {
                Ok(m) => m,
                Err(Error::NotConverged { partial, .. }) => *partial,
                Err(other) => return Err(other),
            };
            let pred = model.predict(test_d.x().view())?;
            let mse = (&pred - test_d.y()).mapv(|v| v * v).mean().unwrap_or(0.0);
            *e += mse / folds as f64;
        }
    }

    let mut best = 0;
    for i in 1..lambda_grid.len() {
        let better = errors[i] < errors[best]
            || (errors[i] == errors[best] && lambda_grid[i] > lambda_grid[best]);
        if better {
            best = i;
        }
    }
    Ok(lambda_grid[best])
}
