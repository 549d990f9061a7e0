//! Ordinary least squares via Householder QR with column pivoting.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Relative threshold on the remaining column norm below which a pivot
/// column is considered linearly dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl LinearModel {
    pub fn new(intercept: f64, coefficients: Array1<f64>) -> Self {
        Self {
            intercept,
            coefficients,
            converged: true,
            iterations: 0,
        }
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok(x.dot(&self.coefficients) + self.intercept)
    }
}

pub fn fit_ols(d: &Dataset) -> Result<LinearModel> {
    let (n, p) = (d.n(), d.p());
    let mut a = Array2::<f64>::ones((n, p + 1));
    a.slice_mut(ndarray::s![.., 1..]).assign(d.x());
    let beta = least_squares(a, d.y().clone())?;
    Ok(LinearModel::new(
        beta[0],
        beta.slice(ndarray::s![1..]).to_owned(),
    ))
}

/// Solves `min ‖a·β − b‖²` for full-column-rank `a`.
pub fn least_squares(mut a: Array2<f64>, mut b: Array1<f64>) -> Result<Array1<f64>> {
    let (n, m) = a.dim();
    if n < m {
        return Err(Error::RankDeficient {
            rank: n,
            columns: m,
        });
    }
    let mut perm: Vec<usize> = (0..m).collect();
    let mut norms: Vec<f64> = (0..m)
        .map(|j| a.column(j).iter().map(|v| v * v).sum())
        .collect();
    let scale = norms.iter().cloned().fold(0.0f64, f64::max).sqrt();
    if scale == 0.0 {
        return Err(Error::RankDeficient { rank: 0, columns: m });
    }

    for k in 0..m {
        // Pivot on the largest remaining column norm (recomputed exactly to
        // avoid downdating drift).
        for j in k..m {
            norms[j] = (k..n).map(|i| a[[i, j]] * a[[i, j]]).sum();
        }
        let (best, best_norm) = (k..m)
            .map(|j| (j, norms[j]))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if best_norm.sqrt() <= RANK_TOL * scale {
            return Err(Error::RankDeficient { rank: k, columns: m });
        }
        if best != k {
            for i in 0..n {
                a.swap([i, k], [i, best]);
            }
            perm.swap(k, best);
            norms.swap(k, best);
        }

        // Householder vector for column k below the diagonal.
        let alpha = {
            let norm = best_norm.sqrt();
            if a[[k, k]] > 0.0 {
                -norm
            } else {
                norm
            }
        };
        let mut v: Vec<f64> = (k..n).map(|i| a[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..m {
                let dot: f64 = (k..n).map(|i| v[i - k] * a[[i, j]]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    a[[i, j]] -= f * v[i - k];
                }
            }
            let dot: f64 = (k..n).map(|i| v[i - k] * b[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                b[i] -= f * v[i - k];
            }
        }
    }

    // Back substitution on the upper triangle.
    let mut z = vec![0.0; m];
    for k in (0..m).rev() {
        let mut s = b[k];
        for j in (k + 1)..m {
            s -= a[[k, j]] * z[j];
        }
        z[k] = s / a[[k, k]];
    }
    let mut beta = Array1::zeros(m);
    for (k, &col) in perm.iter().enumerate() {
        beta[col] = z[k];
    }
    Ok(beta)
}
