//! Finite-difference effect extraction from any [`Predictor`].
//!
//! The conditional effect of feature k at row i is the slope of the model's
//! prediction when x_ik is nudged by h = h_fraction·sd(x_k); the average
//! conditional effect (ACE) is the mean of those slopes over the rows.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Predictor;

pub const DEFAULT_H_FRACTION: f64 = 0.1;
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difference {
    #[default]
    Forward,
    Central,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AceReport {
    /// Column indices the report covers, in order.
    pub features: Vec<usize>,
    /// `n × features.len()` conditional effects.
    pub ce: Array2<f64>,
    pub ace: Array1<f64>,
    pub h: Array1<f64>,
    pub weighted: bool,
    pub weights: Option<Array1<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub pair: (usize, usize),
    pub ce2: Array1<f64>,
    pub value: f64,
    pub h_m: f64,
    pub h_k: f64,
}

/// Per-column mean and sample sd used by [`standardize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Array1<f64>,
    pub sds: Array1<f64>,
}

fn sample_sd(col: ArrayView1<f64>) -> f64 {
    if col.len() < 2 {
        return 0.0;
    }
    col.var(1.0).sqrt()
}

fn check_feature(m: &(impl Predictor + ?Sized), x: ArrayView2<f64>, k: usize) -> Result<()> {
    if x.ncols() != m.n_features() {
        return Err(Error::DimensionMismatch {
            expected: m.n_features(),
            got: x.ncols(),
        });
    }
    if k >= x.ncols() {
        return Err(Error::InvalidConfig(format!(
            "feature index {k} out of range for {} columns",
            x.ncols()
        )));
    }
    Ok(())
}

/// `h_fraction · sd(x_k)`, failing on a constant column.
pub fn step_size(x: ArrayView2<f64>, k: usize, h_fraction: f64) -> Result<f64> {
    if !(h_fraction > 0.0) {
        return Err(Error::InvalidConfig(format!("h_fraction must be > 0, got {h_fraction}")));
    }
    let sd = sample_sd(x.column(k));
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance { feature: k });
    }
    Ok(h_fraction * sd)
}

fn shifted(x: ArrayView2<f64>, shifts: &[(usize, f64)]) -> Array2<f64> {
    let mut out = x.to_owned();
    for &(k, h) in shifts {
        out.column_mut(k).mapv_inplace(|v| v + h);
    }
    out
}

fn effects_at(
    m: &(impl Predictor + ?Sized),
    x: ArrayView2<f64>,
    k: usize,
    h: f64,
    scheme: Difference,
) -> Result<Array1<f64>> {
    match scheme {
        Difference::Forward => {
            let up = m.predict(shifted(x, &[(k, h)]).view())?;
            let base = m.predict(x)?;
            Ok((up - base) / h)
        }
        Difference::Central => {
            let up = m.predict(shifted(x, &[(k, h)]).view())?;
            let down = m.predict(shifted(x, &[(k, -h)]).view())?;
            Ok((up - down) / (2.0 * h))
        }
    }
}

/// Forward-difference conditional effects of feature `k` for every row.
pub fn conditional_effects(
    m: &(impl Predictor + ?Sized),
    x: ArrayView2<f64>,
    k: usize,
    h_fraction: f64,
) -> Result<Array1<f64>> {
    conditional_effects_with(m, x, k, h_fraction, Difference::Forward)
}

pub fn conditional_effects_with(
    m: &(impl Predictor + ?Sized),
    x: ArrayView2<f64>,
    k: usize,
    h_fraction: f64,
    scheme: Difference,
) -> Result<Array1<f64>> {
    check_feature(m, x, k)?;
    let h = step_size(x, k, h_fraction)?;
    effects_at(m, x, k, h, scheme)
}

/// Unweighted ACE for every feature.
pub fn ace(m: &(impl Predictor + ?Sized), x: ArrayView2<f64>, h_fraction: f64) -> Result<AceReport> {
    ace_with(m, x, h_fraction, Difference::Forward)
}

pub fn ace_with(
    m: &(impl Predictor + ?Sized),
    x: ArrayView2<f64>,
    h_fraction: f64,
    scheme: Difference,
) -> Result<AceReport> {
    let p = x.ncols();
    if p != m.n_features() {
        return Err(Error::DimensionMismatch {
            expected: m.n_features(),
            got: p,
        });
    }
    let h: Vec<f64> = (0..p)
        .map(|k| step_size(x, k, h_fraction))
        .collect::<Result<_>>()?;
    let columns: Vec<Array1<f64>> = (0..p)
        .into_par_iter()
        .map(|k| effects_at(m, x, k, h[k], scheme))
        .collect::<Result<_>>()?;
    let mut ce = Array2::zeros((x.nrows(), p));
    for (k, col) in columns.into_iter().enumerate() {
        ce.column_mut(k).assign(&col);
    }
    let ace = ce.mean_axis(Axis(0)).expect("non-empty");
    Ok(AceReport {
        features: (0..p).collect(),
        ce,
        ace,
        h: Array1::from(h),
        weighted: false,
        weights: None,
    })
}

/// Silverman's rule: 1.06·min(sd, IQR/1.34)·n^(−1/5).
pub fn silverman_bandwidth(x: ArrayView1<f64>) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let sd = sample_sd(x);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    1.06 * spread * (x.len() as f64).powf(-0.2)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Gaussian kernel density of `sample` evaluated at `points`.
pub fn kde_at(sample: ArrayView1<f64>, points: ArrayView1<f64>, bandwidth: f64) -> Array1<f64> {
    let norm = 1.0 / (sample.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let pts = points.to_vec();
    let dens: Vec<f64> = pts
        .par_iter()
        .map(|&t| {
            sample
                .iter()
                .map(|&s| {
                    let u = (t - s) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Array1::from(dens)
}

/// Density estimate at each sample point; Silverman bandwidth by default.
pub fn kde_1d(x: ArrayView1<f64>, bandwidth: Option<f64>) -> Result<Array1<f64>> {
    if x.len() < 2 || !(sample_sd(x) > 0.0) {
        return Err(Error::ZeroVariance { feature: 0 });
    }
    let bw = match bandwidth {
        Some(b) if b > 0.0 => b,
        Some(b) => return Err(Error::InvalidConfig(format!("bandwidth must be > 0, got {b}"))),
        None => silverman_bandwidth(x),
    };
    Ok(kde_at(x, x, bw))
}

/// Inverse-density weights, floored at `floor_fraction·max density`,
/// normalized to sum to one.
pub fn density_weights(col: ArrayView1<f64>, floor_fraction: f64) -> Result<Array1<f64>> {
    let dens = kde_1d(col, None)?;
    let floor = floor_fraction * dens.iter().cloned().fold(0.0, f64::max);
    let raw = dens.mapv(|d| 1.0 / d.max(floor));
    let total = raw.sum();
    Ok(raw / total)
}

/// ACE of feature `k` averaged with the given row weights.
pub fn ace_with_weights(
    m: &(impl Predictor + ?Sized),
    x: ArrayView2<f64>,
    k: usize,
    h_fraction: f64,
    weights: Array1<f64>,
) -> Result<AceReport> {
    check_feature(m, x, k)?;
    if weights.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidData("weights must be nonnegative".into()));
    }
    let total = weights.sum();
    if !(total > 0.0) {
        return Err(Error::InvalidData("weights sum to zero".into()));
    }
    let weights = weights / total;
    let h = step_size(x, k, h_fraction)?;
    let ce = effects_at(m, x, k, h, Difference::Forward)?;
    let value = weights.dot(&ce);
    Ok(AceReport {
        features: vec![k],
        ce: ce.insert_axis(Axis(1)),
        ace: Array1::from(vec![value]),
        h: Array1::from(vec![h]),
        weighted: true,
        weights: Some(weights),
    })
}

/// ACE of feature `k` weighted by the inverse of its marginal density.
pub fn weighted_ace(
    m: &(impl Predictor + ?Sized),
    x: ArrayView2<f64>,
    k: usize,
    h_fraction: f64,
    density_floor_fraction: f64,
) -> Result<AceReport> {
    check_feature(m, x, k)?;
    let weights = density_weights(x.column(k), density_floor_fraction).map_err(|e| match e {
        Error::ZeroVariance { .. } => Error::ZeroVariance { feature: k },
        other => other,
    })?;
    ace_with_weights(m, x, k, h_fraction, weights)
}

/// Average mixed second difference for the pair `(mi, ki)`.
///
/// Inputs are expected on the standardized scale.
pub fn interaction_ace(
    m: &(impl Predictor + ?Sized),
    x: ArrayView2<f64>,
    pair: (usize, usize),
    h_fraction: f64,
) -> Result<InteractionReport> {
    let (mi, ki) = pair;
    if mi == ki {
        return Err(Error::SameFeature(mi));
    }
    check_feature(m, x, mi)?;
    check_feature(m, x, ki)?;
    let h_m = step_size(x, mi, h_fraction)?;
    let h_k = step_size(x, ki, h_fraction)?;
    let f = |a: f64, b: f64| m.predict(shifted(x, &[(mi, a), (ki, b)]).view());
    let pp = f(h_m, h_k)?;
    let mp = f(-h_m, h_k)?;
    let pm = f(h_m, -h_k)?;
    let mm = f(-h_m, -h_k)?;
    let ce2 = (pp - mp - pm + mm) / (4.0 * h_m * h_k);
    let value = ce2.mean().expect("non-empty");
    Ok(InteractionReport {
        pair,
        ce2,
        value,
        h_m,
        h_k,
    })
}

/// Centers each column and scales it to unit sample sd.
pub fn standardize(x: ArrayView2<f64>) -> Result<(Array2<f64>, Standardization)> {
    let means = x.mean_axis(Axis(0)).ok_or_else(|| Error::InvalidData("empty matrix".into()))?;
    let sds = Array1::from_iter(x.columns().into_iter().map(sample_sd));
    if let Some(k) = sds.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::ZeroVariance { feature: k });
    }
    let z = (&x - &means) / &sds;
    Ok((z, Standardization { means, sds }))
}

impl Standardization {
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.means) / &self.sds
    }

    pub fn invert(&self, z: ArrayView2<f64>) -> Array2<f64> {
        &z * &self.sds + &self.means
    }
}

pub fn unstandardize(z: ArrayView2<f64>, record: &Standardization) -> Array2<f64> {
    record.invert(z)
}
