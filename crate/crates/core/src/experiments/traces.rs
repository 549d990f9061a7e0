use serde::{Deserialize, Serialize};

use crate::ace::{step_size, DEFAULT_H_FRACTION};
use crate::error::{Error, Result};
use crate::learners::{fit_linear_booster, fit_nn, Network, NnConfig};
use crate::randkit::split_rng;
use crate::scenarios::{gen_linear, ScenarioSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostStep {
    /// 1-based.
    pub step: usize,
    pub feature: usize,
    pub cumulative: Vec<f64>,
    pub increment: Vec<f64>,
}

/// Per-step coefficients of the linear booster on one simulated dataset.
pub fn boosting_trace(
    spec: &ScenarioSpec,
    n: usize,
    n_steps: usize,
    eta: f64,
    seed: u64,
) -> Result<Vec<BoostStep>> {
    let d = gen_linear(spec, n, &mut split_rng(seed, 0))?;
    let fit = fit_linear_booster(&d, n_steps, eta)?;
    Ok(fit
        .trajectory
        .iter()
        .zip(&fit.increments)
        .enumerate()
        .map(|(i, (cum, inc))| BoostStep {
            step: i + 1,
            feature: fit.selected.get(i).copied().unwrap_or(usize::MAX),
            cumulative: cum.to_vec(),
            increment: inc.to_vec(),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnTracePoint {
    /// 1-based optimizer step.
    pub step: usize,
    pub ace: Vec<f64>,
}

/// ACE of the listed features after every minibatch update.
pub fn nn_trace(
    spec: &ScenarioSpec,
    n: usize,
    cfg: &NnConfig,
    features: &[usize],
    seed: u64,
) -> Result<Vec<NnTracePoint>> {
    if features.iter().any(|&k| k >= spec.p) {
        return Err(Error::InvalidConfig(format!(
            "trace features {features:?} out of range for p = {}",
            spec.p
        )));
    }
    let d = gen_linear(spec, n, &mut split_rng(seed, 0))?;
    let x = d.x().view();
    let shifted: Vec<(f64, ndarray::Array2<f64>)> = features
        .iter()
        .map(|&k| {
            let h = step_size(x, k, DEFAULT_H_FRACTION)?;
            let mut up = x.to_owned();
            up.column_mut(k).mapv_inplace(|v| v + h);
            Ok((h, up))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let mut failure = None;
    let mut hook = |step: usize, net: &Network| {
        if failure.is_some() {
            return;
        }
        let result = (|| -> Result<Vec<f64>> {
            let base = net.predict(x)?;
            shifted
                .iter()
                .map(|(h, up)| Ok(((net.predict(up.view())? - &base) / *h).mean().unwrap_or(0.0)))
                .collect()
        })();
        match result {
            Ok(ace) => points.push(NnTracePoint { step, ace }),
            Err(e) => failure = Some(e),
        }
    };
    fit_nn(&d, cfg, &mut split_rng(seed, 1), Some(&mut hook))?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(points)
}
