use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ace::{ace, DEFAULT_H_FRACTION};
use crate::error::{Error, Result};
use crate::learners::{LearnerConfig, Predictor};
use crate::randkit::split_rng;
use crate::scenarios::ScenarioSpec;

/// Outcome of one simulate-fit-evaluate cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub ace: Option<Vec<f64>>,
    /// Raw coefficients for the linear learners.
    pub coefficients: Option<Vec<f64>>,
    pub holdout_mse: Option<f64>,
    pub error: Option<String>,
}

impl ReplicateRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Replicate `r` draws its data from stream `r` and fits with stream
/// `r + replicates`. Each replicate gets a fresh holdout of `n` rows from the
/// same covariance as its training data.
pub fn run_replicates(
    spec: &ScenarioSpec,
    cfg: &LearnerConfig,
    n: usize,
    replicates: usize,
    master_seed: u64,
) -> Result<Vec<ReplicateRecord>> {
    if replicates == 0 {
        return Err(Error::InvalidConfig("replicates must be >= 1".into()));
    }
    spec.validate()?;
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut data_rng = split_rng(master_seed, r as u64);
            let cov = spec.draw_covariance(&mut data_rng)?;
            let train = spec.sample_with(&cov, n, &mut data_rng)?;
            let holdout = spec.sample_with(&cov, n, &mut data_rng)?;
            let mut model_rng = split_rng(master_seed, (r + replicates) as u64);
            let evaluated = cfg.fit(&train, &mut model_rng).and_then(|model| {
                let report = ace(&model, train.x().view(), DEFAULT_H_FRACTION)?;
                let pred = model.predict(holdout.x().view())?;
                let mse = (&pred - holdout.y()).mapv(|v| v * v).mean().expect("non-empty");
                let coefficients = model.linear().map(|m| m.coefficients.to_vec());
                Ok((report.ace.to_vec(), coefficients, mse))
            });
            Ok(match evaluated {
                Ok((ace, coefficients, mse)) => ReplicateRecord {
                    replicate: r,
                    ace: Some(ace),
                    coefficients,
                    holdout_mse: Some(mse),
                    error: None,
                },
                Err(e) => ReplicateRecord {
                    replicate: r,
                    ace: None,
                    coefficients: None,
                    holdout_mse: None,
                    error: Some(e.to_string()),
                },
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub truth: Array1<f64>,
    pub mean_estimate: Array1<f64>,
    /// `truth − mean estimate`; positive means underestimation.
    pub bias: Array1<f64>,
    /// Sample variance (n − 1); zero for a single replicate.
    pub variance: Array1<f64>,
    pub mse: Array1<f64>,
    pub prediction_mse: Option<f64>,
    pub n_replicates: usize,
    pub failures: usize,
    /// Set when fewer than two replicates succeeded.
    pub degenerate: bool,
}

/// Per-feature bias, variance and MSE of an `R × p` estimate matrix.
pub fn bias_variance(estimates: ArrayView2<f64>, truth: ArrayView1<f64>) -> Result<BiasVarianceReport> {
    let (r, p) = estimates.dim();
    if p != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: p,
        });
    }
    if r == 0 {
        return Err(Error::InvalidData("no estimates".into()));
    }
    let mean_estimate = estimates.mean_axis(Axis(0)).expect("non-empty");
    let bias = &truth - &mean_estimate;
    let variance = if r > 1 {
        estimates.var_axis(Axis(0), 1.0)
    } else {
        Array1::zeros(p)
    };
    let mse = &bias * &bias + &variance;
    Ok(BiasVarianceReport {
        truth: truth.to_owned(),
        mean_estimate,
        bias,
        variance,
        mse,
        prediction_mse: None,
        n_replicates: r,
        failures: 0,
        degenerate: r < 2,
    })
}

/// Aggregates replicate records; failed replicates only count toward
/// `failures`.
pub fn summarize(records: &[ReplicateRecord], truth: ArrayView1<f64>) -> Result<BiasVarianceReport> {
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| !r.failed()).collect();
    let failures = records.len() - ok.len();
    let p = truth.len();
    if ok.is_empty() {
        let nan = Array1::from_elem(p, f64::NAN);
        return Ok(BiasVarianceReport {
            truth: truth.to_owned(),
            mean_estimate: nan.clone(),
            bias: nan.clone(),
            variance: nan.clone(),
            mse: nan,
            prediction_mse: None,
            n_replicates: 0,
            failures,
            degenerate: true,
        });
    }
    let mut est = Array2::zeros((ok.len(), p));
    for (i, rec) in ok.iter().enumerate() {
        let a = rec.ace.as_ref().expect("successful replicate");
        if a.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: a.len(),
            });
        }
        est.row_mut(i).assign(&ArrayView1::from(a.as_slice()));
    }
    let mut report = bias_variance(est.view(), truth)?;
    let mses: Vec<f64> = ok.iter().filter_map(|r| r.holdout_mse).collect();
    report.prediction_mse = Some(mses.iter().sum::<f64>() / mses.len() as f64);
    report.failures = failures;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtin;
    use ndarray::array;

    #[test]
    fn exact_estimates_have_no_error() {
        let est = array![[1.0, 0.0], [1.0, 0.0]];
        let r = bias_variance(est.view(), array![1.0, 0.0].view()).unwrap();
        assert!(r.bias.iter().chain(&r.variance).chain(&r.mse).all(|v| *v == 0.0));
    }

    #[test]
    fn hand_computed_reports() {
        let r = bias_variance(array![[0.8], [1.2]].view(), array![1.0].view()).unwrap();
        assert!(r.bias[0].abs() < 1e-12);
        // Sample variance of (0.8, 1.2): (0.04 + 0.04)/(2 − 1).
        assert!((r.variance[0] - 0.08).abs() < 1e-12);
        assert!((r.mse[0] - 0.08).abs() < 1e-12);
        let r = bias_variance(array![[0.5], [0.5]].view(), array![1.0].view()).unwrap();
        assert_eq!(r.bias[0], 0.5);
        assert_eq!(r.variance[0], 0.0);
        assert_eq!(r.mse[0], 0.25);
        let r = bias_variance(array![[0.5]].view(), array![1.0].view()).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.variance[0], 0.0);
        assert!(bias_variance(array![[0.5, 1.0]].view(), array![1.0].view()).is_err());
    }

    #[test]
    fn replicates_are_deterministic() {
        let spec = builtin("base5").unwrap();
        let a = run_replicates(&spec, &LearnerConfig::Ols, 100, 4, 7).unwrap();
        let b = run_replicates(&spec, &LearnerConfig::Ols, 100, 4, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| !r.failed()));
        // ACE of a linear model is its coefficient vector.
        for rec in &a {
            let (ace, coef) = (rec.ace.as_ref().unwrap(), rec.coefficients.as_ref().unwrap());
            assert!(ace.iter().zip(coef).all(|(x, y)| (x - y).abs() < 1e-10));
        }
    }

    #[test]
    fn failures_are_tallied_not_fatal() {
        let spec = crate::scenarios::data_poor(20).unwrap();
        let recs = run_replicates(&spec, &LearnerConfig::Ols, 10, 3, 1).unwrap();
        assert!(recs.iter().all(|r| r.failed()));
        let rep = summarize(&recs, ndarray::Array1::from(spec.beta.clone()).view()).unwrap();
        assert_eq!(rep.failures, 3);
        assert_eq!(rep.n_replicates, 0);
    }

    #[test]
    fn failures_do_not_change_successful_statistics() {
        let spec = builtin("base5").unwrap();
        let recs = run_replicates(&spec, &LearnerConfig::Ols, 60, 5, 3).unwrap();
        let truth = ndarray::Array1::from(spec.beta.clone());
        let clean = summarize(&recs, truth.view()).unwrap();
        let mut with_failure = recs.clone();
        with_failure.push(ReplicateRecord {
            replicate: 5,
            ace: None,
            coefficients: None,
            holdout_mse: None,
            error: Some("boom".into()),
        });
        let dirty = summarize(&with_failure, truth.view()).unwrap();
        assert_eq!(dirty.failures, 1);
        assert_eq!(clean.bias, dirty.bias);
        assert_eq!(clean.variance, dirty.variance);
        assert_eq!(clean.prediction_mse, dirty.prediction_mse);
    }
}
