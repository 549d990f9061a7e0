use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{LearnerConfig, Predictor};
use crate::randkit::split_rng;
use crate::scenarios::{gen_case_study, CaseMode, CaseStudySpec};

/// Coefficient of determination `1 − SS_res/SS_tot`.
pub fn r2(y: ArrayView1<f64>, y_hat: ArrayView1<f64>) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    let mean = y.mean().ok_or_else(|| Error::InvalidData("empty response".into()))?;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::ZeroVariance { feature: 0 });
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Smoking, nutrition and the collider lung volume.
    Full,
    /// Smoking and nutrition only.
    Causal,
}

impl FeatureSet {
    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Full => "full",
            FeatureSet::Causal => "causal",
        }
    }

    pub fn columns(self) -> &'static [usize] {
        match self {
            FeatureSet::Full => &[0, 1, 2],
            FeatureSet::Causal => &[0, 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyRow {
    pub learner: String,
    pub features: FeatureSet,
    pub in_dist_r2: f64,
    pub ood_r2: f64,
}

/// Trains on observational data and scores on fresh observational
/// (in-distribution) and trial (out-of-distribution) data.
pub fn case_study_eval(
    learners: &[(String, LearnerConfig)],
    base: &CaseStudySpec,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<Vec<CaseStudyRow>> {
    let obs = CaseStudySpec {
        mode: CaseMode::Observational,
        ..base.clone()
    };
    let rct = CaseStudySpec {
        mode: CaseMode::Rct,
        ..base.clone()
    };
    let train = gen_case_study(&obs, n_train, &mut split_rng(seed, 0))?;
    let test_in = gen_case_study(&obs, n_test, &mut split_rng(seed, 1))?;
    let test_ood = gen_case_study(&rct, n_test, &mut split_rng(seed, 2))?;

    let mut rows = Vec::new();
    for (i, (label, cfg)) in learners.iter().enumerate() {
        for (j, set) in [FeatureSet::Full, FeatureSet::Causal].into_iter().enumerate() {
            let cols = set.columns();
            let d = train.select_features(cols)?;
            let mut rng = split_rng(seed, 3 + (2 * i + j) as u64);
            let model = cfg.fit(&d, &mut rng)?;
            let score = |test: &crate::learners::Dataset| -> Result<f64> {
                let t = test.select_features(cols)?;
                r2(t.y().view(), model.predict(t.x().view())?.view())
            };
            rows.push(CaseStudyRow {
                learner: label.clone(),
                features: set,
                in_dist_r2: score(&test_in)?,
                ood_r2: score(&test_ood)?,
            });
        }
    }
    Ok(rows)
}
