//! Simulated data-generating processes with known ground truth.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::learners::{default_feature_names, Dataset};
use crate::randkit::{lkj_sample_corr, mvn_sample, CovMatrix, RngStream};

/// Feature covariance. Indices are zero-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariance {
    Identity,
    /// Identity with the listed off-diagonal correlations.
    Pairs { pairs: Vec<CorrPair> },
    Fixed { matrix: Vec<Vec<f64>> },
    /// Redrawn from LKJ(eta) on every generation call.
    Lkj { eta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrPair {
    pub i: usize,
    pub j: usize,
    pub rho: f64,
}

/// Marginal transform applied to the multivariate normal draw.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    #[default]
    Normal,
    LogNormal { meanlog: f64, sdlog: f64 },
}

/// Response terms beyond the linear predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    /// `coef · x_i · x_j`
    Interaction { i: usize, j: usize, coef: f64 },
    /// Continuous piecewise-linear: `slope_below` up to `knot`, `slope_above` after.
    Piecewise {
        feature: usize,
        knot: f64,
        slope_below: f64,
        slope_above: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub p: usize,
    pub beta: Vec<f64>,
    pub noise_sigma: f64,
    pub n_default: usize,
    pub covariance: Covariance,
    #[serde(default)]
    pub marginal: Marginal,
    #[serde(default)]
    pub structural: Vec<Term>,
}

/// Ground-truth effects of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    /// Expected derivative of the response with respect to each feature.
    pub main: Array1<f64>,
    /// `((i, j), coef)` for every interaction term.
    pub interactions: Vec<((usize, usize), f64)>,
}

pub const CATALOG: [&str; 12] = [
    "base5",
    "collinear09",
    "collinear099",
    "confounder05",
    "confounder05neg",
    "booster_independent",
    "booster_mediator",
    "booster_confounder",
    "interaction5",
    "interaction5_collinear",
    "datapoor",
    "nonuniform",
];

fn linear5(name: &str, beta: [f64; 5], covariance: Covariance) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        p: 5,
        beta: beta.to_vec(),
        noise_sigma: 0.3,
        n_default: 1000,
        covariance,
        marginal: Marginal::Normal,
        structural: Vec::new(),
    }
}

fn pair(i: usize, j: usize, rho: f64) -> Covariance {
    Covariance::Pairs {
        pairs: vec![CorrPair { i, j, rho }],
    }
}

fn interaction5(name: &str, covariance: Covariance) -> ScenarioSpec {
    ScenarioSpec {
        noise_sigma: 1.0,
        n_default: 5000,
        structural: vec![Term::Interaction { i: 0, j: 1, coef: 1.0 }],
        ..linear5(name, [1.0, 0.0, 0.0, 0.0, 1.0], covariance)
    }
}

/// Many LKJ-correlated features: β₁ = 1, β₂ = 0, the rest evenly spaced
/// over (0, 1] ending at 1.
pub fn data_poor(p: usize) -> Result<ScenarioSpec> {
    if p < 3 {
        return Err(Error::InvalidConfig(format!("data-poor scenario needs p >= 3, got {p}")));
    }
    let mut beta = vec![1.0, 0.0];
    beta.extend((3..=p).map(|j| (j - 2) as f64 / (p - 2) as f64));
    Ok(ScenarioSpec {
        name: if p == 100 { "datapoor".into() } else { format!("datapoor{p}") },
        p,
        beta,
        noise_sigma: 0.3,
        n_default: 100,
        covariance: Covariance::Lkj { eta: 2.0 },
        marginal: Marginal::Normal,
        structural: Vec::new(),
    })
}

pub fn builtin(name: &str) -> Result<ScenarioSpec> {
    let b = [1.0, 0.0, 1.0, 0.0, 0.0];
    let conf = [1.0, 0.5, 1.0, 0.0, 0.0];
    Ok(match name {
        "base5" => linear5(name, b, Covariance::Identity),
        "collinear09" => linear5(name, b, pair(0, 1, 0.9)),
        "collinear099" => linear5(name, b, pair(0, 1, 0.99)),
        "confounder05" => linear5(name, conf, pair(0, 1, 0.5)),
        "confounder05neg" => linear5(name, [1.0, -0.5, 1.0, 0.0, 0.0], pair(0, 1, 0.5)),
        "booster_independent" => linear5(name, conf, Covariance::Identity),
        "booster_mediator" => linear5(name, b, pair(0, 1, 0.9)),
        "booster_confounder" => linear5(name, conf, pair(0, 1, 0.9)),
        "interaction5" => interaction5(name, Covariance::Identity),
        "interaction5_collinear" => interaction5(name, pair(0, 1, 0.9)),
        "datapoor" => data_poor(100)?,
        "nonuniform" => ScenarioSpec {
            name: name.into(),
            p: 1,
            beta: vec![0.0],
            noise_sigma: 0.3,
            n_default: 2000,
            covariance: Covariance::Identity,
            marginal: Marginal::LogNormal {
                meanlog: 0.0,
                sdlog: 0.5,
            },
            structural: vec![Term::Piecewise {
                feature: 0,
                knot: 2.0,
                slope_below: 2.0,
                slope_above: 0.0,
            }],
        },
        other => {
            return Err(Error::UnknownScenario {
                name: other.into(),
                available: CATALOG.iter().map(|s| s.to_string()).collect(),
            })
        }
    })
}

/// Every builtin scenario, in catalog order.
pub fn catalog() -> Vec<ScenarioSpec> {
    CATALOG.iter().map(|n| builtin(n).expect("catalog entry")).collect()
}

/// A builtin name, or a path to a TOML spec file.
pub fn resolve(name_or_path: &str) -> Result<ScenarioSpec> {
    let path = Path::new(name_or_path);
    if name_or_path.ends_with(".toml") || path.is_file() {
        let text = std::fs::read_to_string(path)?;
        let spec = ScenarioSpec::from_toml(&text)?;
        spec.validate()?;
        return Ok(spec);
    }
    builtin(name_or_path)
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("scenario `{}`: {m}", self.name)));
        if self.p == 0 {
            return bad("p must be >= 1".into());
        }
        if self.beta.len() != self.p {
            return bad(format!("beta has {} entries for p = {}", self.beta.len(), self.p));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0".into());
        }
        match &self.covariance {
            Covariance::Pairs { pairs } => {
                for c in pairs {
                    if c.i >= self.p || c.j >= self.p || c.i == c.j || !(c.rho.abs() < 1.0) {
                        return bad(format!("invalid correlation pair {c:?}"));
                    }
                }
            }
            Covariance::Fixed { matrix } => {
                if matrix.len() != self.p || matrix.iter().any(|r| r.len() != self.p) {
                    return bad(format!("covariance must be {0}×{0}", self.p));
                }
            }
            Covariance::Lkj { eta } => {
                if !(*eta > 0.0) || self.p < 2 {
                    return bad("LKJ needs eta > 0 and p >= 2".into());
                }
            }
            Covariance::Identity => {}
        }
        if let Marginal::LogNormal { sdlog, .. } = self.marginal {
            if !(sdlog > 0.0) {
                return bad("sdlog must be > 0".into());
            }
        }
        for t in &self.structural {
            let ok = match *t {
                Term::Interaction { i, j, .. } => i < self.p && j < self.p,
                Term::Piecewise { feature, .. } => feature < self.p,
            };
            if !ok {
                return bad(format!("term {t:?} references a missing feature"));
            }
        }
        Ok(())
    }

    /// The covariance for one generation call; LKJ draws consume `rng`.
    pub fn draw_covariance(&self, rng: &mut RngStream) -> Result<CovMatrix> {
        self.validate()?;
        match &self.covariance {
            Covariance::Identity => Ok(CovMatrix::identity(self.p)),
            Covariance::Pairs { pairs } => {
                let mut m = Array2::eye(self.p);
                for c in pairs {
                    m[[c.i, c.j]] = c.rho;
                    m[[c.j, c.i]] = c.rho;
                }
                CovMatrix::new(m)
            }
            Covariance::Fixed { matrix } => {
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                let m = Array2::from_shape_vec((self.p, self.p), flat)
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
                CovMatrix::new(m)
            }
            Covariance::Lkj { eta } => lkj_sample_corr(self.p, *eta, rng),
        }
    }

    /// Noise-free response for a feature matrix.
    pub fn mean_response(&self, x: &Array2<f64>) -> Array1<f64> {
        let mut y = x.dot(&Array1::from(self.beta.clone()));
        for t in &self.structural {
            match *t {
                Term::Interaction { i, j, coef } => {
                    y.zip_mut_with(&(&x.column(i) * &x.column(j)), |a, b| *a += coef * b);
                }
                Term::Piecewise {
                    feature,
                    knot,
                    slope_below,
                    slope_above,
                } => {
                    for (a, &v) in y.iter_mut().zip(x.column(feature)) {
                        *a += slope_below * v.min(knot) + slope_above * (v - knot).max(0.0);
                    }
                }
            }
        }
        y
    }

    /// Draws a dataset with a given covariance.
    pub fn sample_with(&self, cov: &CovMatrix, n: usize, rng: &mut RngStream) -> Result<Dataset> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("n must be >= 2, got {n}")));
        }
        let mut x = mvn_sample(Array1::zeros(self.p).view(), cov, n, rng)?;
        if let Marginal::LogNormal { meanlog, sdlog } = self.marginal {
            x.mapv_inplace(|z| (meanlog + sdlog * z).exp());
        }
        let mut y = self.mean_response(&x);
        if self.noise_sigma > 0.0 {
            for v in y.iter_mut() {
                *v += self.noise_sigma * rng.normal();
            }
        }
        Dataset::new(x, y, default_feature_names(self.p))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

/// Draws a fresh covariance (if random) and a dataset of `n` rows.
pub fn gen_linear(spec: &ScenarioSpec, n: usize, rng: &mut RngStream) -> Result<Dataset> {
    let cov = spec.draw_covariance(rng)?;
    spec.sample_with(&cov, n, rng)
}

/// Ground-truth effects. Piecewise terms contribute their expected
/// derivative under the feature's marginal distribution.
pub fn true_effects(spec: &ScenarioSpec) -> Result<TrueEffects> {
    spec.validate()?;
    let mut main = Array1::from(spec.beta.clone());
    let mut interactions = Vec::new();
    for t in &spec.structural {
        match *t {
            Term::Interaction { i, j, coef } => {
                interactions.push(((i, j), coef));
                // Zero-mean features make the average interaction slope vanish.
                if spec.marginal != Marginal::Normal {
                    return Err(Error::NoAnalyticTruth(format!(
                        "interaction under a non-normal marginal in `{}`",
                        spec.name
                    )));
                }
            }
            Term::Piecewise {
                feature,
                knot,
                slope_below,
                slope_above,
            } => {
                let std_normal = Normal::new(0.0, 1.0).expect("valid");
                let below = match spec.marginal {
                    Marginal::Normal => std_normal.cdf(knot),
                    Marginal::LogNormal { meanlog, sdlog } => {
                        if knot <= 0.0 {
                            0.0
                        } else {
                            std_normal.cdf((knot.ln() - meanlog) / sdlog)
                        }
                    }
                };
                main[feature] += slope_below * below + slope_above * (1.0 - below);
            }
        }
    }
    Ok(TrueEffects { main, interactions })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseMode {
    Observational,
    Rct,
}

/// Smoking, nutrition and lung volume as predictors of lung cancer, with an
/// unobserved financial confounder and lung volume as a collider.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudySpec {
    pub mode: CaseMode,
    pub financial_to_smoking: f64,
    pub financial_to_nutrition: f64,
    pub smoking_to_cancer: f64,
    pub nutrition_to_cancer: f64,
    pub financial_to_cancer: f64,
    pub smoking_to_lung_volume: f64,
    pub cancer_to_lung_volume: f64,
    pub noise_sd: f64,
}

impl Default for CaseStudySpec {
    fn default() -> Self {
        Self {
            mode: CaseMode::Observational,
            financial_to_smoking: 0.8,
            financial_to_nutrition: 0.8,
            smoking_to_cancer: 1.0,
            nutrition_to_cancer: -0.5,
            financial_to_cancer: 0.5,
            smoking_to_lung_volume: 0.7,
            cancer_to_lung_volume: -0.7,
            noise_sd: 0.5,
        }
    }
}

pub const CASE_FEATURES: [&str; 3] = ["smoking", "nutrition", "lung_volume"];

impl CaseStudySpec {
    pub fn with_mode(mode: CaseMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    fn smoking_var(&self) -> f64 {
        self.financial_to_smoking.powi(2) + self.noise_sd.powi(2)
    }

    fn nutrition_var(&self) -> f64 {
        self.financial_to_nutrition.powi(2) + self.noise_sd.powi(2)
    }

    /// Observational variance of lung volume, written out over the
    /// independent sources (financial, three noises, own noise).
    fn lung_volume_var(&self) -> f64 {
        let (a, b) = (self.smoking_to_lung_volume, self.cancer_to_lung_volume);
        let c_f = self.smoking_to_cancer * self.financial_to_smoking
            + self.nutrition_to_cancer * self.financial_to_nutrition
            + self.financial_to_cancer;
        let on_f = a * self.financial_to_smoking + b * c_f;
        let on_es = a + b * self.smoking_to_cancer;
        let on_en = b * self.nutrition_to_cancer;
        let on_ec = b;
        let s2 = self.noise_sd.powi(2);
        on_f.powi(2) + (on_es.powi(2) + on_en.powi(2) + on_ec.powi(2) + 1.0) * s2
    }

    /// Structural effects of the named features on lung cancer. Only
    /// defined for sets that exclude the collider.
    pub fn true_effects(&self, features: &[&str]) -> Result<Array1<f64>> {
        features
            .iter()
            .map(|&f| match f {
                "smoking" => Ok(self.smoking_to_cancer),
                "nutrition" => Ok(self.nutrition_to_cancer),
                other => Err(Error::NoAnalyticTruth(format!(
                    "`{other}` has no structural effect on lung cancer"
                ))),
            })
            .collect()
    }
}

/// Columns: smoking, nutrition, lung_volume; response: lung_cancer.
///
/// In the trial design smoking and nutrition are assigned independently
/// with their observational variances, and lung volume is drawn
/// independently with its observational variance. The cancer equation is
/// shared by both designs.
pub fn gen_case_study(spec: &CaseStudySpec, n: usize, rng: &mut RngStream) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("n must be >= 2, got {n}")));
    }
    let s = spec.noise_sd;
    let mut x = Array2::zeros((n, 3));
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let financial = rng.normal();
        let (smoking, nutrition) = match spec.mode {
            CaseMode::Observational => (
                spec.financial_to_smoking * financial + s * rng.normal(),
                spec.financial_to_nutrition * financial + s * rng.normal(),
            ),
            CaseMode::Rct => (
                spec.smoking_var().sqrt() * rng.normal(),
                spec.nutrition_var().sqrt() * rng.normal(),
            ),
        };
        let cancer = spec.smoking_to_cancer * smoking
            + spec.nutrition_to_cancer * nutrition
            + spec.financial_to_cancer * financial
            + s * rng.normal();
        let lung_volume = match spec.mode {
            CaseMode::Observational => {
                spec.smoking_to_lung_volume * smoking
                    + spec.cancer_to_lung_volume * cancer
                    + s * rng.normal()
            }
            CaseMode::Rct => spec.lung_volume_var().sqrt() * rng.normal(),
        };
        x[[i, 0]] = smoking;
        x[[i, 1]] = nutrition;
        x[[i, 2]] = lung_volume;
        y[i] = cancer;
    }
    Dataset::new(x, y, CASE_FEATURES.iter().map(|s| s.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::fit_ols;
    use crate::randkit::split_rng;

    fn corr(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
        let (ma, mb) = (a.mean().unwrap(), b.mean().unwrap());
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn noiseless_linear_scenarios_are_identified() {
        for name in CATALOG {
            let mut spec = builtin(name).unwrap();
            if !spec.structural.is_empty() {
                continue;
            }
            spec.noise_sigma = 0.0;
            let n = spec.p + 50;
            let d = gen_linear(&spec, n, &mut split_rng(50, 0)).unwrap();
            let m = fit_ols(&d).unwrap();
            for (b, t) in m.coefficients.iter().zip(&spec.beta) {
                assert!((b - t).abs() < 1e-8, "{name}: {b} vs {t}");
            }
        }
    }

    #[test]
    fn collinear_correlation_is_realized() {
        let spec = builtin("collinear09").unwrap();
        let d = gen_linear(&spec, 10_000, &mut split_rng(51, 0)).unwrap();
        let r = corr(d.x().column(0), d.x().column(1));
        assert!(r > 0.88 && r < 0.92, "corr {r}");
        let r13 = corr(d.x().column(0), d.x().column(2));
        assert!(r13.abs() < 0.02);
    }

    #[test]
    fn catalog_contents() {
        let base = builtin("base5").unwrap();
        assert_eq!(base.p, 5);
        assert_eq!(base.beta, vec![1.0, 0.0, 1.0, 0.0, 0.0]);
        let dp = builtin("datapoor").unwrap();
        assert_eq!(dp.p, 100);
        assert_eq!(dp.beta[0], 1.0);
        assert_eq!(dp.beta[1], 0.0);
        assert_eq!(dp.beta[99], 1.0);
        assert!(dp.beta[2] > 0.0);
        assert!(dp.beta[2..].windows(2).all(|w| w[1] > w[0]));
        match builtin("bogus") {
            Err(Error::UnknownScenario { available, .. }) => assert_eq!(available.len(), CATALOG.len()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truth_for_builtins() {
        let t = true_effects(&builtin("base5").unwrap()).unwrap();
        assert_eq!(t.main.to_vec(), vec![1.0, 0.0, 1.0, 0.0, 0.0]);
        let t = true_effects(&builtin("interaction5").unwrap()).unwrap();
        assert_eq!(t.main.to_vec(), vec![1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(t.interactions, vec![((0, 1), 1.0)]);
        // 2·P(X < 2) for log-normal(0, 0.5).
        let t = true_effects(&builtin("nonuniform").unwrap()).unwrap();
        let expected = 2.0 * Normal::new(0.0, 1.0).unwrap().cdf(2f64.ln() / 0.5);
        assert!((t.main[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn nonuniform_response_is_capped() {
        let mut spec = builtin("nonuniform").unwrap();
        spec.noise_sigma = 0.0;
        let d = gen_linear(&spec, 500, &mut split_rng(52, 0)).unwrap();
        for (x, y) in d.x().column(0).iter().zip(d.y()) {
            assert!(*x > 0.0);
            assert!((y - 2.0 * x.min(2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn lkj_covariance_is_redrawn() {
        let spec = data_poor(10).unwrap();
        let mut rng = split_rng(53, 0);
        let a = spec.draw_covariance(&mut rng).unwrap();
        let b = spec.draw_covariance(&mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn builtins_round_trip_through_toml() {
        for spec in catalog() {
            let text = spec.to_toml().unwrap();
            assert_eq!(ScenarioSpec::from_toml(&text).unwrap(), spec, "{text}");
        }
        let fixed = ScenarioSpec {
            covariance: Covariance::Fixed {
                matrix: vec![vec![1.0, 0.3], vec![0.3, 1.0]],
            },
            ..linear5("f", [0.0; 5], Covariance::Identity)
        };
        let fixed = ScenarioSpec { p: 2, beta: vec![1.0, 2.0], ..fixed };
        let text = fixed.to_toml().unwrap();
        assert_eq!(ScenarioSpec::from_toml(&text).unwrap(), fixed);
        assert!(gen_linear(&fixed, 10, &mut split_rng(1, 0)).is_ok());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = builtin("base5").unwrap();
        s.beta.pop();
        assert!(s.validate().is_err());
        let mut s = builtin("base5").unwrap();
        s.noise_sigma = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn case_study_designs() {
        let obs = gen_case_study(&CaseStudySpec::default(), 10_000, &mut split_rng(54, 0)).unwrap();
        let rct = gen_case_study(&CaseStudySpec::with_mode(CaseMode::Rct), 10_000, &mut split_rng(54, 1))
            .unwrap();
        assert!(corr(obs.x().column(0), obs.x().column(1)) > 0.2);
        assert!(corr(rct.x().column(0), rct.x().column(1)).abs() < 0.05);
        assert_eq!(obs.feature_names(), &CASE_FEATURES.map(String::from));
        // Marginal variances of the trial design match the observational ones.
        for k in 0..3 {
            let (vo, vr) = (obs.x().column(k).var(1.0), rct.x().column(k).var(1.0));
            assert!((vo - vr).abs() / vo < 0.05, "feature {k}: {vo} vs {vr}");
        }
    }

    #[test]
    fn collider_biases_full_model() {
        let spec = CaseStudySpec::default();
        let d = gen_case_study(&spec, 100_000, &mut split_rng(55, 0)).unwrap();
        let full = fit_ols(&d).unwrap();
        assert!((full.coefficients[0] - spec.smoking_to_cancer).abs() > 0.1);
        assert!(spec.true_effects(&["smoking", "nutrition"]).is_ok());
        assert!(matches!(
            spec.true_effects(&CASE_FEATURES),
            Err(Error::NoAnalyticTruth(_))
        ));
    }
}
