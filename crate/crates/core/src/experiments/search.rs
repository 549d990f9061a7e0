use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::replicates::{run_replicates, summarize};
use crate::error::{Error, Result};
use crate::learners::{
    fit_rf, Activation, BoostParams, Dataset, ForestParams, LearnerConfig, LearnerKind, NnConfig,
};
use crate::randkit::{split_rng, RngStream};
use crate::scenarios::{true_effects, ScenarioSpec};

/// Stream reserved for drawing hyperparameters, far from replicate streams.
const PARAM_STREAM: u64 = 1 << 40;
const SURROGATE_STREAM: u64 = (1 << 40) + 1;

#[derive(Clone, Debug, PartialEq)]
pub enum ParamRange {
    Real { lo: f64, hi: f64 },
    LogReal { lo: f64, hi: f64 },
    Int { lo: i64, hi: i64 },
    Choice(Vec<String>),
}

impl ParamRange {
    fn draw(&self, rng: &mut RngStream) -> ParamValue {
        match self {
            ParamRange::Real { lo, hi } => ParamValue::Real(lo + (hi - lo) * rng.uniform()),
            ParamRange::LogReal { lo, hi } => {
                ParamValue::Real((lo.ln() + (hi.ln() - lo.ln()) * rng.uniform()).exp())
            }
            ParamRange::Int { lo, hi } => {
                ParamValue::Int(lo + rng.below((hi - lo + 1) as usize) as i64)
            }
            ParamRange::Choice(options) => ParamValue::Choice(options[rng.below(options.len())].clone()),
        }
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (ParamRange::Real { lo, hi } | ParamRange::LogReal { lo, hi }, ParamValue::Real(x)) => {
                *lo <= *x && *x <= *hi
            }
            (ParamRange::Int { lo, hi }, ParamValue::Int(x)) => lo <= x && x <= hi,
            (ParamRange::Choice(options), ParamValue::Choice(c)) => options.contains(c),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Choice(String),
}

impl ParamValue {
    fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Real(x) => Some(*x),
            ParamValue::Choice(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Real(x) => write!(f, "{x}"),
            ParamValue::Choice(c) => f.write_str(c),
        }
    }
}

/// Tuning ranges per learner, keyed by parameter name in sorted order.
pub fn search_space(kind: LearnerKind) -> Result<BTreeMap<&'static str, ParamRange>> {
    use ParamRange::*;
    let space: Vec<(&'static str, ParamRange)> = match kind {
        LearnerKind::NeuralNet => vec![
            (
                "activation",
                Choice(Activation::ALL.iter().map(|a| a.name().to_string()).collect()),
            ),
            ("depth", Int { lo: 1, hi: 8 }),
            ("width", Int { lo: 2, hi: 50 }),
            ("batch_fraction", Real { lo: 0.01, hi: 1.0 }),
            ("lambda", LogReal { lo: 2.65e-5, hi: 0.16 }),
            ("alpha", Real { lo: 0.0, hi: 1.0 }),
        ],
        LearnerKind::Gbt => vec![
            ("alpha", Real { lo: 0.0, hi: 1.0 }),
            ("eta", Real { lo: 0.01, hi: 0.4 }),
            ("max_depth", Int { lo: 2, hi: 25 }),
            ("subsample", Real { lo: 0.5, hi: 1.0 }),
            ("max_tree", Int { lo: 30, hi: 125 }),
            ("lambda", Real { lo: 1.0, hi: 20.0 }),
        ],
        LearnerKind::RandomForest => vec![
            ("mtry", Real { lo: 0.0, hi: 1.0 }),
            ("min_node_size", Int { lo: 2, hi: 70 }),
            ("max_depth", Int { lo: 2, hi: 50 }),
            ("regularization_factor", Real { lo: 0.0, hi: 1.0 }),
        ],
        LearnerKind::ElasticNet => vec![
            ("alpha", Real { lo: 0.0, hi: 1.0 }),
            ("lambda", Real { lo: 0.0, hi: 1.0 }),
        ],
        other => {
            return Err(Error::InvalidConfig(format!("no search space for `{other}`")));
        }
    };
    Ok(space.into_iter().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSample {
    pub kind: LearnerKind,
    pub draw: usize,
    pub values: BTreeMap<String, ParamValue>,
}

impl HyperparamSample {
    fn real(&self, key: &str) -> Result<f64> {
        self.values
            .get(key)
            .and_then(ParamValue::as_f64)
            .ok_or_else(|| Error::InvalidConfig(format!("missing numeric parameter `{key}`")))
    }

    fn int(&self, key: &str) -> Result<usize> {
        match self.values.get(key) {
            Some(ParamValue::Int(i)) if *i >= 0 => Ok(*i as usize),
            _ => Err(Error::InvalidConfig(format!("missing integer parameter `{key}`"))),
        }
    }

    pub fn to_config(&self) -> Result<LearnerConfig> {
        Ok(match self.kind {
            LearnerKind::NeuralNet => {
                let activation = match self.values.get("activation") {
                    Some(ParamValue::Choice(a)) => a.parse()?,
                    _ => return Err(Error::InvalidConfig("missing `activation`".into())),
                };
                LearnerConfig::NeuralNet(NnConfig {
                    depth: self.int("depth")?,
                    width: self.int("width")?,
                    activation,
                    batch_fraction: self.real("batch_fraction")?,
                    penalty_lambda: self.real("lambda")?,
                    penalty_alpha: self.real("alpha")?,
                    ..NnConfig::default()
                })
            }
            LearnerKind::Gbt => LearnerConfig::Gbt(BoostParams {
                n_trees: self.int("max_tree")?,
                eta: self.real("eta")?,
                max_depth: self.int("max_depth")?,
                subsample: self.real("subsample")?,
                lambda_l2: self.real("lambda")?,
                alpha_l1: self.real("alpha")?,
                ..BoostParams::default()
            }),
            LearnerKind::RandomForest => LearnerConfig::RandomForest(ForestParams {
                // A zero fraction still offers one feature per split.
                mtry_fraction: Some(self.real("mtry")?.max(f64::MIN_POSITIVE)),
                min_node_size: self.int("min_node_size")?,
                max_depth: Some(self.int("max_depth")?),
                regularization_factor: self.real("regularization_factor")?,
                ..ForestParams::default()
            }),
            LearnerKind::ElasticNet => {
                let mut cfg = LearnerConfig::elastic_net_cv();
                if let LearnerConfig::ElasticNet { alpha, lambda, .. } = &mut cfg {
                    *alpha = self.real("alpha")?;
                    *lambda = Some(self.real("lambda")?);
                }
                cfg
            }
            other => return Err(Error::InvalidConfig(format!("no search space for `{other}`"))),
        })
    }
}

/// Draws `n_draws` parameter sets uniformly (log-uniformly where declared).
pub fn draw_samples(kind: LearnerKind, n_draws: usize, master_seed: u64) -> Result<Vec<HyperparamSample>> {
    let space = search_space(kind)?;
    let mut rng = split_rng(master_seed, PARAM_STREAM);
    Ok((0..n_draws)
        .map(|draw| HyperparamSample {
            kind,
            draw,
            values: space
                .iter()
                .map(|(k, range)| (k.to_string(), range.draw(&mut rng)))
                .collect(),
        })
        .collect())
}

/// Effect errors for the first two features and the prediction error of one
/// parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub sample: HyperparamSample,
    pub bias: [f64; 2],
    pub variance: [f64; 2],
    pub effect_mse: [f64; 2],
    pub prediction_mse: f64,
    pub failures: usize,
}

impl TuneRow {
    pub fn target(&self, target: Target) -> f64 {
        match target {
            Target::EffectMse => self.effect_mse[0],
            Target::PredictionMse => self.prediction_mse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    EffectMse,
    PredictionMse,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::EffectMse, Target::PredictionMse];

    pub fn name(self) -> &'static str {
        match self {
            Target::EffectMse => "effect_mse",
            Target::PredictionMse => "prediction_mse",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub kind: LearnerKind,
    pub rows: Vec<TuneRow>,
}

/// Evaluates one configuration over `reps` replicates of the scenario.
pub fn evaluate_config(
    spec: &ScenarioSpec,
    cfg: &LearnerConfig,
    n: usize,
    reps: usize,
    master_seed: u64,
) -> Result<(super::BiasVarianceReport, usize)> {
    let truth = true_effects(spec)?.main;
    let records = run_replicates(spec, cfg, n, reps, master_seed)?;
    let report = summarize(&records, truth.view())?;
    let failures = report.failures;
    Ok((report, failures))
}

/// Random search. Every draw is evaluated on the same simulated datasets,
/// so differences between rows reflect the parameters only.
pub fn random_search(
    kind: LearnerKind,
    n_draws: usize,
    reps: usize,
    spec: &ScenarioSpec,
    n: usize,
    master_seed: u64,
) -> Result<TuneResult> {
    if n_draws == 0 {
        return Err(Error::InvalidConfig("n_draws must be >= 1".into()));
    }
    if spec.p < 2 {
        return Err(Error::InvalidConfig("tuning needs at least two features".into()));
    }
    let samples = draw_samples(kind, n_draws, master_seed)?;
    let rows = samples
        .into_par_iter()
        .map(|sample| {
            let cfg = sample.to_config()?;
            let (rep, failures) = evaluate_config(spec, &cfg, n, reps, master_seed)?;
            Ok(TuneRow {
                sample,
                bias: [rep.bias[0], rep.bias[1]],
                variance: [rep.variance[0], rep.variance[1]],
                effect_mse: [rep.mse[0], rep.mse[1]],
                prediction_mse: rep.prediction_mse.unwrap_or(f64::NAN),
                failures,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TuneResult { kind, rows })
}

/// Design matrix for the surrogate: numeric parameters as-is, choices
/// one-hot over the declared options, columns in key order.
pub fn encode(samples: &[&HyperparamSample]) -> Result<(Array2<f64>, Vec<String>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidData("no samples to encode".into()))?;
    let space = search_space(first.kind)?;
    let mut names = Vec::new();
    for (key, range) in &space {
        match range {
            ParamRange::Choice(options) => {
                names.extend(options.iter().map(|o| format!("{key}={o}")));
            }
            _ => names.push(key.to_string()),
        }
    }
    let mut x = Array2::zeros((samples.len(), names.len()));
    for (i, s) in samples.iter().enumerate() {
        let mut col = 0;
        for (key, range) in &space {
            let v = s
                .values
                .get(*key)
                .ok_or_else(|| Error::InvalidData(format!("draw {} lacks `{key}`", s.draw)))?;
            match range {
                ParamRange::Choice(options) => {
                    for o in options {
                        x[[i, col]] = f64::from(matches!(v, ParamValue::Choice(c) if c == o));
                        col += 1;
                    }
                }
                _ => {
                    x[[i, col]] = v.as_f64().ok_or_else(|| {
                        Error::InvalidData(format!("`{key}` is not numeric"))
                    })?;
                    col += 1;
                }
            }
        }
    }
    Ok((x, names))
}

/// Surrogate forest: 500 trees, ⌈p/3⌉ candidates per split, min node 5.
pub fn surrogate_params() -> ForestParams {
    ForestParams {
        n_trees: 500,
        mtry_fraction: Some(1.0 / 3.0),
        min_node_size: 5,
        ..ForestParams::default()
    }
}

/// Fits a random forest from parameters to `target` and returns the row
/// with the lowest surrogate prediction. Rows with a non-finite target are
/// skipped.
pub fn surrogate_select<'a>(
    table: &'a TuneResult,
    target: Target,
    master_seed: u64,
) -> Result<&'a TuneRow> {
    let usable: Vec<&TuneRow> = table
        .rows
        .iter()
        .filter(|r| r.target(target).is_finite())
        .collect();
    match usable.len() {
        0 => return Err(Error::InvalidData("no finite rows to select from".into())),
        1 => return Ok(usable[0]),
        _ => {}
    }
    let samples: Vec<&HyperparamSample> = usable.iter().map(|r| &r.sample).collect();
    let (x, names) = encode(&samples)?;
    let y = Array1::from_iter(usable.iter().map(|r| r.target(target)));
    let d = Dataset::new(x, y, names)?;
    let mut rng = split_rng(master_seed, SURROGATE_STREAM);
    let forest = fit_rf(&d, &surrogate_params(), &mut rng)?;
    let pred = forest.predict(d.x().view())?;
    let best = pred
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v < pred[b] { i } else { b });
    Ok(usable[best])
}
