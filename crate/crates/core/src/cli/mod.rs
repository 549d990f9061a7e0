//! The `ace` command-line interface.
//!
//! Every command writes CSV output plus a JSON manifest holding its
//! arguments, so `ace replay <manifest>` regenerates identical files.

pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ace::{
    ace_with, interaction_ace, standardize, weighted_ace, Difference, DEFAULT_DENSITY_FLOOR,
    DEFAULT_H_FRACTION,
};
use crate::error::{Error, Result};
use crate::experiments::{
    boosting_trace, case_study_eval, nn_trace, random_search, run_replicates, search_space,
    summarize, surrogate_select, FeatureSet, Target, TuneRow,
};
use crate::learners::{Dataset, LearnerConfig, LearnerKind, NnConfig};
use crate::randkit::split_rng;
use crate::scenarios::{gen_case_study, resolve, true_effects, CaseMode, CaseStudySpec, ScenarioSpec};
use output::{manifest_path_for, read_dataset, write_csv, write_dataset, Cell, NamedLearner, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "ace", version, about = "Average conditional effects for black-box regression models")]
pub struct Cli {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads; 0 uses one per core. Output does not depend on it.
    #[arg(long, global = true, env = "ACE_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from a scenario.
    Generate(GenerateArgs),
    /// Fit a model to a CSV dataset and report its effects.
    Ace(AceArgs),
    /// Bias, variance and MSE of effects over replicated simulations.
    Benchmark(BenchmarkArgs),
    /// Random hyperparameter search with surrogate-selected optima.
    Tune(TuneArgs),
    /// In- and out-of-distribution R² of full versus causal feature sets.
    Casestudy(CasestudyArgs),
    /// Per-step effect trajectories of the linear booster or a neural net.
    Trace(TraceArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Builtin scenario name, path to a TOML spec, or `casestudy`.
    #[arg(long)]
    pub scenario: String,
    /// Rows to draw; defaults to the scenario's own size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Sampling design for `casestudy`.
    #[arg(long, value_enum, default_value_t = ModeArg::Observational)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Observational,
    Rct,
}

#[derive(Debug, Args)]
pub struct AceArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column; the last column is used when absent.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Model preset (ols, enet, tree, rf, gbt, booster, nn, nn_dropout) or a TOML learner config.
    #[arg(long, default_value = "nn")]
    pub model: String,
    /// Also report inverse-density weighted effects.
    #[arg(long)]
    pub weighted: bool,
    /// Feature pairs (1-based), e.g. `1,2;3,5`.
    #[arg(long)]
    pub interactions: Option<String>,
    /// Step size as a fraction of each feature's sd.
    #[arg(long, default_value_t = DEFAULT_H_FRACTION)]
    pub h_fraction: f64,
    /// Use central instead of forward differences for first-order effects.
    #[arg(long)]
    pub central: bool,
    /// Density floor for weights, as a fraction of the maximum density.
    #[arg(long, default_value_t = DEFAULT_DENSITY_FLOOR)]
    pub density_floor: f64,
    /// Center and scale features to unit sd before fitting.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub scenario: String,
    /// Comma-separated presets or TOML learner configs.
    #[arg(long, default_value = "ols,enet,rf,gbt,nn")]
    pub models: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// One of nn, gbt, rf, enet.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value = "datapoor")]
    pub scenario: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub draws: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CasestudyArgs {
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_test: usize,
    #[arg(long, default_value = "rf,gbt,nn")]
    pub models: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TraceKind {
    Boost,
    Nn,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long, value_enum)]
    pub kind: TraceKind,
    #[arg(long, default_value = "collinear09")]
    pub scenario: String,
    #[arg(long)]
    pub n: Option<usize>,
    /// Booster steps.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Booster learning rate.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Neural-net epochs; the default config otherwise.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Parses `argv` (program name first), runs, and returns the exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let recorded: Vec<String> = argv.into_iter().skip(1).collect();
    match execute(cli, recorded) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 3,
        Error::Csv(c) if c.is_io_error() => 3,
        Error::UnknownScenario { .. }
        | Error::InvalidConfig(_)
        | Error::InvalidData(_)
        | Error::Toml(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

fn execute(cli: Cli, recorded: Vec<String>) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut manifest = RunManifest::new(recorded, cli.seed);
    pool.install(|| match &cli.command {
        Command::Generate(a) => generate(a, cli.seed, &mut manifest),
        Command::Ace(a) => ace_cmd(a, cli.seed, &mut manifest),
        Command::Benchmark(a) => benchmark(a, cli.seed, &mut manifest),
        Command::Tune(a) => tune(a, cli.seed, &mut manifest),
        Command::Casestudy(a) => casestudy(a, cli.seed, &mut manifest),
        Command::Trace(a) => trace(a, cli.seed, &mut manifest),
        Command::Replay(a) => replay(a),
    })
}

/// Preset name, or a TOML file whose stem becomes the label.
fn learner(spec: &str) -> Result<NamedLearner> {
    let path = Path::new(spec);
    if spec.ends_with(".toml") || path.is_file() {
        let config: LearnerConfig = toml::from_str(&std::fs::read_to_string(path)?)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| config.kind().to_string());
        return Ok(NamedLearner { label, config });
    }
    Ok(NamedLearner {
        label: spec.to_string(),
        config: LearnerConfig::preset(spec)?,
    })
}

fn learners(list: &str) -> Result<Vec<NamedLearner>> {
    let out: Vec<NamedLearner> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(learner)
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::InvalidConfig("no models given".into()));
    }
    Ok(out)
}

fn finish(manifest: &mut RunManifest, manifest_path: &Path, outputs: Vec<PathBuf>) -> Result<()> {
    for o in &outputs {
        eprintln!("wrote {}", o.display());
    }
    manifest.outputs = outputs;
    manifest.write(manifest_path)
}

fn generate(a: &GenerateArgs, seed: u64, manifest: &mut RunManifest) -> Result<()> {
    let mut rng = split_rng(seed, 0);
    if a.scenario == "casestudy" {
        let mode = match a.mode {
            ModeArg::Observational => CaseMode::Observational,
            ModeArg::Rct => CaseMode::Rct,
        };
        let spec = CaseStudySpec::with_mode(mode);
        let d = gen_case_study(&spec, a.n.unwrap_or(1000), &mut rng)?;
        write_dataset(&a.out, &d, "lung_cancer")?;
        manifest.case_study = Some(spec);
    } else {
        let spec = resolve(&a.scenario)?;
        let d = crate::scenarios::gen_linear(&spec, a.n.unwrap_or(spec.n_default), &mut rng)?;
        write_dataset(&a.out, &d, "y")?;
        manifest.scenario = Some(spec);
    }
    finish(manifest, &manifest_path_for(&a.out), vec![a.out.clone()])
}

fn parse_pairs(text: &str, p: usize) -> Result<Vec<(usize, usize)>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let idx: Vec<usize> = pair
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .ok()
                        .filter(|&i| i >= 1 && i <= p)
                        .ok_or_else(|| Error::InvalidConfig(format!("bad feature index in `{pair}`")))
                })
                .collect::<Result<_>>()?;
            match idx.as_slice() {
                [m, k] => Ok((m - 1, k - 1)),
                _ => Err(Error::InvalidConfig(format!("interaction `{pair}` needs two indices"))),
            }
        })
        .collect()
}

fn ace_cmd(a: &AceArgs, seed: u64, manifest: &mut RunManifest) -> Result<()> {
    let mut d = read_dataset(&a.data, &a.response)?;
    if a.standardize {
        let (z, _) = standardize(d.x().view())?;
        d = Dataset::new(z, d.y().clone(), d.feature_names().to_vec())?;
    }
    let names = d.feature_names().to_vec();
    let pairs = match &a.interactions {
        Some(text) => parse_pairs(text, d.p())?,
        None => Vec::new(),
    };
    let named = learner(&a.model)?;
    let scheme = if a.central { Difference::Central } else { Difference::Forward };

    let header = ["term", "feature", "value", "h", "coefficient", "status"].map(String::from);
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let failed_rows = |rows: &mut Vec<Vec<Cell>>, msg: &str| {
        let status = format!("failed: {msg}");
        for name in &names {
            rows.push(vec!["ace".into(), name.clone().into(), None.into(), None.into(), None.into(), status.clone().into()]);
        }
        for &(m, k) in &pairs {
            let label = format!("{}:{}", names[m], names[k]);
            rows.push(vec!["interaction".into(), label.into(), None.into(), None.into(), None.into(), status.clone().into()]);
        }
    };

    match named.config.fit(&d, &mut split_rng(seed, 0)) {
        Err(e @ (Error::RankDeficient { .. } | Error::NotConverged { .. } | Error::DivergedLoss { .. })) => {
            eprintln!("warning: model fit failed: {e}");
            failed_rows(&mut rows, &e.to_string());
        }
        Err(e) => return Err(e),
        Ok(model) => {
            let x = d.x().view();
            let report = ace_with(&model, x, a.h_fraction, scheme)?;
            let coef = model.linear().map(|m| m.coefficients.clone());
            for (k, name) in names.iter().enumerate() {
                rows.push(vec![
                    "ace".into(),
                    name.clone().into(),
                    report.ace[k].into(),
                    report.h[k].into(),
                    coef.as_ref().map(|c| c[k]).into(),
                    "ok".into(),
                ]);
            }
            if a.weighted {
                for (k, name) in names.iter().enumerate() {
                    let w = weighted_ace(&model, x, k, a.h_fraction, a.density_floor)?;
                    rows.push(vec![
                        "weighted_ace".into(),
                        name.clone().into(),
                        w.ace[0].into(),
                        w.h[0].into(),
                        coef.as_ref().map(|c| c[k]).into(),
                        "ok".into(),
                    ]);
                }
            }
            for &(m, k) in &pairs {
                let r = interaction_ace(&model, x, (m, k), a.h_fraction)?;
                rows.push(vec![
                    "interaction".into(),
                    format!("{}:{}", names[m], names[k]).into(),
                    r.value.into(),
                    (r.h_m * r.h_k).sqrt().into(),
                    None.into(),
                    "ok".into(),
                ]);
            }
        }
    }
    write_csv(&a.out, &header, &rows)?;
    manifest.learners.push(named);
    finish(manifest, &manifest_path_for(&a.out), vec![a.out.clone()])
}

fn benchmark(a: &BenchmarkArgs, seed: u64, manifest: &mut RunManifest) -> Result<()> {
    let spec = resolve(&a.scenario)?;
    let models = learners(&a.models)?;
    let n = a.n.unwrap_or(spec.n_default);
    let truth = true_effects(&spec)?.main;
    let names = crate::learners::default_feature_names(spec.p);
    let mut outputs = Vec::new();
    let mut combined: Vec<Vec<Cell>> = Vec::new();

    for m in &models {
        let records = run_replicates(&spec, &m.config, n, a.replicates, seed)?;
        let report = summarize(&records, truth.view())?;
        if report.failures > 0 {
            eprintln!("warning: {}: {} of {} replicates failed", m.label, report.failures, a.replicates);
        }
        if report.degenerate {
            eprintln!("warning: {}: fewer than two successful replicates; variance is not estimable", m.label);
        }

        let mut header = vec!["replicate".to_string(), "status".to_string()];
        header.extend(names.iter().map(|f| format!("ace_{f}")));
        header.push("holdout_mse".into());
        let rows: Vec<Vec<Cell>> = records
            .iter()
            .map(|r| {
                let mut row: Vec<Cell> = vec![
                    r.replicate.into(),
                    r.error.clone().map_or_else(|| "ok".to_string(), |e| format!("failed: {e}")).into(),
                ];
                for k in 0..spec.p {
                    row.push(r.ace.as_ref().map(|v| v[k]).into());
                }
                row.push(r.holdout_mse.into());
                row
            })
            .collect();
        let path = a.out_dir.join(format!("{}_replicates.csv", m.label));
        write_csv(&path, &header, &rows)?;
        outputs.push(path);

        let header = [
            "feature", "truth", "mean_ace", "bias", "variance", "mse", "prediction_mse",
            "n_replicates", "failures", "degenerate",
        ]
        .map(String::from);
        let rows: Vec<Vec<Cell>> = (0..spec.p)
            .map(|k| {
                vec![
                    names[k].clone().into(),
                    report.truth[k].into(),
                    report.mean_estimate[k].into(),
                    report.bias[k].into(),
                    report.variance[k].into(),
                    report.mse[k].into(),
                    report.prediction_mse.into(),
                    report.n_replicates.into(),
                    report.failures.into(),
                    report.degenerate.into(),
                ]
            })
            .collect();
        let path = a.out_dir.join(format!("{}_summary.csv", m.label));
        write_csv(&path, &header, &rows)?;
        outputs.push(path);

        for k in 0..spec.p {
            for (metric, value) in [
                ("mean_ace", report.mean_estimate[k]),
                ("bias", report.bias[k]),
                ("variance", report.variance[k]),
                ("mse", report.mse[k]),
            ] {
                combined.push(vec![
                    spec.name.clone().into(),
                    m.label.clone().into(),
                    names[k].clone().into(),
                    metric.into(),
                    value.into(),
                ]);
            }
        }
        combined.push(vec![
            spec.name.clone().into(),
            m.label.clone().into(),
            "".into(),
            "prediction_mse".into(),
            report.prediction_mse.into(),
        ]);
        combined.push(vec![
            spec.name.clone().into(),
            m.label.clone().into(),
            "".into(),
            "failures".into(),
            (report.failures as f64).into(),
        ]);
    }
    let path = a.out_dir.join("combined.csv");
    let header = ["scenario", "model", "feature", "metric", "value"].map(String::from);
    write_csv(&path, &header, &combined)?;
    outputs.push(path);

    manifest.scenario = Some(spec);
    manifest.learners = models;
    finish(manifest, &a.out_dir.join("manifest.json"), outputs)
}

fn tune_kind(name: &str) -> Result<LearnerKind> {
    Ok(match name {
        "nn" | "neural_net" => LearnerKind::NeuralNet,
        "gbt" => LearnerKind::Gbt,
        "rf" | "random_forest" => LearnerKind::RandomForest,
        "enet" | "elastic_net" => LearnerKind::ElasticNet,
        other => {
            return Err(Error::InvalidConfig(format!(
                "cannot tune `{other}`; expected nn, gbt, rf or enet"
            )))
        }
    })
}

fn tune(a: &TuneArgs, seed: u64, manifest: &mut RunManifest) -> Result<()> {
    let kind = tune_kind(&a.model)?;
    let spec = resolve(&a.scenario)?;
    let n = a.n.unwrap_or(spec.n_default);
    let table = random_search(kind, a.draws, a.reps, &spec, n, seed)?;
    let keys: Vec<&str> = search_space(kind)?.keys().copied().collect();

    let mut header = vec!["draw".to_string()];
    header.extend(keys.iter().map(|k| k.to_string()));
    header.extend(
        ["bias_1", "variance_1", "effect_mse_1", "bias_2", "variance_2", "effect_mse_2", "prediction_mse", "failures"]
            .map(String::from),
    );
    let rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|r| {
            let mut row: Vec<Cell> = vec![r.sample.draw.into()];
            row.extend(keys.iter().map(|k| Cell::from(r.sample.values[*k].to_string())));
            for j in 0..2 {
                row.push(r.bias[j].into());
                row.push(r.variance[j].into());
                row.push(r.effect_mse[j].into());
            }
            row.push(r.prediction_mse.into());
            row.push(r.failures.into());
            row
        })
        .collect();
    let search_path = a.out_dir.join("search.csv");
    write_csv(&search_path, &header, &rows)?;

    let mut optima = serde_json::Map::new();
    for target in Target::ALL {
        let best: &TuneRow = surrogate_select(&table, target, seed)?;
        optima.insert(
            target.name().to_string(),
            serde_json::json!({
                "draw": best.sample.draw,
                "values": best.sample.values,
                "config": best.sample.to_config()?,
                "observed": {
                    "effect_mse_1": best.effect_mse[0],
                    "effect_mse_2": best.effect_mse[1],
                    "prediction_mse": best.prediction_mse,
                },
            }),
        );
    }
    let optima_path = a.out_dir.join("optima.json");
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(optima))?;
    text.push('\n');
    std::fs::create_dir_all(&a.out_dir)?;
    std::fs::write(&optima_path, text)?;

    manifest.scenario = Some(spec);
    finish(manifest, &a.out_dir.join("manifest.json"), vec![search_path, optima_path])
}

fn casestudy(a: &CasestudyArgs, seed: u64, manifest: &mut RunManifest) -> Result<()> {
    let models = learners(&a.models)?;
    let pairs: Vec<(String, LearnerConfig)> =
        models.iter().map(|m| (m.label.clone(), m.config.clone())).collect();
    let base = CaseStudySpec::default();
    let rows = case_study_eval(&pairs, &base, a.n_train, a.n_test, seed)?;
    let header = ["learner", "features", "split", "r2"].map(String::from);
    let mut out: Vec<Vec<Cell>> = Vec::new();
    for r in &rows {
        for (split, v) in [("in_dist", r.in_dist_r2), ("ood", r.ood_r2)] {
            out.push(vec![r.learner.clone().into(), r.features.name().into(), split.into(), v.into()]);
        }
    }
    write_csv(&a.out, &header, &out)?;
    for m in &models {
        let get = |set: FeatureSet| rows.iter().find(|r| r.learner == m.label && r.features == set);
        if let (Some(full), Some(causal)) = (get(FeatureSet::Full), get(FeatureSet::Causal)) {
            if causal.ood_r2 <= full.ood_r2 {
                eprintln!("note: {}: causal model did not beat the full model out of distribution", m.label);
            }
        }
    }
    manifest.case_study = Some(base);
    manifest.learners = models;
    finish(manifest, &manifest_path_for(&a.out), vec![a.out.clone()])
}

fn trace(a: &TraceArgs, seed: u64, manifest: &mut RunManifest) -> Result<()> {
    let spec: ScenarioSpec = resolve(&a.scenario)?;
    let n = a.n.unwrap_or(spec.n_default);
    let names = crate::learners::default_feature_names(spec.p);
    match a.kind {
        TraceKind::Boost => {
            let steps = boosting_trace(&spec, n, a.steps, a.eta, seed)?;
            let mut header = vec!["step".to_string(), "feature".to_string()];
            header.extend(names.iter().map(|f| format!("beta_{f}")));
            header.extend(names.iter().map(|f| format!("increment_{f}")));
            let rows: Vec<Vec<Cell>> = steps
                .iter()
                .map(|s| {
                    let mut row: Vec<Cell> = vec![
                        s.step.into(),
                        names.get(s.feature).cloned().unwrap_or_default().into(),
                    ];
                    row.extend(s.cumulative.iter().map(|v| Cell::from(*v)));
                    row.extend(s.increment.iter().map(|v| Cell::from(*v)));
                    row
                })
                .collect();
            write_csv(&a.out, &header, &rows)?;
            manifest.learners.push(NamedLearner {
                label: "booster".into(),
                config: LearnerConfig::LinearBooster {
                    n_steps: a.steps,
                    eta: a.eta,
                },
            });
        }
        TraceKind::Nn => {
            let mut cfg = NnConfig::default();
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            let features: Vec<usize> = (0..spec.p.min(2)).collect();
            let points = nn_trace(&spec, n, &cfg, &features, seed)?;
            let mut header = vec!["step".to_string()];
            header.extend(features.iter().map(|&k| format!("ace_{}", names[k])));
            let rows: Vec<Vec<Cell>> = points
                .iter()
                .map(|p| {
                    let mut row: Vec<Cell> = vec![p.step.into()];
                    row.extend(p.ace.iter().map(|v| Cell::from(*v)));
                    row
                })
                .collect();
            write_csv(&a.out, &header, &rows)?;
            manifest.learners.push(NamedLearner {
                label: "nn".into(),
                config: LearnerConfig::NeuralNet(cfg),
            });
        }
    }
    manifest.scenario = Some(spec);
    finish(manifest, &manifest_path_for(&a.out), vec![a.out.clone()])
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let recorded = output::RunManifest::read(&a.manifest)?;
    let mut argv = vec!["ace".to_string()];
    argv.extend(recorded.command.iter().cloned());
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| Error::InvalidConfig(format!("manifest command does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::InvalidConfig("refusing to replay a replay".into()));
    }
    execute(cli, recorded.command)
}
