//! Replication harness: scenario × learner runs, bias/variance bookkeeping,
//! hyperparameter search and the case study.
//!
//! Work is spread over replicates or draws with rayon and collected in
//! index order, so results do not depend on the thread count.

mod case_study;
mod replicates;
mod search;
mod traces;

pub use case_study::{case_study_eval, r2, CaseStudyRow, FeatureSet};
pub use replicates::{bias_variance, run_replicates, summarize, BiasVarianceReport, ReplicateRecord};
pub use search::{
    draw_samples, encode, evaluate_config, random_search, search_space, surrogate_params,
    surrogate_select, HyperparamSample, ParamRange, ParamValue, Target, TuneResult, TuneRow,
};
pub use traces::{boosting_trace, nn_trace, BoostStep, NnTracePoint};
