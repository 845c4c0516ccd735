//! Data-generating designs and the Monte Carlo harness.

mod choice;
mod generate;
mod scenario;
mod study;

pub use choice::{generate_choice_model, ChoiceParams, ChoiceSample};
pub use generate::{
    covariate_names, draw_unit, full_law, generate, generate_binary, generate_continuous, population, true_mean,
    FullLaw, POPULATION_NODES,
};
pub use scenario::{Design, LastCall, ScenarioSpec, Setting, DEFAULT_SEED};
pub use study::{
    run_replicate, run_sensitivity_study, run_study, summarize, working_model, Record, StudyEstimator,
    StudyOptions, StudyReport, Summary, MAX_FAILURE_RATE, REPORT_SCHEMA_VERSION,
};
