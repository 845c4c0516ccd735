//! Domain types: survey data, covariate laws, and the working models.

mod dataset;
mod distribution;
mod estimand;
mod features;
mod outcome;
mod propensity;

pub use dataset::{DesignWeighting, SurveyDataset, SurveyUnit};
pub use distribution::{population_expectation, product_distribution, CovariateDistribution};
pub use estimand::{estimand_fn, EstimandSpec};
pub use features::{CustomFeatureFn, FeatureMap, OutcomeFeatures, Term, YTerm};
pub use outcome::{Family, OutcomeLaw, OutcomeModel};
pub use propensity::{propensity, PropensityModel};

pub(crate) use outcome::{law_from_predictor, score_into};
