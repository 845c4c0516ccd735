//! Estimating equations for the SOR estimators and the baselines.

mod baselines;
mod frame;
mod impute;
mod multicall;
mod system;
mod two_call;

pub use baselines::{
    cc_estimator, cc_system, cor_estimator, cor_system, corx_estimator, corx_system, mar_estimator, mar_system,
    nonrespondent_covariates, pc_cells, pc_estimator, pc_identify, pc_system, CorxSystem, NonrespondentLaw,
    PcCells, PcSolution,
};
pub use frame::POSITIVITY_EPS;
pub use impute::{impute_unsure, ImputeMode, ImputeReport};
pub use multicall::{build_multicall_dr, build_multicall_ipw, build_multicall_reg};
pub use system::{Aggregate, Contributions, EquationSystem, MomentFunction, ParamBlock, ParamLayout};
pub use two_call::{build_dr, build_ipw, build_reg, build_sensitivity, SorKind};

use crate::model::{EstimandSpec, Family, FeatureMap, OutcomeFeatures};

/// Working models and calibration functions shared by all builders.
///
/// Unset calibration functions take their defaults: `V_1`, `V_2` equal the
/// baseline designs, the odds-ratio equation uses `U = u(x, y)`, and the
/// imputation equation of the regression estimator uses `U = (v_1(x), u(x, y))`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub family: Family,
    pub baseline1: FeatureMap,
    pub baseline2: FeatureMap,
    /// `u(x, y)` in `Γ(x, y) = γᵀu(x, y)`, shared by calls 1 and 2.
    pub odds: OutcomeFeatures,
    /// Design of the second-call outcome model `f_2(y | x; β)`.
    pub outcome: FeatureMap,
    pub estimand: EstimandSpec,
    pub calibration1: Option<FeatureMap>,
    pub calibration2: Option<FeatureMap>,
    pub odds_calibration: Option<OutcomeFeatures>,
    pub reg_calibration: Option<OutcomeFeatures>,
    /// Fixed offset: the second call uses `γ + Δ` on `y`.
    pub delta: f64,
    /// Models for the last call, used by the multi-call builders.
    pub last: Option<LastCallSpec>,
}

/// Models for call `K` in multi-call systems.
#[derive(Debug, Clone)]
pub struct LastCallSpec {
    pub baseline: FeatureMap,
    pub odds: OutcomeFeatures,
    /// Design of `f_K(y | x; β_K)`, the law among respondents after call 2.
    pub outcome: FeatureMap,
    /// IPW calibration `W`, default `(v_K(x), u_K(x, y))`.
    pub ipw_calibration: Option<OutcomeFeatures>,
    /// Regression calibration `W`, default `u_K(x, y)`.
    pub reg_calibration: Option<OutcomeFeatures>,
    /// DR calibration of `α_K`, default `v_K(x)`.
    pub dr_baseline_calibration: Option<FeatureMap>,
    /// DR calibration of `γ_K`, default `u_K(x, y)`.
    pub dr_odds_calibration: Option<OutcomeFeatures>,
}

impl ModelSpec {
    /// Intercept plus linear terms everywhere, `u = y`, mean estimand.
    pub fn standard(names: &[String], family: Family) -> Self {
        let lin = FeatureMap::intercept_and_linear(names);
        Self {
            family,
            baseline1: lin.clone(),
            baseline2: lin.clone(),
            odds: OutcomeFeatures::outcome(),
            outcome: lin,
            estimand: EstimandSpec::Mean,
            calibration1: None,
            calibration2: None,
            odds_calibration: None,
            reg_calibration: None,
            delta: 0.0,
            last: None,
        }
    }

    pub fn with_estimand(mut self, estimand: EstimandSpec) -> Self {
        self.estimand = estimand;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Adds last-call models copying the two-call defaults.
    pub fn with_standard_last_call(mut self) -> Self {
        self.last = Some(LastCallSpec {
            baseline: self.baseline2.clone(),
            odds: self.odds.clone(),
            outcome: self.outcome.clone(),
            ipw_calibration: None,
            reg_calibration: None,
            dr_baseline_calibration: None,
            dr_odds_calibration: None,
        });
        self
    }
}
