use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimate::Estimate;
use crate::model::SurveyDataset;

/// Version of the JSON report layout; bumped on breaking changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub units: usize,
    pub calls: usize,
    /// Weighted share of units that responded by each call.
    pub response_rates: Vec<f64>,
    pub missing_covariates: Vec<String>,
    pub observed_covariates: Vec<String>,
}

impl DataSummary {
    pub fn of(data: &SurveyDataset) -> Self {
        let total: f64 = data.weights().iter().sum();
        let response_rates = (1..=data.calls())
            .map(|k| (0..data.len()).filter(|&i| data.responded_by(i, k)).map(|i| data.weight(i)).sum::<f64>() / total)
            .collect();
        Self {
            units: data.len(),
            calls: data.calls(),
            response_rates,
            missing_covariates: data.missing_names().to_vec(),
            observed_covariates: data.observed_names().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub seed: u64,
    pub delta: f64,
    pub data: DataSummary,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub delta: f64,
    pub estimate: Option<Estimate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub schema_version: u32,
    pub method: String,
    pub seed: u64,
    pub data: DataSummary,
    pub points: Vec<SensitivityPoint>,
}

macro_rules! json_io {
    ($t:ty) => {
        impl $t {
            pub fn to_json(&self) -> Result<String> {
                Ok(serde_json::to_string_pretty(self)?)
            }

            pub fn from_json(text: &str) -> Result<Self> {
                Ok(serde_json::from_str(text)?)
            }
        }
    };
}

json_io!(EstimateReport);
json_io!(SensitivityReport);
