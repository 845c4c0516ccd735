//! File formats: survey and census CSVs, the TOML manifest, JSON reports.

mod census;
mod manifest;
mod report;
mod survey;

pub use census::{population_distribution, read_census, read_census_path};
pub use manifest::{parse_estimand, Manifest, ModelSection};
pub use report::{DataSummary, EstimateReport, SensitivityPoint, SensitivityReport, REPORT_SCHEMA_VERSION};
pub use survey::{read_survey, read_survey_path};

use crate::error::Error;

fn data_error(line: u64, message: impl Into<String>) -> Error {
    Error::Data { line: line as usize, message: message.into() }
}

fn parse_number(field: &str, column: &str, line: u64) -> crate::Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| data_error(line, format!("column `{column}`: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(data_error(line, format!("column `{column}`: non-finite value")));
    }
    Ok(v)
}

/// Malformed records become data errors carrying their line.
fn record_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => data_error(p.line(), e.to_string()),
        None => Error::from(e),
    }
}
