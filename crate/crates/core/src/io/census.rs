use std::io::Read;
use std::path::Path;

use crate::error::{config, Result};
use crate::model::{product_distribution, CovariateDistribution, DesignWeighting, SurveyDataset};

use super::{data_error, parse_number, record_error};

/// Reads a census table: covariate columns plus one `mass` or `count` column.
/// Counts (in any unit) are normalised.
pub fn read_census<R: Read>(reader: R) -> Result<CovariateDistribution> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mass_cols: Vec<usize> =
        (0..header.len()).filter(|&j| header[j] == "mass" || header[j] == "count").collect();
    let [mcol] = mass_cols[..] else {
        return Err(data_error(1, "census needs exactly one `mass` or `count` column"));
    };
    let counts = header[mcol] == "count";
    let cov: Vec<usize> = (0..header.len()).filter(|&j| j != mcol).collect();
    let names: Vec<String> = cov.iter().map(|&j| header[j].clone()).collect();
    let (mut support, mut mass) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(record_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let x = cov
            .iter()
            .map(|&j| parse_number(rec.get(j).unwrap_or(""), &header[j], line))
            .collect::<Result<Vec<_>>>()?;
        let m = parse_number(rec.get(mcol).unwrap_or(""), &header[mcol], line)?;
        if m < 0.0 {
            return Err(data_error(line, "negative mass"));
        }
        support.push(x);
        mass.push(m);
    }
    if support.is_empty() {
        return Err(data_error(1, "census has no rows"));
    }
    if counts {
        CovariateDistribution::from_counts(names, support, mass)
    } else {
        CovariateDistribution::new(names, support, mass)
    }
}

pub fn read_census_path(path: &Path) -> Result<CovariateDistribution> {
    read_census(std::fs::File::open(path)?)
}

/// Population law of `(X_1, X_2)` in the dataset's covariate order.
///
/// A census covering every covariate is used as is; one covering only the
/// co-missing covariates is combined with the sample law of the design
/// covariates assuming independence.
pub fn population_distribution(
    census: &CovariateDistribution,
    data: &SurveyDataset,
    weighting: DesignWeighting,
) -> Result<CovariateDistribution> {
    let index = |names: &[String]| -> Option<Vec<usize>> {
        names.iter().map(|n| census.names().iter().position(|c| c == n)).collect()
    };
    if let Some(cols) = index(&data.covariate_names()) {
        return census.marginal(&cols);
    }
    let Some(cols) = index(data.missing_names()) else {
        let absent: Vec<&String> =
            data.missing_names().iter().filter(|n| !census.names().contains(n)).collect();
        return config(format!("census lacks co-missing covariates {absent:?}"));
    };
    let x1 = census.marginal(&cols)?;
    if data.observed_names().is_empty() {
        return Ok(x1);
    }
    product_distribution(&x1, &data.design_distribution(weighting)?)
}
