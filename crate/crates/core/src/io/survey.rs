use std::io::Read;
use std::path::Path;

use crate::error::Result;
use crate::model::{SurveyDataset, SurveyUnit};

use super::{data_error, parse_number, record_error, Manifest};

struct Columns {
    weight: usize,
    outcome: usize,
    calls: Vec<usize>,
    missing: Vec<usize>,
    observed: Vec<usize>,
    missing_names: Vec<String>,
    observed_names: Vec<String>,
}

fn resolve(header: &csv::StringRecord, manifest: &Manifest) -> Result<Columns> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let find = |c: &str| -> Result<usize> {
        names
            .iter()
            .position(|n| *n == c)
            .ok_or_else(|| data_error(1, format!("missing required column `{c}`")))
    };
    let weight = find(&manifest.weight)?;
    let outcome = find(&manifest.outcome)?;
    let call_names: Vec<String> = if manifest.calls.is_empty() {
        (1..).map(|k| format!("r{k}")).take_while(|c| names.contains(&c.as_str())).collect()
    } else {
        manifest.calls.clone()
    };
    if call_names.len() < 2 {
        return Err(data_error(1, "need response columns for at least two calls (r1, r2, …)"));
    }
    let calls = call_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let reserved: Vec<usize> = [weight, outcome].into_iter().chain(calls.iter().copied()).collect();
    let (missing_names, observed_names) = if manifest.missing.is_empty() && manifest.observed.is_empty() {
        let rest = (0..names.len()).filter(|j| !reserved.contains(j)).map(|j| names[j].to_string()).collect();
        (rest, Vec::new())
    } else {
        (manifest.missing.clone(), manifest.observed.clone())
    };
    let missing = missing_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let observed = observed_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    Ok(Columns { weight, outcome, calls, missing, observed, missing_names, observed_names })
}

/// Reads a survey CSV. Empty fields are missing values; the outcome and the
/// co-missing covariates must be present exactly for respondents.
pub fn read_survey<R: Read>(reader: R, manifest: &Manifest) -> Result<SurveyDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols = resolve(&header, manifest)?;
    let mut units = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(record_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |j: usize| rec.get(j).unwrap_or("");
        let name = |j: usize| header.get(j).unwrap_or("").trim().to_string();
        let weight = parse_number(field(cols.weight), &name(cols.weight), line)?;
        let responses = cols
            .calls
            .iter()
            .map(|&j| match field(j) {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(data_error(line, format!("column `{}`: expected 0 or 1, got `{other}`", name(j)))),
            })
            .collect::<Result<Vec<bool>>>()?;
        if responses.windows(2).any(|w| w[0] && !w[1]) {
            return Err(data_error(line, "response indicators decrease across calls"));
        }
        let responded = responses.last().copied().unwrap_or(false);
        let optional = |j: usize| -> Result<Option<f64>> {
            match field(j) {
                "" => Ok(None),
                f => parse_number(f, &name(j), line).map(Some),
            }
        };
        let outcome = optional(cols.outcome)?;
        match (responded, outcome.is_some()) {
            (true, false) => return Err(data_error(line, "respondent has no outcome")),
            (false, true) => return Err(data_error(line, "nonrespondent has an outcome")),
            _ => {}
        }
        let mut x1 = Vec::with_capacity(cols.missing.len());
        for &j in &cols.missing {
            match (responded, optional(j)?) {
                (true, Some(v)) => x1.push(v),
                (true, None) => {
                    return Err(data_error(line, format!("respondent is missing co-missing covariate `{}`", name(j))))
                }
                (false, Some(_)) => {
                    return Err(data_error(
                        line,
                        format!("co-missing covariate `{}` is present for a nonrespondent", name(j)),
                    ))
                }
                (false, None) => {}
            }
        }
        let mut x2 = Vec::with_capacity(cols.observed.len());
        for &j in &cols.observed {
            match optional(j)? {
                Some(v) => x2.push(v),
                None => return Err(data_error(line, format!("observed covariate `{}` is empty", name(j)))),
            }
        }
        if !(weight > 0.0) {
            return Err(data_error(line, "weight must be positive"));
        }
        units.push(SurveyUnit {
            weight,
            responses,
            outcome,
            missing_covariates: responded.then_some(x1),
            observed_covariates: x2,
        });
    }
    if units.is_empty() {
        return Err(data_error(1, "no data rows"));
    }
    let calls = cols.calls.len();
    SurveyDataset::new(cols.missing_names, cols.observed_names, calls, units)
}

pub fn read_survey_path(path: &Path, manifest: &Manifest) -> Result<SurveyDataset> {
    read_survey(std::fs::File::open(path)?, manifest)
}
