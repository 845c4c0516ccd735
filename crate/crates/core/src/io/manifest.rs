use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equations::{LastCallSpec, ModelSpec};
use crate::error::{config, Error, Result};
use crate::model::{DesignWeighting, EstimandSpec, Family, FeatureMap, OutcomeFeatures, Term};

/// Column roles and working models for a survey file.
///
/// ```toml
/// family = "binary"
/// missing = ["age", "male"]
/// observed = ["design"]
///
/// [model]
/// baseline1 = ["1", "age", "male", "design"]
/// odds = ["y", "y:male"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default = "default_weight")]
    pub weight: String,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    /// Callback indicator columns in call order; empty means `r1, r2, …`.
    #[serde(default)]
    pub calls: Vec<String>,
    #[serde(default = "default_family")]
    pub family: String,
    /// Covariates missing whenever the outcome is.
    #[serde(default)]
    pub missing: Vec<String>,
    /// Covariates observed for every sampled unit.
    #[serde(default)]
    pub observed: Vec<String>,
    #[serde(default)]
    pub design_weighting: DesignWeighting,
    #[serde(default)]
    pub model: ModelSection,
}

/// Feature lists; each entry is `1`, `name`, `name^2`, `a:b`, `y` or `y:term`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub baseline1: Option<Vec<String>>,
    pub baseline2: Option<Vec<String>>,
    pub odds: Option<Vec<String>>,
    pub outcome: Option<Vec<String>>,
    pub calibration1: Option<Vec<String>>,
    pub calibration2: Option<Vec<String>>,
    pub odds_calibration: Option<Vec<String>>,
    pub reg_calibration: Option<Vec<String>>,
    /// `mean` or `logit:a,b`.
    pub estimand: Option<String>,
    pub last_baseline: Option<Vec<String>>,
    pub last_odds: Option<Vec<String>>,
    pub last_outcome: Option<Vec<String>>,
}

fn default_weight() -> String {
    "weight".into()
}

fn default_outcome() -> String {
    "y".into()
}

fn default_family() -> String {
    "binary".into()
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            weight: default_weight(),
            outcome: default_outcome(),
            calls: Vec::new(),
            family: default_family(),
            missing: Vec::new(),
            observed: Vec::new(),
            design_weighting: DesignWeighting::default(),
            model: ModelSection::default(),
        }
    }
}

/// Parses `mean` or `logit:a,b,…`; the logistic design always has an intercept.
pub fn parse_estimand(s: &str, names: &[String]) -> Result<EstimandSpec> {
    let s = s.trim();
    if s == "mean" {
        return Ok(EstimandSpec::Mean);
    }
    let Some(cols) = s.strip_prefix("logit:") else {
        return config(format!("unknown estimand `{s}` (expected `mean` or `logit:<cols>`)"));
    };
    let mut terms = vec![Term::Intercept];
    for c in cols.split(',').map(str::trim).filter(|c| !c.is_empty() && *c != "1") {
        terms.push(Term::parse(c, names)?);
    }
    Ok(EstimandSpec::Logistic(FeatureMap::new(terms, names)))
}

impl Manifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn family(&self) -> Result<Family> {
        self.family.parse()
    }

    /// Working models over the covariate order `missing ++ observed`.
    pub fn model_spec(&self, names: &[String]) -> Result<ModelSpec> {
        let m = &self.model;
        let mut spec = ModelSpec::standard(names, self.family()?);
        let map = |v: &Option<Vec<String>>| v.as_ref().map(|v| FeatureMap::parse(v, names)).transpose();
        let umap = |v: &Option<Vec<String>>| v.as_ref().map(|v| OutcomeFeatures::parse(v, names)).transpose();
        if let Some(f) = map(&m.baseline1)? {
            spec.baseline1 = f;
        }
        if let Some(f) = map(&m.baseline2)? {
            spec.baseline2 = f;
        }
        if let Some(f) = umap(&m.odds)? {
            spec.odds = f;
        }
        if let Some(f) = map(&m.outcome)? {
            spec.outcome = f;
        }
        spec.calibration1 = map(&m.calibration1)?;
        spec.calibration2 = map(&m.calibration2)?;
        spec.odds_calibration = umap(&m.odds_calibration)?;
        spec.reg_calibration = umap(&m.reg_calibration)?;
        if let Some(e) = &m.estimand {
            spec.estimand = parse_estimand(e, names)?;
        }
        spec = spec.with_standard_last_call();
        if let Some(last) = spec.last.as_mut() {
            apply_last(last, m, names)?;
        }
        Ok(spec)
    }
}

fn apply_last(last: &mut LastCallSpec, m: &ModelSection, names: &[String]) -> Result<()> {
    if let Some(v) = &m.last_baseline {
        last.baseline = FeatureMap::parse(v, names)?;
    }
    if let Some(v) = &m.last_odds {
        last.odds = OutcomeFeatures::parse(v, names)?;
    }
    if let Some(v) = &m.last_outcome {
        last.outcome = FeatureMap::parse(v, names)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let m = Manifest::from_toml(
            "family = \"continuous\"\nmissing = [\"a\"]\n[model]\nodds = [\"y\", \"y:a\"]\nestimand = \"logit:a\"\n",
        )
        .unwrap();
        assert_eq!(m.weight, "weight");
        let names = vec!["a".to_string()];
        let spec = m.model_spec(&names).unwrap();
        assert_eq!(spec.family, Family::Gaussian);
        assert_eq!(spec.odds.dim(), 2);
        assert_eq!(spec.estimand.dim(), 2);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(Manifest::from_toml("wieght = \"w\"").is_err());
    }

    #[test]
    fn estimand_strings() {
        let names = vec!["a".to_string(), "b".to_string()];
        assert_eq!(parse_estimand("mean", &names).unwrap(), EstimandSpec::Mean);
        assert_eq!(parse_estimand("logit:a,b", &names).unwrap().dim(), 3);
        assert!(parse_estimand("probit:a", &names).is_err());
        assert!(parse_estimand("logit:c", &names).is_err());
    }
}
