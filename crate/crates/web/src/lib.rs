//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string; errors come back as `{"error": …}`.

use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use sor::equations::{pc_identify, PcCells, SorKind};
use sor::estimate::{build, fit, FitOptions};
use sor::model::{Family, FeatureMap, OutcomeFeatures, OutcomeModel};
use sor::rng::substream;
use sor::simulate::{generate, population, true_mean, working_model, ScenarioSpec, Setting, POPULATION_NODES};
use sor::tilting::{conditional_expectation_g, tilted_expectation_h, LogOddsRatio};

fn respond<T: Serialize>(r: sor::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[derive(Serialize)]
struct Tilt {
    respondents: f64,
    nonrespondents: f64,
}

/// Mean of `Y` among second-call respondents and, after tilting by `γ`,
/// among nonrespondents. `location` is `P(Y = 1)` for a binary outcome and
/// the mean for a Gaussian one.
#[wasm_bindgen]
pub fn tilted_mean(family: &str, location: f64, variance: f64, gamma: f64) -> String {
    respond((|| {
        let model = match family.parse::<Family>()? {
            Family::Binary => {
                if !(location > 0.0 && location < 1.0) {
                    return Err(sor::Error::Config("probability must lie in (0, 1)".into()));
                }
                OutcomeModel::binary(FeatureMap::intercept_only(), vec![sor::math::logit(location)])?
            }
            Family::Gaussian => OutcomeModel::gaussian(FeatureMap::intercept_only(), vec![location], variance)?,
        };
        let u = OutcomeFeatures::outcome();
        let orm = LogOddsRatio::new(u.clone(), vec![gamma])?;
        Ok(Tilt {
            respondents: conditional_expectation_g(&model, &u, &[])?[0],
            nonrespondents: tilted_expectation_h(&model, &orm, &u, &[])?[0],
        })
    })())
}

#[derive(Serialize)]
struct Fitted {
    method: String,
    theta: f64,
    se: Option<f64>,
    gamma: f64,
    converged: bool,
}

#[derive(Serialize)]
struct Replicate {
    truth: f64,
    respondents: usize,
    complete_case: f64,
    fits: Vec<Fitted>,
}

/// Draws one replicate of a binary scenario and fits IPW, REG and DR.
#[wasm_bindgen]
pub fn simulate_replicate(scenario: &str, n: usize, seed: u64) -> String {
    respond((|| {
        let setting: Setting = scenario.parse()?;
        let spec = ScenarioSpec::named(setting, Family::Binary).with_size(n, 1).with_seed(seed);
        let data = generate(&spec, &mut substream(seed, &spec.name, 0))?;
        let dist = population(POPULATION_NODES)?;
        let model = working_model(&spec);
        let ys: Vec<f64> = (0..data.len()).filter_map(|i| data.outcome(i)).collect();
        let mut fits = Vec::new();
        for kind in [SorKind::Ipw, SorKind::Reg, SorKind::Dr] {
            let est = fit(&build(kind, &data, &model, &dist, 2)?, &FitOptions::default())?;
            let theta = est.first("theta").cloned();
            fits.push(Fitted {
                method: kind.name().to_string(),
                theta: theta.as_ref().map_or(f64::NAN, |p| p.estimate),
                se: theta.and_then(|p| p.se),
                gamma: est.first("gamma").map_or(f64::NAN, |p| p.estimate),
                converged: est.converged,
            });
        }
        Ok(Replicate {
            truth: true_mean(&spec),
            respondents: ys.len(),
            complete_case: ys.iter().sum::<f64>() / ys.len().max(1) as f64,
            fits,
        })
    })())
}

#[derive(Serialize)]
struct Cells {
    p: [f64; 6],
    theta: f64,
}

/// Closed-form identification of the parameter-counting model from the four
/// observed cell probabilities.
#[wasm_bindgen]
pub fn parameter_counting(p3: f64, p4: f64, p5: f64, p6: f64) -> String {
    respond(pc_identify(PcCells { p3, p4, p5, p6 }).map(|s| Cells { p: s.p, theta: s.theta }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exports_return_json() {
        let v: serde_json::Value = serde_json::from_str(&tilted_mean("binary", 0.8, 1.0, 1.0)).unwrap();
        assert!((v["nonrespondents"].as_f64().unwrap() - 0.595390).abs() < 1e-6);
        let v: serde_json::Value = serde_json::from_str(&parameter_counting(0.125, 0.125, 0.125, 0.125)).unwrap();
        assert!((v["p"][0].as_f64().unwrap() - 0.25).abs() < 1e-10);
        let v: serde_json::Value = serde_json::from_str(&tilted_mean("binary", 1.5, 1.0, 1.0)).unwrap();
        assert!(v["error"].is_string());
        let v: serde_json::Value = serde_json::from_str(&simulate_replicate("TT", 1500, 3)).unwrap();
        assert_eq!(v["fits"].as_array().unwrap().len(), 3);
    }
}
