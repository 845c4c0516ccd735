use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Family;

/// Which working models are correct: baseline `A_2` first, outcome `f_2` second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    TT,
    FT,
    TF,
    FF,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::TT, Setting::FT, Setting::TF, Setting::FF];

    /// Designs `(W_1, W_2)` of the second-call baseline and outcome law.
    pub fn designs(self) -> (Design, Design) {
        use Design::{Linear, Squared};
        match self {
            Setting::TT => (Linear, Linear),
            Setting::FT => (Squared, Linear),
            Setting::TF => (Linear, Squared),
            Setting::FF => (Squared, Squared),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TT" => Ok(Setting::TT),
            "FT" => Ok(Setting::FT),
            "TF" => Ok(Setting::TF),
            "FF" => Ok(Setting::FF),
            _ => Err(Error::Config(format!("unknown scenario `{s}` (expected TT, FT, TF or FF)"))),
        }
    }
}

/// `X = (1, X_a, X_b)` or `X̃ = (1, X_a², X_b²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Linear,
    Squared,
}

impl Design {
    #[inline]
    pub fn eval(self, xa: f64, xb: f64) -> [f64; 3] {
        match self {
            Design::Linear => [1.0, xa, xb],
            Design::Squared => [1.0, xa * xa, xb * xb],
        }
    }
}

/// Response model of the last call in three-call designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastCall {
    pub alpha: [f64; 3],
    pub gamma: f64,
}

/// Data-generating parameters of one simulation scenario.
///
/// Calls 1 and 2 respond with `π_1 = expit(α_1ᵀX + γY)` and
/// `π_2 = expit{α_2ᵀW_1 + (γ + Δ)Y}`; `f_2(y | x)` is the law of `Y` among
/// second-call respondents with linear predictor `βᵀW_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub family: Family,
    pub alpha1: [f64; 3],
    pub alpha2: [f64; 3],
    pub beta: [f64; 3],
    pub gamma: f64,
    /// Gaussian family only.
    pub sigma2: f64,
    pub w1: Design,
    pub w2: Design,
    /// Second-call odds ratio is `γ + Δ`; zero under stableness of resistance.
    pub delta: f64,
    pub last: Option<LastCall>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 20240607;

impl ScenarioSpec {
    /// A scenario of the binary or continuous outcome simulation.
    pub fn named(setting: Setting, family: Family) -> Self {
        let (w1, w2) = setting.designs();
        let (alpha1, alpha2, beta, gamma, sigma2) = match (family, setting) {
            (Family::Binary, Setting::TT) => ([-1.0, 0.5, 0.2], [-0.5, 0.5, 0.2], [-0.5, 0.5, 0.5], 1.0, 1.0),
            (Family::Binary, Setting::FT) => ([-0.2, -0.5, 0.7], [-0.6, 1.7, 1.0], [1.2, 0.5, 0.5], -0.9, 1.0),
            (Family::Binary, Setting::TF) => ([-1.0, 0.5, 0.2], [-0.5, 0.5, 0.2], [-0.5, 5.0, -2.0], 1.3, 1.0),
            (Family::Binary, Setting::FF) => ([-0.3, 0.5, 0.2], [-0.5, -1.5, 0.2], [-1.0, 5.0, 0.5], 1.5, 1.0),
            (Family::Gaussian, Setting::TT) => ([0.0, 0.6, 0.5], [1.4, -0.5, 0.2], [0.6, 1.0, 0.3], 0.13, 3.0),
            (Family::Gaussian, Setting::FT) => ([-0.35, -0.5, 0.7], [-0.5, 1.8, 1.0], [-0.8, 5.0, 3.5], 0.12, 2.0),
            (Family::Gaussian, Setting::TF) => ([-1.0, 1.0, -0.1], [0.5, 1.0, -0.1], [-0.5, 5.0, -1.0], 0.5, 0.4),
            (Family::Gaussian, Setting::FF) => ([-0.3, -0.5, 1.0], [-0.4, 0.8, 0.0], [-1.5, 4.0, 3.0], 0.25, 0.25),
        };
        let fam = match family {
            Family::Binary => "binary",
            Family::Gaussian => "continuous",
        };
        Self {
            name: format!("{setting}-{fam}"),
            family,
            alpha1,
            alpha2,
            beta,
            gamma,
            sigma2,
            w1,
            w2,
            delta: 0.0,
            last: None,
            n: 5000,
            reps: 1000,
            seed: DEFAULT_SEED,
        }
    }

    /// Binary design where the second-call odds ratio is `0.5 + Δ`.
    pub fn sensitivity(delta: f64) -> Self {
        let mut s = Self::named(Setting::TT, Family::Binary);
        s.name = format!("sensitivity-delta{delta:+}");
        s.gamma = 0.5;
        s.delta = delta;
        s
    }

    /// Scenario TT extended with a third call.
    pub fn three_calls(family: Family, last: LastCall) -> Self {
        let mut s = Self::named(Setting::TT, family);
        s.name = format!("{}-3calls", s.name);
        s.last = Some(last);
        s
    }

    pub fn with_size(mut self, n: usize, reps: usize) -> Self {
        self.n = n;
        self.reps = reps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn calls(&self) -> usize {
        if self.last.is_some() {
            3
        } else {
            2
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.alpha1.iter().chain(&self.alpha2).chain(&self.beta).all(|v| v.is_finite());
        if !finite || !self.gamma.is_finite() || !self.delta.is_finite() {
            return Err(Error::Config("scenario parameters must be finite".into()));
        }
        if self.family == Family::Gaussian && !(self.sigma2 > 0.0) {
            return Err(Error::Config("σ² must be positive".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("sample size must be positive".into()));
        }
        Ok(())
    }
}
