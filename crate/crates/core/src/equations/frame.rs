//! Respondent rows with precomputed feature matrices.

use crate::error::{Error, Result};
use crate::math::{dot, expit};
use crate::model::{
    law_from_predictor, score_into, CovariateDistribution, EstimandSpec, Family, FeatureMap,
    OutcomeFeatures, OutcomeLaw, SurveyDataset,
};
use crate::tilting::{expect, tilt_law, Tilt};

/// Propensities closer than this to 0 or 1 are rejected.
pub const POSITIVITY_EPS: f64 = 1e-10;

/// Row-major dense matrix.
#[derive(Debug, Clone, Default)]
pub(crate) struct Mat {
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        let mut data = vec![0.0; rows * cols];
        if cols > 0 {
            for (i, row) in data.chunks_exact_mut(cols).enumerate() {
                f(i, row);
            }
        }
        Self { cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub unit: usize,
    pub w: f64,
    pub r1: f64,
    pub r2: f64,
    /// Responded by the call before the horizon.
    pub prev: f64,
    pub x: Vec<f64>,
    pub y: f64,
}

/// Units that responded by `horizon`; everyone else is silent.
#[derive(Debug, Clone)]
pub(crate) struct Frame {
    pub rows: Vec<Row>,
    pub silent: (f64, f64),
}

impl Frame {
    pub fn new(data: &SurveyDataset, horizon: usize) -> Result<Self> {
        if horizon < 2 || horizon > data.calls() {
            return Err(Error::Config(format!(
                "dataset has {} calls, cannot analyse through call {horizon}",
                data.calls()
            )));
        }
        let total: f64 = data.weights().iter().sum();
        let mut rows = Vec::new();
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..data.len() {
            let w = data.weight(i) / total;
            if data.responded_by(i, horizon) {
                let ind = |k: usize| if data.responded_by(i, k) { 1.0 } else { 0.0 };
                rows.push(Row {
                    unit: i,
                    w,
                    r1: ind(1),
                    r2: ind(2),
                    prev: ind(horizon - 1),
                    x: data.covariates(i).expect("respondent covariates"),
                    y: data.outcome(i).expect("respondent outcome"),
                });
            } else {
                s1 += w;
                s2 += w * w;
            }
        }
        if rows.is_empty() {
            return Err(Error::Identification(format!("no respondents by call {horizon}")));
        }
        Ok(Self { rows, silent: (s1, s2) })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}

/// `expit(lin)` with the positivity check.
#[inline]
pub(crate) fn propensity_checked(lin: f64, unit: usize, call: usize) -> Result<f64> {
    let p = expit(lin);
    if p.is_nan() || p <= POSITIVITY_EPS || p >= 1.0 - POSITIVITY_EPS {
        return Err(Error::Positivity { unit, call, value: p });
    }
    Ok(p)
}

/// Tracks the range of fitted propensities.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Range1 {
    pub min: f64,
    pub max: f64,
}

impl Default for Range1 {
    fn default() -> Self {
        Self { min: f64::INFINITY, max: f64::NEG_INFINITY }
    }
}

impl Range1 {
    pub fn add(&mut self, p: f64) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }
}

/// A covariate design evaluated on respondents and on the population support.
pub(crate) struct DesignBlock {
    pub rows: Mat,
    pub pop_mean: Vec<f64>,
    pub dim: usize,
}

impl DesignBlock {
    pub fn new(map: &FeatureMap, frame: &Frame, dist: &CovariateDistribution) -> Result<Self> {
        let width = frame.rows[0].x.len();
        map.check_width(width)?;
        check_dist(dist, width)?;
        let dim = map.dim();
        let rows = Mat::from_fn(frame.len(), dim, |i, out| map.eval_into(&frame.rows[i].x, out));
        let pop_mean = dist.expectation(dim, |x, out| map.eval_into(x, out));
        Ok(Self { rows, pop_mean, dim })
    }
}

pub(crate) fn check_dist(dist: &CovariateDistribution, width: usize) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::Config("empty covariate distribution".into()));
    }
    if dist.dim() != width {
        return Err(Error::Config(format!(
            "covariate distribution has dimension {}, data covariates have {width}",
            dist.dim()
        )));
    }
    Ok(())
}

/// Where a covariate vector comes from: a respondent row or a support point.
#[derive(Clone, Copy)]
pub(crate) enum At {
    Row(usize),
    Pop(usize),
}

/// Odds-ratio features `u(x, y)` with their `y`-slopes when linear.
pub(crate) struct OddsBlock {
    pub features: OutcomeFeatures,
    pub obs: Mat,
    slope: Option<(Mat, Mat)>,
    pub dim: usize,
}

impl OddsBlock {
    pub fn new(features: &OutcomeFeatures, frame: &Frame, dist: &CovariateDistribution) -> Result<Self> {
        features.check_width(frame.rows[0].x.len())?;
        if matches!(features, OutcomeFeatures::Affine { .. }) && !features.is_linear_in_outcome() {
            return Err(Error::Config("odds-ratio features must vanish at y = 0".into()));
        }
        let dim = features.dim();
        let obs = Mat::from_fn(frame.len(), dim, |i, out| {
            features.eval_into(&frame.rows[i].x, frame.rows[i].y, out)
        });
        let slope = features.is_linear_in_outcome().then(|| {
            (
                Mat::from_fn(frame.len(), dim, |i, out| features.eval_into(&frame.rows[i].x, 1.0, out)),
                Mat::from_fn(dist.len(), dim, |j, out| features.eval_into(&dist.support()[j], 1.0, out)),
            )
        });
        Ok(Self { features: features.clone(), obs, slope, dim })
    }

    /// `γᵀu(x_i, y_i)`.
    #[inline]
    pub fn at_obs(&self, i: usize, gamma: &[f64]) -> f64 {
        dot(self.obs.row(i), gamma)
    }

    /// Law of `Y` given `x` after tilting `law` by `exp{−γᵀu(x, y) − Δy}`.
    pub fn tilt(
        &self,
        at: At,
        x: &[f64],
        base: Base,
        gamma: &[f64],
        delta: f64,
        need_law: bool,
    ) -> Result<Cond> {
        match &self.slope {
            Some((rows, pop)) => {
                let z = match at {
                    At::Row(i) => rows.row(i),
                    At::Pop(j) => pop.row(j),
                };
                base.tilt_linear(dot(z, gamma) + delta, need_law)
            }
            None => {
                let g = |y: f64| dot(&self.features.eval(x, y), gamma) + delta * y;
                let law = tilt_law(&base.law(), Tilt::General(&g))?;
                Cond::from_law(law)
            }
        }
    }
}

/// Untilted conditional law, as (family, linear predictor, variance).
#[derive(Clone, Copy)]
pub(crate) struct Base {
    pub family: Family,
    pub eta: f64,
    pub sigma2: f64,
}

impl Base {
    pub fn law(&self) -> OutcomeLaw {
        law_from_predictor(self.family, self.eta, self.sigma2)
    }

    pub fn untilted(&self, need_law: bool) -> Cond {
        let mean = match self.family {
            Family::Binary => expit(self.eta),
            Family::Gaussian => self.eta,
        };
        Cond { mean, law: need_law.then(|| self.law()) }
    }

    #[inline]
    pub fn tilt_linear(&self, c: f64, need_law: bool) -> Result<Cond> {
        let mean = match self.family {
            Family::Binary => expit(self.eta - c),
            Family::Gaussian => self.eta - c * self.sigma2,
        };
        if !mean.is_finite() {
            return Err(Error::Numeric("non-finite tilted mean".into()));
        }
        let law = if need_law {
            Some(match self.family {
                Family::Binary => OutcomeLaw::Binary { p: mean },
                Family::Gaussian => OutcomeLaw::Gaussian { mean, var: self.sigma2 },
            })
        } else {
            None
        };
        Ok(Cond { mean, law })
    }
}

/// A conditional law of `Y`, summarised by its mean.
pub(crate) struct Cond {
    pub mean: f64,
    pub law: Option<OutcomeLaw>,
}

impl Cond {
    fn from_law(law: OutcomeLaw) -> Result<Self> {
        let mean = law.mean();
        if !mean.is_finite() {
            return Err(Error::Numeric("non-finite tilted mean".into()));
        }
        Ok(Self { mean, law: Some(law) })
    }
}

/// An outcome regression `f(y | x; β)` on respondents and on the support.
pub(crate) struct OutcomeBlock {
    pub family: Family,
    pub rows: Mat,
    pub pop: Mat,
    pub design_dim: usize,
    pub labels: Vec<String>,
}

impl OutcomeBlock {
    pub fn new(family: Family, map: &FeatureMap, frame: &Frame, dist: &CovariateDistribution) -> Result<Self> {
        map.check_width(frame.rows[0].x.len())?;
        if family == Family::Binary && frame.rows.iter().any(|r| r.y != 0.0 && r.y != 1.0) {
            return Err(Error::Invalid("binary outcome model but outcomes outside {0, 1}".into()));
        }
        let d = map.dim();
        let mut labels = map.labels().to_vec();
        if family == Family::Gaussian {
            labels.push("log_sigma2".into());
        }
        Ok(Self {
            family,
            rows: Mat::from_fn(frame.len(), d, |i, out| map.eval_into(&frame.rows[i].x, out)),
            pop: Mat::from_fn(dist.len(), d, |j, out| map.eval_into(&dist.support()[j], out)),
            design_dim: d,
            labels,
        })
    }

    pub fn base(&self, at: At, beta: &[f64]) -> Base {
        let d = match at {
            At::Row(i) => self.rows.row(i),
            At::Pop(j) => self.pop.row(j),
        };
        Base { family: self.family, eta: dot(d, &beta[..self.design_dim]), sigma2: self.sigma2(beta) }
    }

    #[inline]
    pub fn sigma2(&self, beta: &[f64]) -> f64 {
        match self.family {
            Family::Binary => 1.0,
            Family::Gaussian => beta[self.design_dim].exp(),
        }
    }

    /// Outcome score; Gaussian rows are multiplied by `σ²`, which keeps the
    /// root and the sandwich but stops `‖g‖` from shrinking as `σ² → ∞`.
    pub fn score(&self, i: usize, base: &Base, y: f64, out: &mut [f64]) {
        score_into(self.family, self.rows.row(i), base.eta, base.sigma2, y, out);
        if self.family == Family::Gaussian {
            for o in out.iter_mut() {
                *o *= base.sigma2;
            }
        }
    }
}

/// Calibration function `U(x, y)` with cached affine parts.
pub(crate) struct UBlock {
    pub features: OutcomeFeatures,
    pub obs: Mat,
    affine: Option<(Mat, Mat, Mat, Mat)>,
    pub dim: usize,
}

impl UBlock {
    pub fn new(features: &OutcomeFeatures, frame: &Frame, dist: &CovariateDistribution) -> Result<Self> {
        features.check_width(frame.rows[0].x.len())?;
        let dim = features.dim();
        let obs = Mat::from_fn(frame.len(), dim, |i, out| {
            features.eval_into(&frame.rows[i].x, frame.rows[i].y, out)
        });
        let affine = features.is_affine().then(|| {
            let xs: Vec<&[f64]> = frame.rows.iter().map(|r| r.x.as_slice()).collect();
            let ps: Vec<&[f64]> = dist.support().iter().map(Vec::as_slice).collect();
            let (ra, rb) = affine_mats(features, &xs);
            let (pa, pb) = affine_mats(features, &ps);
            (ra, rb, pa, pb)
        });
        Ok(Self { features: features.clone(), obs, affine, dim })
    }

    pub fn needs_law(&self) -> bool {
        self.affine.is_none()
    }

    /// `E{U(x, Y)}` under `cond`, written into `out`.
    pub fn expect(&self, at: At, x: &[f64], cond: &Cond, out: &mut [f64]) {
        match &self.affine {
            Some((ra, rb, pa, pb)) => {
                let (a, b) = match at {
                    At::Row(i) => (ra.row(i), rb.row(i)),
                    At::Pop(j) => (pa.row(j), pb.row(j)),
                };
                for ((o, a), b) in out.iter_mut().zip(a).zip(b) {
                    *o = a + b * cond.mean;
                }
            }
            None => {
                let law = cond.law.as_ref().expect("law requested for custom U");
                out.copy_from_slice(&expect(law, &self.features, x));
            }
        }
    }
}

fn affine_mats(features: &OutcomeFeatures, xs: &[&[f64]]) -> (Mat, Mat) {
    let dim = features.dim();
    let mut tmp = vec![0.0; dim];
    let a = Mat::from_fn(xs.len(), dim, |i, out| {
        features.affine_parts(xs[i], out, &mut tmp);
    });
    let b = Mat::from_fn(xs.len(), dim, |i, out| {
        features.affine_parts(xs[i], &mut tmp, out);
    });
    (a, b)
}

/// The estimating function `m(x, y; θ) = a + y·b`.
pub(crate) struct EstimandBlock {
    rows: Option<Mat>,
    pop: Option<Mat>,
    pub dim: usize,
}

impl EstimandBlock {
    pub fn new(spec: &EstimandSpec, frame: &Frame, dist: Option<&CovariateDistribution>) -> Result<Self> {
        let (rows, pop) = match spec {
            EstimandSpec::Mean => (None, None),
            EstimandSpec::Logistic(d) => {
                d.check_width(frame.rows[0].x.len())?;
                if frame.rows.iter().any(|r| r.y < 0.0 || r.y > 1.0) {
                    return Err(Error::Invalid("logistic estimand needs outcomes in [0, 1]".into()));
                }
                (
                    Some(Mat::from_fn(frame.len(), d.dim(), |i, o| d.eval_into(&frame.rows[i].x, o))),
                    dist.map(|dist| {
                        Mat::from_fn(dist.len(), d.dim(), |j, o| d.eval_into(&dist.support()[j], o))
                    }),
                )
            }
        };
        Ok(Self { rows, pop, dim: spec.dim() })
    }

    #[inline]
    pub fn parts(&self, at: At, theta: &[f64], a: &mut [f64], b: &mut [f64]) {
        let design = match at {
            At::Row(i) => self.rows.as_ref().map(|m| m.row(i)),
            At::Pop(j) => self.pop.as_ref().map(|m| m.row(j)),
        };
        match design {
            None => {
                a[0] = -theta[0];
                b[0] = 1.0;
            }
            Some(d) => {
                let p = expit(dot(d, theta));
                for ((ai, bi), di) in a.iter_mut().zip(b.iter_mut()).zip(d) {
                    *bi = *di;
                    *ai = -di * p;
                }
            }
        }
    }

    /// `m(x_i, y_i; θ)`.
    pub fn observed(&self, i: usize, y: f64, theta: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.parts(At::Row(i), theta, out, scratch);
        for (o, b) in out.iter_mut().zip(scratch.iter()) {
            *o += y * b;
        }
    }

    /// `E{m(x, Y; θ)}` under a law with the given mean.
    pub fn imputed(&self, at: At, mean: f64, theta: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.parts(at, theta, out, scratch);
        for (o, b) in out.iter_mut().zip(scratch.iter()) {
            *o += mean * b;
        }
    }
}
