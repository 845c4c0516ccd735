//! Feature maps turning a covariate vector (and optionally an outcome) into
//! design vectors for the propensity, outcome and estimand models.

use std::fmt;
use std::sync::Arc;

use crate::error::{config, Result};

/// One column of a covariate design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Intercept,
    Column(usize),
    Square(usize),
    Product(usize, usize),
}

impl Term {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Intercept => 1.0,
            Term::Column(j) => x[j],
            Term::Square(j) => x[j] * x[j],
            Term::Product(i, j) => x[i] * x[j],
        }
    }

    fn max_index(&self) -> Option<usize> {
        match *self {
            Term::Intercept => None,
            Term::Column(j) | Term::Square(j) => Some(j),
            Term::Product(i, j) => Some(i.max(j)),
        }
    }

    /// Parses `1`, `name`, `name^2` or `a:b` against the covariate names.
    pub fn parse(spec: &str, names: &[String]) -> Result<Term> {
        let spec = spec.trim();
        let find = |n: &str| -> Result<usize> {
            names
                .iter()
                .position(|c| c == n.trim())
                .ok_or_else(|| crate::Error::Config(format!("unknown covariate `{}`", n.trim())))
        };
        if spec == "1" {
            return Ok(Term::Intercept);
        }
        if let Some(base) = spec.strip_suffix("^2") {
            return Ok(Term::Square(find(base)?));
        }
        if let Some((a, b)) = spec.split_once(':') {
            let (i, j) = (find(a)?, find(b)?);
            return Ok(if i == j { Term::Square(i) } else { Term::Product(i, j) });
        }
        Ok(Term::Column(find(spec)?))
    }

    pub fn label(&self, names: &[String]) -> String {
        let name = |j: usize| names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1));
        match *self {
            Term::Intercept => "(intercept)".to_string(),
            Term::Column(j) => name(j),
            Term::Square(j) => format!("{}^2", name(j)),
            Term::Product(i, j) => format!("{}:{}", name(i), name(j)),
        }
    }
}

/// A covariate-only design `x ↦ v(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    terms: Vec<Term>,
    labels: Vec<String>,
}

impl FeatureMap {
    pub fn new(terms: Vec<Term>, names: &[String]) -> Self {
        let labels = terms.iter().map(|t| t.label(names)).collect();
        Self { terms, labels }
    }

    /// Intercept followed by every covariate column.
    pub fn intercept_and_linear(names: &[String]) -> Self {
        let mut terms = vec![Term::Intercept];
        terms.extend((0..names.len()).map(Term::Column));
        Self::new(terms, names)
    }

    /// Intercept followed by the squares of the given columns.
    pub fn intercept_and_squares(cols: &[usize], names: &[String]) -> Self {
        let mut terms = vec![Term::Intercept];
        terms.extend(cols.iter().map(|&j| Term::Square(j)));
        Self::new(terms, names)
    }

    pub fn intercept_only() -> Self {
        Self::new(vec![Term::Intercept], &[])
    }

    pub fn parse(specs: &[String], names: &[String]) -> Result<Self> {
        if specs.is_empty() {
            return config("empty feature list");
        }
        let terms = specs.iter().map(|s| Term::parse(s, names)).collect::<Result<Vec<_>>>()?;
        Ok(Self::new(terms, names))
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn check_width(&self, width: usize) -> Result<()> {
        match self.terms.iter().filter_map(Term::max_index).max() {
            Some(j) if j >= width => config(format!(
                "feature map references covariate {} but vectors have {} entries",
                j + 1,
                width
            )),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(x);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(x)).collect()
    }
}

/// A term of an outcome-dependent feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YTerm {
    /// A covariate-only column, constant in `y`.
    Covariate(Term),
    /// `y · t(x)`.
    Outcome(Term),
}

pub type CustomFeatureFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// Feature map `(x, y) ↦ u(x, y)`.
///
/// The affine form `a(x) + y·b(x)` covers every map used for odds ratios and
/// calibration functions in practice; `Custom` allows arbitrary maps and
/// forces quadrature wherever expectations over a Gaussian outcome are needed.
#[derive(Clone)]
pub enum OutcomeFeatures {
    Affine { terms: Vec<YTerm>, labels: Vec<String> },
    Custom { labels: Vec<String>, f: CustomFeatureFn },
}

impl fmt::Debug for OutcomeFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Affine { terms, .. } => f.debug_tuple("Affine").field(terms).finish(),
            Self::Custom { labels, .. } => f.debug_tuple("Custom").field(labels).finish(),
        }
    }
}

impl OutcomeFeatures {
    pub fn affine(terms: Vec<YTerm>, names: &[String]) -> Self {
        let labels = terms
            .iter()
            .map(|t| match t {
                YTerm::Covariate(t) => t.label(names),
                YTerm::Outcome(Term::Intercept) => "y".to_string(),
                YTerm::Outcome(t) => format!("y:{}", t.label(names)),
            })
            .collect();
        Self::Affine { terms, labels }
    }

    /// `u(x, y) = y`.
    pub fn outcome() -> Self {
        Self::affine(vec![YTerm::Outcome(Term::Intercept)], &[])
    }

    /// Covariate features followed by `y`, e.g. `U(x, y) = (xᵀ, y)ᵀ`.
    pub fn covariates_then_outcome(map: &FeatureMap) -> Self {
        let mut terms: Vec<YTerm> = map.terms().iter().map(|&t| YTerm::Covariate(t)).collect();
        terms.push(YTerm::Outcome(Term::Intercept));
        let mut labels = map.labels().to_vec();
        labels.push("y".to_string());
        Self::Affine { terms, labels }
    }

    pub fn custom(labels: Vec<String>, f: CustomFeatureFn) -> Self {
        Self::Custom { labels, f }
    }

    /// Parses `y`, `y:name`, or any covariate term.
    pub fn parse(specs: &[String], names: &[String]) -> Result<Self> {
        if specs.is_empty() {
            return config("empty outcome feature list");
        }
        let mut terms = Vec::with_capacity(specs.len());
        for s in specs {
            let s = s.trim();
            let t = if s == "y" {
                YTerm::Outcome(Term::Intercept)
            } else if let Some(rest) = s.strip_prefix("y:") {
                YTerm::Outcome(Term::parse(rest, names)?)
            } else {
                YTerm::Covariate(Term::parse(s, names)?)
            };
            terms.push(t);
        }
        Ok(Self::affine(terms, names))
    }

    /// Concatenation of two affine maps.
    pub fn concat(&self, other: &OutcomeFeatures) -> Result<Self> {
        match (self, other) {
            (
                Self::Affine { terms: a, labels: la },
                Self::Affine { terms: b, labels: lb },
            ) => Ok(Self::Affine {
                terms: a.iter().chain(b).copied().collect(),
                labels: la.iter().chain(lb).cloned().collect(),
            }),
            _ => config("cannot concatenate custom outcome feature maps"),
        }
    }

    pub fn dim(&self) -> usize {
        self.labels().len()
    }

    pub fn labels(&self) -> &[String] {
        match self {
            Self::Affine { labels, .. } | Self::Custom { labels, .. } => labels,
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Self::Affine { .. })
    }

    /// True when every component is of the form `y·t(x)`, hence zero at `y = 0`
    /// and linear in `y`.
    pub fn is_linear_in_outcome(&self) -> bool {
        match self {
            Self::Affine { terms, .. } => terms.iter().all(|t| matches!(t, YTerm::Outcome(_))),
            Self::Custom { .. } => false,
        }
    }

    pub fn check_width(&self, width: usize) -> Result<()> {
        if let Self::Affine { terms, .. } = self {
            let inner: Vec<Term> = terms
                .iter()
                .map(|t| match *t {
                    YTerm::Covariate(t) | YTerm::Outcome(t) => t,
                })
                .collect();
            FeatureMap { terms: inner, labels: vec![] }.check_width(width)?;
        }
        Ok(())
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], y: f64, out: &mut [f64]) {
        match self {
            Self::Affine { terms, .. } => {
                for (o, t) in out.iter_mut().zip(terms) {
                    *o = match t {
                        YTerm::Covariate(t) => t.eval(x),
                        YTerm::Outcome(t) => y * t.eval(x),
                    };
                }
            }
            Self::Custom { f, .. } => f(x, y, out),
        }
    }

    pub fn eval(&self, x: &[f64], y: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, y, &mut out);
        out
    }

    /// Writes `a(x)` and `b(x)` of the affine decomposition `u = a + y·b`.
    /// Returns false (leaving the buffers untouched) for custom maps.
    #[inline]
    pub fn affine_parts(&self, x: &[f64], a: &mut [f64], b: &mut [f64]) -> bool {
        match self {
            Self::Affine { terms, .. } => {
                for ((t, ai), bi) in terms.iter().zip(a.iter_mut()).zip(b.iter_mut()) {
                    match t {
                        YTerm::Covariate(t) => {
                            *ai = t.eval(x);
                            *bi = 0.0;
                        }
                        YTerm::Outcome(t) => {
                            *ai = 0.0;
                            *bi = t.eval(x);
                        }
                    }
                }
                true
            }
            Self::Custom { .. } => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    #[test]
    fn parses_terms() {
        let n = names();
        let map = FeatureMap::parse(
            &["1".into(), "b".into(), "a^2".into(), "a:c".into(), "b:b".into()],
            &n,
        )
        .unwrap();
        assert_eq!(map.eval(&[2.0, 3.0, 5.0]), vec![1.0, 3.0, 4.0, 10.0, 9.0]);
        assert_eq!(map.labels()[3], "a:c");
        assert!(FeatureMap::parse(&["zz".into()], &n).is_err());
    }

    #[test]
    fn outcome_features_affine_parts() {
        let n = names();
        let u = OutcomeFeatures::parse(&["y".into(), "y:b".into(), "c".into()], &n).unwrap();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(u.eval(&x, 0.0), vec![0.0, 0.0, 3.0]);
        assert_eq!(u.eval(&x, 2.0), vec![2.0, 4.0, 3.0]);
        let (mut a, mut b) = (vec![0.0; 3], vec![0.0; 3]);
        assert!(u.affine_parts(&x, &mut a, &mut b));
        assert_eq!(a, vec![0.0, 0.0, 3.0]);
        assert_eq!(b, vec![1.0, 2.0, 0.0]);
        assert!(!u.is_linear_in_outcome());
        assert!(OutcomeFeatures::outcome().is_linear_in_outcome());
    }

    #[test]
    fn width_check() {
        let map = FeatureMap::new(vec![Term::Intercept, Term::Column(4)], &[]);
        assert!(map.check_width(3).is_err());
        assert!(map.check_width(5).is_ok());
    }
}
