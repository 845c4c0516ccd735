use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{config, Result};

/// A named slice of the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub labels: Vec<String>,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, labels: Vec<String>) -> Range<usize> {
        let start = self.dim();
        let range = start..start + labels.len();
        self.blocks.push(ParamBlock { name: name.to_string(), labels, range: range.clone() });
        range
    }

    pub fn dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.range.end)
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.block(name).map(|b| b.range.clone())
    }

    /// Block name and label for every coordinate.
    pub fn coordinates(&self) -> Vec<(String, String)> {
        self.blocks
            .iter()
            .flat_map(|b| b.labels.iter().map(move |l| (b.name.clone(), l.clone())))
            .collect()
    }

    fn without(&self, name: &str) -> Self {
        let mut out = Self::new();
        for b in self.blocks.iter().filter(|b| b.name != name) {
            out.push(&b.name, b.labels.clone());
        }
        out
    }
}

/// Aggregate pieces returned alongside the per-unit visits.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Population term `c(params)` added to the weighted sum (so `g = Σ ŵ φ + c`).
    pub population: Vec<f64>,
    /// Common contribution of every unit that was not visited.
    pub silent: Vec<f64>,
}

/// A stacked estimating function `g(params) = Σ_i ŵ_i φ_i(params) + c(params)`
/// with weights `ŵ_i = w_i / Σ w` summing to one.
///
/// Units whose contribution does not depend on their own data (typically
/// nonrespondents) are not visited; they share the `silent` contribution.
pub trait MomentFunction: Send + Sync {
    fn dim(&self) -> usize;

    /// Visits `(unit, ŵ_i, φ_i)` for every non-silent unit.
    fn accumulate(&self, params: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate>;

    /// `(Σ ŵ, Σ ŵ²)` over silent units.
    fn silent_weights(&self) -> (f64, f64);

    /// Range of each fitted propensity at `params`: `(call, min, max)`.
    fn propensity_ranges(&self, _params: &[f64]) -> Vec<(usize, f64, f64)> {
        Vec::new()
    }
}

/// An exactly identified system of estimating equations.
///
/// Row `j` of `g` is paired with parameter `j`; the pairing drives block-wise
/// initialisation and freezing of parameter blocks.
#[derive(Clone)]
pub struct EquationSystem {
    name: String,
    layout: ParamLayout,
    moments: Arc<dyn MomentFunction>,
    init_order: Vec<String>,
}

impl std::fmt::Debug for EquationSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EquationSystem")
            .field("name", &self.name)
            .field("layout", &self.layout)
            .finish()
    }
}

impl EquationSystem {
    pub fn new(
        name: impl Into<String>,
        layout: ParamLayout,
        moments: Arc<dyn MomentFunction>,
        init_order: Vec<String>,
    ) -> Result<Self> {
        if layout.dim() != moments.dim() {
            return config(format!(
                "system is not square: {} parameters, {} equations",
                layout.dim(),
                moments.dim()
            ));
        }
        Ok(Self { name: name.into(), layout, moments, init_order })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Blocks solved one at a time (others held fixed) to build a start value.
    pub fn init_order(&self) -> &[String] {
        &self.init_order
    }

    /// `g(params)`.
    pub fn residual(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.check(params)?;
        let mut sum = vec![0.0; self.dim()];
        let agg = self.moments.accumulate(params, &mut |_, w, phi| {
            for (s, p) in sum.iter_mut().zip(phi) {
                *s += w * p;
            }
        })?;
        let (ws, _) = self.moments.silent_weights();
        for ((s, c), q) in sum.iter_mut().zip(&agg.population).zip(&agg.silent) {
            *s += c + ws * q;
        }
        Ok(sum)
    }

    /// Per-unit centred contributions `ψ_i = φ_i + c`, with the silent group
    /// reported once together with its `Σ ŵ²`.
    pub fn contributions(&self, params: &[f64]) -> Result<Contributions> {
        self.check(params)?;
        let mut units = Vec::new();
        let agg = self.moments.accumulate(params, &mut |i, w, phi| units.push((i, w, phi.to_vec())))?;
        for (_, _, psi) in &mut units {
            for (p, c) in psi.iter_mut().zip(&agg.population) {
                *p += c;
            }
        }
        let silent = agg.silent.iter().zip(&agg.population).map(|(s, c)| s + c).collect();
        let (_, silent_weight_sq) = self.moments.silent_weights();
        Ok(Contributions { units, silent, silent_weight_sq })
    }

    /// `B = Σ ŵ_i² ψ_i ψ_iᵀ`.
    pub fn meat(&self, params: &[f64]) -> Result<DMatrix<f64>> {
        let c = self.contributions(params)?;
        let d = self.dim();
        let mut b = DMatrix::zeros(d, d);
        let mut add = |w2: f64, psi: &[f64]| {
            for r in 0..d {
                for s in 0..d {
                    b[(r, s)] += w2 * psi[r] * psi[s];
                }
            }
        };
        for (_, w, psi) in &c.units {
            add(w * w, psi);
        }
        add(c.silent_weight_sq, &c.silent);
        Ok(b)
    }

    pub fn propensity_ranges(&self, params: &[f64]) -> Vec<(usize, f64, f64)> {
        self.moments.propensity_ranges(params)
    }

    /// Holds the listed coordinates free (all others fixed at `base`) and keeps
    /// only their paired rows.
    pub fn restrict(&self, free: Vec<usize>, base: Vec<f64>) -> Result<EquationSystem> {
        self.check(&base)?;
        if free.iter().any(|&j| j >= self.dim()) {
            return config("restricted coordinate out of range");
        }
        let mut layout = ParamLayout::new();
        for b in self.layout.blocks() {
            let labels: Vec<String> = b
                .range
                .clone()
                .filter(|j| free.contains(j))
                .map(|j| b.labels[j - b.range.start].clone())
                .collect();
            if !labels.is_empty() {
                layout.push(&b.name, labels);
            }
        }
        let mut free = free;
        free.sort_unstable();
        free.dedup();
        let moments = Arc::new(Restricted { inner: self.moments.clone(), free, base });
        Self::new(format!("{}|restricted", self.name), layout, moments, vec![])
    }

    /// Fixes a whole block at `value` and drops its paired equations.
    pub fn freeze(&self, block: &str, value: &[f64]) -> Result<EquationSystem> {
        let range = self
            .layout
            .range(block)
            .ok_or_else(|| crate::Error::Config(format!("no parameter block `{block}`")))?;
        if range.len() != value.len() {
            return config(format!("block `{block}` has {} entries", range.len()));
        }
        let mut base = vec![0.0; self.dim()];
        base[range.clone()].copy_from_slice(value);
        let free: Vec<usize> = (0..self.dim()).filter(|j| !range.contains(j)).collect();
        let moments = Arc::new(Restricted { inner: self.moments.clone(), free, base });
        let init_order = self.init_order.iter().filter(|b| *b != block).cloned().collect();
        Self::new(self.name.clone(), self.layout.without(block), moments, init_order)
    }

    /// Full-length parameter vector of a block-restricted solve.
    pub fn expand(free: &[usize], base: &[f64], reduced: &[f64]) -> Vec<f64> {
        let mut full = base.to_vec();
        for (&j, &v) in free.iter().zip(reduced) {
            full[j] = v;
        }
        full
    }

    fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.dim() {
            return config(format!(
                "{}: expected {} parameters, got {}",
                self.name,
                self.dim(),
                params.len()
            ));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(crate::Error::Numeric("non-finite parameter value".into()));
        }
        Ok(())
    }
}

/// Centred per-unit contributions of an estimating function.
#[derive(Debug, Clone)]
pub struct Contributions {
    pub units: Vec<(usize, f64, Vec<f64>)>,
    pub silent: Vec<f64>,
    pub silent_weight_sq: f64,
}

struct Restricted {
    inner: Arc<dyn MomentFunction>,
    free: Vec<usize>,
    base: Vec<f64>,
}

impl Restricted {
    fn select(&self, v: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&j| v[j]).collect()
    }
}

impl MomentFunction for Restricted {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn accumulate(&self, params: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let full = EquationSystem::expand(&self.free, &self.base, params);
        let mut buf = vec![0.0; self.free.len()];
        let agg = self.inner.accumulate(&full, &mut |i, w, phi| {
            for (b, &j) in buf.iter_mut().zip(&self.free) {
                *b = phi[j];
            }
            visit(i, w, &buf);
        })?;
        Ok(Aggregate { population: self.select(&agg.population), silent: self.select(&agg.silent) })
    }

    fn silent_weights(&self) -> (f64, f64) {
        self.inner.silent_weights()
    }

    fn propensity_ranges(&self, params: &[f64]) -> Vec<(usize, f64, f64)> {
        self.inner
            .propensity_ranges(&EquationSystem::expand(&self.free, &self.base, params))
    }
}
