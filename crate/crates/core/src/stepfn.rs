//! Deterministic time factors for iterated integrals: right-continuous step
//! functions on `[0, T]` and elementary tensors `F_0 (x) F_1 (x) ... (x) F_n`.

use crate::error::{Error, Result};

/// A right-continuous step function on `[0, infinity)`: `value = values[i]`
/// on `[starts[i], starts[i+1])`, with `starts[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    starts: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(starts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if starts.is_empty() || starts.len() != values.len() {
            return Err(Error::ConfigInvalid("step function needs one value per start".into()));
        }
        if starts[0] != 0.0 {
            return Err(Error::ConfigInvalid("step function must start at 0".into()));
        }
        if starts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ConfigInvalid("step function starts must be strictly increasing".into()));
        }
        Ok(Self { starts, values })
    }

    pub fn constant(v: f64) -> Self {
        Self { starts: vec![0.0], values: vec![v] }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// Indicator of `[a, b)`.
    pub fn indicator(a: f64, b: f64) -> Self {
        assert!(0.0 <= a && a < b);
        if a == 0.0 {
            Self { starts: vec![0.0, b], values: vec![1.0, 0.0] }
        } else {
            Self { starts: vec![0.0, a, b], values: vec![0.0, 1.0, 0.0] }
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        let i = self.starts.partition_point(|&s| s <= u) - 1;
        self.values[i]
    }

    /// Left limit at `u`. Brownian grid increments carry the mass of
    /// `(u - dt, u]`, so they weight the factor by its value just before `u`.
    pub fn eval_left(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.values[0];
        }
        let i = self.starts.partition_point(|&s| s < u).max(1) - 1;
        self.values[i]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.starts
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise product, on the merged breakpoint set.
    pub fn mul(&self, other: &StepFunction) -> StepFunction {
        let mut starts: Vec<f64> = self.starts.iter().chain(other.starts.iter()).copied().collect();
        starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        starts.dedup();
        let values = starts.iter().map(|&s| self.eval(s) * other.eval(s)).collect();
        StepFunction { starts, values }
    }

    /// Pointwise sum, on the merged breakpoint set.
    pub fn add(&self, other: &StepFunction) -> StepFunction {
        let mut starts: Vec<f64> = self.starts.iter().chain(other.starts.iter()).copied().collect();
        starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        starts.dedup();
        let values = starts.iter().map(|&s| self.eval(s) + other.eval(s)).collect();
        StepFunction { starts, values }
    }

    pub fn scale(&self, c: f64) -> StepFunction {
        StepFunction { starts: self.starts.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }
}

/// An elementary tensor `F_0 (x) F_1 (x) ... (x) F_n`: a scalar initial
/// factor (the initial sigma-field of a Levy filtration is trivial) and `n`
/// bounded step factors in time.
#[derive(Debug, Clone)]
pub struct ElementaryTensor {
    pub f0: f64,
    pub factors: Vec<StepFunction>,
}

impl ElementaryTensor {
    pub fn new(f0: f64, factors: Vec<StepFunction>) -> Self {
        Self { f0, factors }
    }

    /// `F_0 = 1` and `n` constant-one factors.
    pub fn flat(n: usize) -> Self {
        Self { f0: 1.0, factors: vec![StepFunction::one(); n] }
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    /// All breakpoints of all factors, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.factors.iter().flat_map(|f| f.breakpoints().iter().copied()).collect();
        b.sort_by(|a, c| a.partial_cmp(c).unwrap());
        b.dedup();
        b
    }

    /// Slot-wise product `(F_0 G_0) (x) (F_1 G_1) (x) ...`, the tensor whose
    /// simplex integral gives mixed second moments.
    pub fn hadamard(&self, other: &ElementaryTensor) -> Result<ElementaryTensor> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch(self.order(), other.order()));
        }
        Ok(ElementaryTensor {
            f0: self.f0 * other.f0,
            factors: self.factors.iter().zip(&other.factors).map(|(a, b)| a.mul(b)).collect(),
        })
    }

    /// Reorder the factors by a permutation `perm` of `0..n`
    /// (slot `k` receives the old factor `perm[k]`).
    pub fn permuted(&self, perm: &[usize]) -> ElementaryTensor {
        assert_eq!(perm.len(), self.order());
        ElementaryTensor {
            f0: self.f0,
            factors: perm.iter().map(|&i| self.factors[i].clone()).collect(),
        }
    }
}

/// Which martingales to integrate against and with which tensor: indices
/// `(alpha_1, ..., alpha_n)` into a family, plus an elementary tensor of
/// matching order.
#[derive(Debug, Clone)]
pub struct IteratedSpec {
    pub indices: Vec<usize>,
    pub tensor: ElementaryTensor,
}

impl IteratedSpec {
    pub fn new(indices: Vec<usize>, tensor: ElementaryTensor) -> Result<Self> {
        if indices.len() != tensor.order() {
            return Err(Error::OrderMismatch(indices.len(), tensor.order()));
        }
        Ok(Self { indices, tensor })
    }

    pub fn order(&self) -> usize {
        self.indices.len()
    }

    /// Parse the plain-text spec format:
    ///
    /// ```text
    /// indices = 0 1 0          # family indices, one per slot
    /// f0 = 1.0                 # optional scalar initial factor
    /// factor = 0:1.0 0.5:0.0   # start:value pairs, one line per slot
    /// factor = 0:1.0
    /// factor = 0:0.0 0.25:2.0 0.75:0.0
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut indices: Option<Vec<usize>> = None;
        let mut f0 = 1.0;
        let mut factors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::ConfigInvalid(format!("spec line {}: expected key = value", lineno + 1)))?;
            match key.trim() {
                "indices" => {
                    let parsed: std::result::Result<Vec<usize>, _> =
                        value.split_whitespace().map(|s| s.parse()).collect();
                    indices = Some(parsed.map_err(|_| {
                        Error::ConfigInvalid(format!("spec line {}: bad index list", lineno + 1))
                    })?);
                }
                "f0" => {
                    f0 = value.trim().parse().map_err(|_| {
                        Error::ConfigInvalid(format!("spec line {}: bad f0", lineno + 1))
                    })?;
                }
                "factor" => {
                    let mut starts = Vec::new();
                    let mut values = Vec::new();
                    for item in value.split_whitespace() {
                        let (s, v) = item.split_once(':').ok_or_else(|| {
                            Error::ConfigInvalid(format!("spec line {}: expected start:value", lineno + 1))
                        })?;
                        starts.push(s.parse().map_err(|_| {
                            Error::ConfigInvalid(format!("spec line {}: bad start", lineno + 1))
                        })?);
                        values.push(v.parse().map_err(|_| {
                            Error::ConfigInvalid(format!("spec line {}: bad value", lineno + 1))
                        })?);
                    }
                    factors.push(StepFunction::new(starts, values)?);
                }
                other => {
                    return Err(Error::ConfigInvalid(format!(
                        "spec line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        let indices = indices.ok_or_else(|| Error::ConfigInvalid("spec needs an indices line".into()))?;
        Self::new(indices, ElementaryTensor::new(f0, factors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_eval_and_product() {
        let f = StepFunction::indicator(0.25, 0.75);
        assert_eq!(f.eval(0.1), 0.0);
        assert_eq!(f.eval(0.25), 1.0);
        assert_eq!(f.eval(0.74), 1.0);
        assert_eq!(f.eval(0.75), 0.0);
        let g = StepFunction::indicator(0.5, 1.0);
        let fg = f.mul(&g);
        assert_eq!(fg.eval(0.4), 0.0);
        assert_eq!(fg.eval(0.6), 1.0);
        assert_eq!(fg.eval(0.8), 0.0);
    }

    #[test]
    fn spec_rejects_order_mismatch() {
        let t = ElementaryTensor::flat(2);
        assert!(matches!(IteratedSpec::new(vec![0], t), Err(Error::OrderMismatch(1, 2))));
    }

    #[test]
    fn spec_file_round_trip() {
        let text = "\
# order-2 spec
indices = 0 1
f0 = 2.0
factor = 0:1.0 0.5:0.0
factor = 0:0.0 0.25:3.0 0.75:0.0
";
        let spec = IteratedSpec::parse(text).unwrap();
        assert_eq!(spec.indices, vec![0, 1]);
        assert_eq!(spec.tensor.f0, 2.0);
        assert_eq!(spec.tensor.factors[0].eval(0.4), 1.0);
        assert_eq!(spec.tensor.factors[0].eval(0.6), 0.0);
        assert_eq!(spec.tensor.factors[1].eval(0.5), 3.0);
        assert!(IteratedSpec::parse("f0 = 1\n").is_err());
        assert!(IteratedSpec::parse("indices = 0\nwhat = 1\n").is_err());
    }
}
