//! Brute-force reference for finite-activity pure-jump models: iterated
//! integrals evaluated event-by-event as piecewise polynomials in time, and
//! simplex moments evaluated in exact rational arithmetic. Everything here
//! is an independent route used as ground truth by the other modules' tests.

use num::bigint::BigInt;
use num::rational::Ratio;
use num::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{MuMeasure, TestFunction};
use crate::stepfn::{ElementaryTensor, IteratedSpec};

/// Piecewise polynomial in time with breakpoints at the event times; the
/// value on `[breaks[i], breaks[i+1])` is a polynomial in `t - breaks[i]`
/// evaluated by Horner's rule. Orders are capped low, so double precision
/// coefficients are adequate.
#[derive(Debug, Clone)]
pub struct PiecewisePoly {
    breaks: Vec<f64>,
    coefs: Vec<Vec<f64>>,
}

impl PiecewisePoly {
    /// Right-continuous value at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let i = if t >= *self.breaks.last().unwrap() {
            self.coefs.len() - 1
        } else {
            self.breaks.partition_point(|&b| b <= t).max(1) - 1
        };
        horner(&self.coefs[i], t - self.breaks[i])
    }

    /// Left limit at `t` (value of the previous segment at its end).
    pub fn eval_left(&self, t: f64) -> f64 {
        if t <= self.breaks[0] {
            return 0.0;
        }
        let i = self.breaks.partition_point(|&b| b < t).max(1) - 1;
        horner(&self.coefs[i], t - self.breaks[i])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }
}

fn horner(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Maximum supported order of the exact oracle.
pub const MAX_ORACLE_ORDER: usize = 5;

/// Exact event-driven evaluation of an iterated integral on a pure-jump
/// path: at each jump the level gains `J_{m-1}(s-) F_m(s) f~(x)`, and
/// between events the compensator drift `J_{m-1}(u) F_m(u) (-nu(f~)) du`
/// integrates in closed form.
pub fn exact_iterate(
    spec: &IteratedSpec,
    jumps: &[(f64, f64)],
    family: &[TestFunction],
    mu: &MuMeasure,
    horizon: f64,
) -> Result<PiecewisePoly> {
    if mu.sigma2 != 0.0 {
        return Err(Error::GaussianPartPresent(mu.sigma2));
    }
    let n = spec.order();
    if n > MAX_ORACLE_ORDER {
        return Err(Error::UnsupportedOrder(n));
    }
    let mut breaks: Vec<f64> = vec![0.0, horizon];
    breaks.extend(jumps.iter().map(|&(s, _)| s));
    breaks.extend(spec.tensor.breakpoints().into_iter().filter(|&b| b > 0.0 && b < horizon));
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let n_segs = breaks.len() - 1;

    let mut level = PiecewisePoly { breaks: breaks.clone(), coefs: vec![vec![spec.tensor.f0]; n_segs] };
    for m in 1..=n {
        let f = &family[spec.indices[m - 1]];
        let factor = &spec.tensor.factors[m - 1];
        let rate = -mu.nu.integral_jump(&|x| f.jump_at(x));
        let mut coefs: Vec<Vec<f64>> = Vec::with_capacity(n_segs);
        let mut value = 0.0;
        for (i, w) in breaks.windows(2).enumerate() {
            // jump at the segment start (breaks[0] = 0 carries no event)
            if let Some(&(_, x)) = jumps.iter().find(|&&(s, _)| s == w[0]) {
                let left = level_left(&level, i, w[0]);
                value += left * factor.eval(w[0]) * f.jump_at(x);
            }
            let mut seg = vec![0.0; level.coefs[i].len() + 1];
            seg[0] = value;
            let c = factor.eval(w[0]) * rate;
            for (j, &p) in level.coefs[i].iter().enumerate() {
                seg[j + 1] = c * p / (j as f64 + 1.0);
            }
            value = horner(&seg, w[1] - w[0]);
            coefs.push(seg);
        }
        level = PiecewisePoly { breaks: breaks.clone(), coefs };
    }
    Ok(level)
}

fn level_left(level: &PiecewisePoly, seg: usize, t: f64) -> f64 {
    if seg == 0 {
        0.0
    } else {
        horner(&level.coefs[seg - 1], t - level.breaks[seg - 1])
    }
}

type Rational = Ratio<BigInt>;

fn to_rational(x: f64) -> Rational {
    Ratio::from_float(x).expect("finite float")
}

/// Exact rational-arithmetic evaluation of the diagonal simplex moment
/// `f0^2 int_0^t ... prod_k F_k(t_k)^2 c_k dt_1 ... dt_n` for a step tensor;
/// the reference used against the floating-point simplex route.
pub fn exact_second_moment(tensor: &ElementaryTensor, rates: &[f64], t: f64) -> f64 {
    assert_eq!(tensor.order(), rates.len());
    if t <= 0.0 {
        return if tensor.order() == 0 { tensor.f0 * tensor.f0 } else { 0.0 };
    }
    let t_r = to_rational(t);
    let mut cuts: Vec<Rational> = vec![Rational::zero(), t_r.clone()];
    for f in &tensor.factors {
        for &b in f.breakpoints() {
            let b_r = to_rational(b);
            if b_r > Rational::zero() && b_r < t_r {
                cuts.push(b_r);
            }
        }
    }
    cuts.sort();
    cuts.dedup();

    // polynomials in the global time variable, one per segment
    let mut level: Vec<Vec<Rational>> = vec![vec![Rational::one()]; cuts.len() - 1];
    for (f, &c) in tensor.factors.iter().zip(rates) {
        let c_r = to_rational(c);
        let mut next: Vec<Vec<Rational>> = Vec::with_capacity(level.len());
        let mut acc = Rational::zero();
        for (i, w) in cuts.windows(2).enumerate() {
            let fv = to_rational(f.eval(w[0].to_f64().unwrap()));
            let weight = fv.clone() * fv * c_r.clone();
            // antiderivative of weight * level[i]
            let mut anti: Vec<Rational> = vec![Rational::zero()];
            for (j, p) in level[i].iter().enumerate() {
                anti.push(p.clone() * weight.clone() / Rational::from_integer(BigInt::from(j as i64 + 1)));
            }
            // fix the constant so the running integral is continuous
            let at_start = eval_rational(&anti, &w[0]);
            anti[0] = acc.clone() - at_start;
            acc = eval_rational(&anti, &w[1]);
            next.push(anti);
        }
        level = next;
    }
    let result = eval_rational(level.last().unwrap(), &t_r);
    rational_to_f64(&(result * to_rational(tensor.f0) * to_rational(tensor.f0)))
}

fn eval_rational(coefs: &[Rational], x: &Rational) -> Rational {
    let mut acc = Rational::zero();
    for c in coefs.iter().rev() {
        acc = acc * x.clone() + c.clone();
    }
    acc
}

fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // fall back to a scaled division for extreme numerators
        let s = r.numer().abs().bits().max(r.denom().abs().bits());
        let shift = s.saturating_sub(64) as u32;
        let num = (r.numer() >> shift).to_f64().unwrap();
        let den = (r.denom() >> shift).to_f64().unwrap();
        num / den
    })
}

/// Dimension of L^2(mu) for an atomic jump measure: one direction per atom
/// plus one for the Gaussian component.
pub fn dimension_audit(mu: &MuMeasure) -> Option<usize> {
    mu.l2_dimension()
}

// ---------------------------------------------------------------------------
// Golden fixtures
// ---------------------------------------------------------------------------

/// A frozen pure-jump scenario and the oracle's terminal value.
#[derive(Debug, Clone, Serialize)]
pub struct GoldenRecord {
    pub id: String,
    pub atoms: Vec<(f64, f64)>,
    pub horizon: f64,
    pub jumps: Vec<(f64, f64)>,
    pub indices: Vec<usize>,
    pub factor_breaks: Vec<Vec<f64>>,
    pub factor_values: Vec<Vec<f64>>,
    pub terminal: f64,
}

/// Evaluate the frozen scenario set with `exact_iterate` and serialize the
/// terminal values as canonical JSON, usable as a regression fixture.
pub fn golden_json() -> Result<String> {
    use crate::measure::JumpMeasure;
    use crate::stepfn::StepFunction;

    type Scenario = (&'static str, Vec<(f64, f64)>, Vec<(f64, f64)>, Vec<usize>, Vec<StepFunction>);
    let mut records = Vec::new();
    let scenarios: Vec<Scenario> = vec![
        (
            "drift-only-order-1",
            vec![(1.0, 2.0)],
            vec![],
            vec![0],
            vec![StepFunction::one()],
        ),
        (
            "single-jump-order-1",
            vec![(1.0, 1.0)],
            vec![(0.4, 1.0)],
            vec![0],
            vec![StepFunction::one()],
        ),
        (
            "two-jumps-order-2",
            vec![(1.0, 1.0)],
            vec![(0.25, 1.0), (0.75, 1.0)],
            vec![0, 0],
            vec![StepFunction::one(), StepFunction::one()],
        ),
        (
            "mixed-atoms-step-order-2",
            vec![(1.0, 0.5), (-2.0, 0.25)],
            vec![(0.2, 1.0), (0.5, -2.0), (0.9, 1.0)],
            vec![0, 1],
            vec![StepFunction::indicator(0.0, 0.6), StepFunction::one()],
        ),
        (
            "three-jumps-order-3",
            vec![(1.0, 1.5)],
            vec![(0.1, 1.0), (0.5, 1.0), (0.8, 1.0)],
            vec![0, 0, 0],
            vec![StepFunction::one(), StepFunction::one(), StepFunction::one()],
        ),
    ];
    for (id, atoms, jumps, indices, factors) in scenarios {
        let nu = JumpMeasure::atomic(atoms.clone())?;
        let mu = MuMeasure::new(0.0, nu)?;
        let family = vec![
            TestFunction::new(0.0, |x| x, "x", &mu),
            TestFunction::new(0.0, |x| x * x, "x^2", &mu),
        ];
        let tensor = ElementaryTensor::new(1.0, factors.clone());
        let spec = IteratedSpec::new(indices.clone(), tensor)?;
        let poly = exact_iterate(&spec, &jumps, &family, &mu, 1.0)?;
        records.push(GoldenRecord {
            id: id.to_string(),
            atoms,
            horizon: 1.0,
            jumps,
            indices,
            factor_breaks: factors.iter().map(|f| f.breakpoints().to_vec()).collect(),
            factor_values: factors.iter().map(|f| f.breakpoints().iter().map(|&b| f.eval(b)).collect()).collect(),
            terminal: poly.eval(1.0),
        });
    }
    Ok(serde_json::to_string_pretty(&records).expect("serializable"))
}
