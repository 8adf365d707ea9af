//! Piecewise polynomials in one time variable, the exact carrier for the
//! deterministic simplex integrals: step factors integrate to piecewise
//! linear functions and each further level raises the degree by one.

use crate::stepfn::StepFunction;

/// A continuous piecewise polynomial on `[0, t_end]` with local coordinates:
/// on `[breaks[i], breaks[i+1]]` the value is `poly(coefs[i], u - breaks[i])`.
#[derive(Debug, Clone)]
pub struct PiecewisePoly {
    breaks: Vec<f64>,
    coefs: Vec<Vec<f64>>,
}

impl PiecewisePoly {
    /// The constant function `c` on `[0, t_end]`.
    pub fn constant(c: f64, t_end: f64) -> Self {
        Self { breaks: vec![0.0, t_end], coefs: vec![vec![c]] }
    }

    pub fn eval(&self, u: f64) -> f64 {
        let i = segment_of(&self.breaks, u);
        horner(&self.coefs[i], u - self.breaks[i])
    }

    fn end(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    /// Refine the breakpoints to include `cuts`.
    fn with_cuts(&self, cuts: &[f64]) -> PiecewisePoly {
        let mut breaks = self.breaks.clone();
        for &c in cuts {
            if c > 0.0 && c < self.end() {
                breaks.push(c);
            }
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let mut coefs = Vec::with_capacity(breaks.len() - 1);
        for w in breaks.windows(2) {
            let i = segment_of(&self.breaks, w[0]);
            coefs.push(shift_poly(&self.coefs[i], w[0] - self.breaks[i]));
        }
        PiecewisePoly { breaks, coefs }
    }

    /// `u -> int_0^u step(s) * rate * self(s) ds`, exact. The result picks up
    /// the step's breakpoints and one extra polynomial degree.
    pub fn integrate_weighted(&self, step: &StepFunction, rate: f64) -> PiecewisePoly {
        let refined = self.with_cuts(step.breakpoints());
        let mut coefs = Vec::with_capacity(refined.coefs.len());
        let mut acc = 0.0;
        for (i, w) in refined.breaks.windows(2).enumerate() {
            let sval = step.eval(w[0]) * rate;
            let mut anti = antiderivative(&refined.coefs[i]);
            for c in &mut anti {
                *c *= sval;
            }
            anti[0] = acc;
            acc = horner(&anti, w[1] - w[0]);
            coefs.push(anti);
        }
        PiecewisePoly { breaks: refined.breaks, coefs }
    }
}

fn segment_of(breaks: &[f64], u: f64) -> usize {
    if u >= *breaks.last().unwrap() {
        return breaks.len() - 2;
    }
    breaks.partition_point(|&b| b <= u).max(1) - 1
}

fn horner(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn antiderivative(coefs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(coefs.len() + 1);
    out.push(0.0);
    for (k, c) in coefs.iter().enumerate() {
        out.push(c / (k as f64 + 1.0));
    }
    out
}

/// Re-center `p(x)` as a polynomial in `(x - dx)`.
fn shift_poly(coefs: &[f64], dx: f64) -> Vec<f64> {
    // Taylor expansion at dx
    let n = coefs.len();
    let mut out = vec![0.0; n];
    let mut deriv: Vec<f64> = coefs.to_vec();
    let mut factorial = 1.0;
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            factorial *= k as f64;
        }
        *slot = horner(&deriv, dx) / factorial;
        // differentiate
        let mut next = Vec::with_capacity(deriv.len().saturating_sub(1));
        for (j, c) in deriv.iter().enumerate().skip(1) {
            next.push(c * j as f64);
        }
        deriv = next;
        if deriv.is_empty() {
            break;
        }
    }
    out
}

/// Exact value of the iterated simplex integral
/// `int_0^t int_0^{t_n} ... int_0^{t_2} prod_k F_k(t_k) c_k dt_1 ... dt_n`
/// for step factors `F_k` and constant bracket rates `c_k`
/// (slot 1 is the innermost integration variable).
pub fn simplex_integral(factors: &[StepFunction], rates: &[f64], t: f64) -> f64 {
    assert_eq!(factors.len(), rates.len());
    if t <= 0.0 {
        return if factors.is_empty() { 1.0 } else { 0.0 };
    }
    if factors.is_empty() {
        return 1.0;
    }
    let mut level = PiecewisePoly::constant(1.0, t);
    for (f, &c) in factors.iter().zip(rates) {
        level = level.integrate_weighted(f, c);
    }
    level.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simplex_volumes() {
        let f = vec![StepFunction::one(); 2];
        assert_relative_eq!(simplex_integral(&f, &[1.0, 1.0], 1.0), 0.5, max_relative = 1e-14);
        let f3 = vec![StepFunction::one(); 3];
        assert_relative_eq!(simplex_integral(&f3, &[1.0; 3], 1.0), 1.0 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(simplex_integral(&f3, &[1.0; 3], 2.0), 8.0 / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn zero_factor_kills_integral() {
        let f = vec![StepFunction::one(), StepFunction::constant(0.0), StepFunction::one()];
        assert_eq!(simplex_integral(&f, &[1.0; 3], 1.0), 0.0);
    }

    #[test]
    fn step_factor_level_one() {
        // int_0^1 2 * 1_{[0, 1/2)}(s) ds = 1
        let f = vec![StepFunction::indicator(0.0, 0.5)];
        assert_relative_eq!(simplex_integral(&f, &[2.0], 1.0), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn shifted_polynomials_evaluate_consistently() {
        let p = PiecewisePoly { breaks: vec![0.0, 2.0], coefs: vec![vec![1.0, -2.0, 0.5]] };
        let q = p.with_cuts(&[0.7, 1.3]);
        for u in [0.0, 0.45, 0.7, 1.0, 1.3, 1.9, 2.0] {
            assert_relative_eq!(p.eval(u), q.eval(u), epsilon = 1e-13);
        }
    }
}
