//! Concrete function systems in L^2(mu): power monomials (the generators of
//! power-jump martingales), Hermite-weighted densities, Haar-weighted
//! wavelets and multiplication-stable indicator systems.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::measure::{mu_inner, JumpMeasure, MuMeasure, OrthonormalSystem, TestFunction};

/// Window parameters for the exponential-tail certificate required by the
/// power monomial system: `x -> e^{(lambda/2)|x|} 1_{|x|>eps}` must be in
/// L^2(nu).
#[derive(Debug, Clone, Copy)]
pub struct TailParams {
    pub eps: f64,
    pub lambda: f64,
}

impl Default for TailParams {
    fn default() -> Self {
        Self { eps: 1.0, lambda: 1.0 }
    }
}

/// The power system `h_1 = 1_{0} + x`, `h_n = x^n` for `n >= 2`, generating
/// the family of power-jump (Teugels) martingales.
///
/// Requires the exponential-tail condition on `nu`; for atomic measures it
/// holds trivially, for densities it is certified by a doubling-window
/// convergence probe of the quadrature.
pub fn teugels_system(n_max: usize, mu: &MuMeasure) -> Result<Vec<TestFunction>> {
    teugels_system_with(n_max, mu, TailParams::default())
}

pub fn teugels_system_with(n_max: usize, mu: &MuMeasure, tail: TailParams) -> Result<Vec<TestFunction>> {
    assert!(n_max >= 1, "n_max must be positive");
    let probe = move |x: f64| {
        if x.abs() > tail.eps {
            ((tail.lambda / 2.0) * x.abs()).exp().powi(2)
        } else {
            0.0
        }
    };
    let mass = mu.nu.integral_jump(&probe);
    if !mass.is_finite() || !mu.nu.tail_converges(&probe) {
        return Err(Error::TailConditionFailed(format!(
            "e^{{(lambda/2)|x|}} with lambda = {}, eps = {} is not square integrable against nu",
            tail.lambda, tail.eps
        )));
    }
    let mut out = Vec::with_capacity(n_max);
    out.push(TestFunction::new(1.0, |x| x, "1{0}+x", mu));
    for n in 2..=n_max {
        let p = n as i32;
        let f = TestFunction::new(0.0, move |x: f64| x.powi(p), format!("x^{n}"), mu);
        if !f.flags().in_l1_nu || !f.flags().in_l2_nu {
            return Err(Error::TailConditionFailed(format!(
                "x^{n} failed L1(nu) and L2(nu) certification"
            )));
        }
        out.push(f);
    }
    Ok(out)
}

/// Normalized Hermite polynomial `H~_n` with respect to the weight
/// `e^{-x^2}`: `int H~_n H~_m e^{-x^2} dx = delta_nm`.
pub fn hermite_normalized(n: usize, x: f64) -> f64 {
    // physicists' recurrence, then divide by sqrt(2^n n! sqrt(pi))
    let mut h0 = 1.0;
    let mut h1 = 2.0 * x;
    let h = if n == 0 {
        h0
    } else if n == 1 {
        h1
    } else {
        let mut h = 0.0;
        for k in 2..=n {
            h = 2.0 * x * h1 - 2.0 * (k as f64 - 1.0) * h0;
            h0 = h1;
            h1 = h;
        }
        h
    };
    let mut norm2 = PI.sqrt();
    for k in 1..=n {
        norm2 *= 2.0 * k as f64;
    }
    h / norm2.sqrt()
}

/// Hermite-weighted system for a density measure `d nu = h(x) dx`:
/// `P_n = g(0) H~_n(0) 1_{0} + 1_{R\0} g H~_n` with `g = h^{-1/2} e^{-x^2/2}`.
///
/// The jump parts are orthonormal in L^2(nu) by construction. With a
/// Gaussian component the at-zero values add `sigma^2 g(0)^2 H~_n(0) H~_m(0)`
/// cross terms, so exact mu-orthogonality holds when sigma^2 = 0
/// (or between members of opposite parity); the residual is recorded.
pub fn hermite_weighted_system(
    n_max: usize,
    mu: &MuMeasure,
    h_at_zero: f64,
) -> Result<OrthonormalSystem> {
    let density = match &mu.nu {
        JumpMeasure::Density { density, .. } => density.clone(),
        JumpMeasure::Atomic { .. } => return Err(Error::DensityRequired),
    };
    let g_at_zero = if h_at_zero > 0.0 && h_at_zero.is_finite() { h_at_zero.powf(-0.5) } else { 0.0 };
    let mut members = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let d = density.clone();
        // log-space weight: h^{-1/2} e^{-x^2/2} overflows as separate
        // exponentials far in the tail even though the product is tiny
        let f = TestFunction::new(
            g_at_zero * hermite_normalized(n, 0.0),
            move |x: f64| {
                let ln_h = d(x).ln();
                if !ln_h.is_finite() {
                    return 0.0;
                }
                (-0.5 * ln_h - x * x / 2.0).exp() * hermite_normalized(n, x)
            },
            format!("P{n}"),
            mu,
        );
        members.push(f);
    }
    let mut residual = 0.0_f64;
    for i in 0..members.len() {
        for j in 0..=i {
            let target = if i == j { 1.0 } else { 0.0 };
            let v = mu_inner(&members[i], &members[j], mu)?;
            residual = residual.max((v - target).abs());
        }
    }
    Ok(OrthonormalSystem::from_parts(members, residual))
}

/// A function that is constant on finitely many intervals of the real line
/// and zero outside. Used for exact (quadrature-free) inner products of the
/// Haar and indicator systems.
#[derive(Debug, Clone)]
struct PiecewiseConstant {
    /// breakpoints b_0 < ... < b_k; value v_i on [b_i, b_{i+1})
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    fn eval(&self, x: f64) -> f64 {
        if self.breaks.is_empty() || x < self.breaks[0] || x >= *self.breaks.last().unwrap() {
            return 0.0;
        }
        let i = self.breaks.partition_point(|&b| b <= x) - 1;
        self.values[i]
    }

    /// `int f g dx` over the line, exact.
    fn lebesgue_product_integral(&self, other: &PiecewiseConstant) -> f64 {
        let mut cuts: Vec<f64> = self.breaks.iter().chain(other.breaks.iter()).copied().collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            acc += (w[1] - w[0]) * self.eval(mid) * other.eval(mid);
        }
        acc
    }
}

/// Haar wavelet `psi_{jk}(x) = 2^{j/2} psi(2^j x - k)` with the mother
/// `psi = 1 on [0,1/2), -1 on [1/2,1), 0 otherwise`, as a piecewise constant.
fn haar_piece(j: i32, k: i32) -> PiecewiseConstant {
    let scale = 2f64.powi(j);
    let amp = 2f64.powi(j).sqrt();
    let a = k as f64 / scale;
    let m = (k as f64 + 0.5) / scale;
    let b = (k as f64 + 1.0) / scale;
    PiecewiseConstant { breaks: vec![a, m, b], values: vec![amp, -amp] }
}

/// Value of the Haar wavelet `psi_{jk}` at a point.
pub fn haar_wavelet(j: i32, k: i32, x: f64) -> f64 {
    haar_piece(j, k).eval(x)
}

/// Haar-weighted system for a density measure: members
/// `h^{-1/2}(0) psi_{jk}(0) 1_{0} + 1_{R\0} h^{-1/2} psi_{jk}` over the
/// index window `j in [j_min, j_max], k in [k_min, k_max]`.
///
/// Jump-part inner products reduce to Lebesgue integrals of `psi_{j k}`
/// products (the weights cancel), which are computed exactly piecewise;
/// the recorded residual also carries the at-zero cross terms.
pub fn haar_system(
    j_min: i32,
    j_max: i32,
    k_min: i32,
    k_max: i32,
    mu: &MuMeasure,
    h_at_zero: f64,
) -> Result<OrthonormalSystem> {
    let density = match &mu.nu {
        JumpMeasure::Density { density, .. } => density.clone(),
        JumpMeasure::Atomic { .. } => return Err(Error::DensityRequired),
    };
    let w0 = if h_at_zero > 0.0 { h_at_zero.powf(-0.5) } else { 0.0 };
    let mut members = Vec::new();
    let mut pieces = Vec::new();
    for j in j_min..=j_max {
        for k in k_min..=k_max {
            let piece = haar_piece(j, k);
            let d = density.clone();
            let f = TestFunction::new(
                w0 * piece.eval(0.0),
                move |x: f64| {
                    let psi = haar_wavelet(j, k, x);
                    if psi == 0.0 {
                        return 0.0;
                    }
                    let ln_h = d(x).ln();
                    if !ln_h.is_finite() {
                        return 0.0;
                    }
                    (-0.5 * ln_h).exp() * psi
                },
                format!("haar[{j},{k}]"),
                mu,
            );
            members.push(f);
            pieces.push(piece);
        }
    }
    let mut residual = 0.0_f64;
    for i in 0..members.len() {
        for l in 0..=i {
            let target = if i == l { 1.0 } else { 0.0 };
            let v = mu.sigma2 * members[i].at_zero() * members[l].at_zero()
                + pieces[i].lebesgue_product_integral(&pieces[l]);
            residual = residual.max((v - target).abs());
        }
    }
    Ok(OrthonormalSystem::from_parts(members, residual))
}

/// A half-open interval `(a, b]` bounded away from the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x <= self.b
    }

    fn intersect(&self, other: &Interval) -> Option<Interval> {
        let a = self.a.max(other.a);
        let b = self.b.min(other.b);
        if a < b {
            Some(Interval { a, b })
        } else {
            None
        }
    }
}

/// A multiplication-stable indicator system built from a partition of
/// `R \ {0}` into intervals `(a_i, b_i]` with optional at-zero weights:
/// members `c_i 1_{0} + 1_{(a_i, b_i]}`, the bare indicators `1_{(a_i, b_i]}`
/// and the zero function. Closure under `f, g -> f g 1_{R\0}` is verified
/// structurally at construction.
pub struct IndicatorSystem {
    members: Vec<TestFunction>,
    /// (at_zero weight, interval) per member; `None` interval encodes zero jump part
    shape: Vec<(f64, Option<Interval>)>,
}

impl IndicatorSystem {
    pub fn new(cells: &[(Interval, f64)], mu: &MuMeasure) -> Result<Self> {
        for (iv, _) in cells {
            if iv.a.is_nan() || iv.b.is_nan() || iv.a >= iv.b {
                return Err(Error::ConfigInvalid(format!("empty interval ({}, {}]", iv.a, iv.b)));
            }
            if iv.a < 0.0 && iv.b > 0.0 || iv.a == 0.0 || iv.b == 0.0 {
                return Err(Error::IntervalTouchesZero(iv.a, iv.b));
            }
        }
        for (i, (a, _)) in cells.iter().enumerate() {
            for (b, _) in cells.iter().skip(i + 1) {
                if a.intersect(b).is_some() {
                    return Err(Error::ConfigInvalid(format!(
                        "intervals ({}, {}] and ({}, {}] overlap",
                        a.a, a.b, b.a, b.b
                    )));
                }
            }
        }
        let mut members = Vec::new();
        let mut shape = Vec::new();
        for &(iv, c) in cells {
            if c != 0.0 {
                members.push(indicator_fn(c, iv, mu));
                shape.push((c, Some(iv)));
            }
            members.push(indicator_fn(0.0, iv, mu));
            shape.push((0.0, Some(iv)));
        }
        members.push(TestFunction::zero());
        shape.push((0.0, None));
        let sys = Self { members, shape };
        sys.verify_closure()?;
        Ok(sys)
    }

    pub fn members(&self) -> &[TestFunction] {
        &self.members
    }

    /// Index of the member equal to `f_i f_j 1_{R\0}`, which always exists.
    pub fn product_index(&self, i: usize, j: usize) -> usize {
        let (_, iv_i) = self.shape[i];
        let (_, iv_j) = self.shape[j];
        let prod = match (iv_i, iv_j) {
            (Some(a), Some(b)) => a.intersect(&b),
            _ => None,
        };
        self.lookup(0.0, prod).expect("closure verified at construction")
    }

    fn lookup(&self, c: f64, iv: Option<Interval>) -> Option<usize> {
        self.shape.iter().position(|&(cc, ii)| cc == c && ii == iv)
    }

    fn verify_closure(&self) -> Result<()> {
        for i in 0..self.shape.len() {
            for j in 0..self.shape.len() {
                let (_, iv_i) = self.shape[i];
                let (_, iv_j) = self.shape[j];
                let prod = match (iv_i, iv_j) {
                    (Some(a), Some(b)) => a.intersect(&b),
                    _ => None,
                };
                // disjoint cells multiply to the zero member, identical cells to
                // the bare indicator; anything else breaks the partition premise
                if self.lookup(0.0, prod).is_none() {
                    return Err(Error::FamilyNotClosed(vec![i, j]));
                }
            }
        }
        Ok(())
    }
}

fn indicator_fn(c: f64, iv: Interval, mu: &MuMeasure) -> TestFunction {
    let label = if c == 0.0 {
        format!("1({},{}]", iv.a, iv.b)
    } else {
        format!("{c}*1{{0}}+1({},{}]", iv.a, iv.b)
    };
    TestFunction::new(c, move |x| if iv.contains(x) { 1.0 } else { 0.0 }, label, mu)
}

/// Convenience: the indicator system over a partition with all at-zero
/// weights equal to `c`.
pub fn indicator_system(partition: &[(f64, f64)], c: f64, mu: &MuMeasure) -> Result<IndicatorSystem> {
    let cells: Vec<(Interval, f64)> = partition.iter().map(|&(a, b)| (Interval { a, b }, c)).collect();
    IndicatorSystem::new(&cells, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{gram_schmidt, mu_integral, mu_norm2, QuadratureSpec, DROP_TOL};
    use approx::assert_relative_eq;

    #[test]
    fn teugels_norms_on_atoms() {
        let mu = MuMeasure::new(1.0, JumpMeasure::atomic(vec![(1.0, 2.0)]).unwrap()).unwrap();
        let sys = teugels_system(2, &mu).unwrap();
        assert_eq!(sys.len(), 2);
        assert_relative_eq!(mu_norm2(&sys[0], &mu).unwrap(), 3.0, max_relative = 1e-14);
        assert_relative_eq!(mu_norm2(&sys[1], &mu).unwrap(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn teugels_single_member() {
        let mu = MuMeasure::new(1.0, JumpMeasure::atomic(vec![(1.0, 2.0)]).unwrap()).unwrap();
        assert_eq!(teugels_system(1, &mu).unwrap().len(), 1);
    }

    #[test]
    fn teugels_rejects_cauchy_tails() {
        let spec = QuadratureSpec { x_max: 20.0, panels_per_side: 30, nodes_per_panel: 16 };
        let nu = JumpMeasure::density(|x: f64| x.powi(-2), spec, 0.05).unwrap();
        let mu = MuMeasure::new(0.0, nu).unwrap();
        assert!(matches!(teugels_system(2, &mu), Err(Error::TailConditionFailed(_))));
    }

    #[test]
    fn hermite_weighted_cauchy_is_orthonormal() {
        let spec = QuadratureSpec { x_max: 14.0, panels_per_side: 48, nodes_per_panel: 32 };
        let nu = JumpMeasure::density(|x: f64| x.powi(-2), spec, 1e-10).unwrap();
        let mu = MuMeasure::new(0.0, nu).unwrap();
        // h(0) diverges for the Cauchy density; sigma2 = 0 makes the origin null
        let sys = hermite_weighted_system(4, &mu, f64::INFINITY).unwrap();
        assert_eq!(sys.len(), 5);
        assert!(sys.gram_residual() <= 1e-8, "residual {}", sys.gram_residual());
        for m in sys.members() {
            assert_relative_eq!(mu_norm2(m, &mu).unwrap(), 1.0, max_relative = 1e-7);
        }
    }

    #[test]
    fn hermite_weighted_single_member_unit_norm() {
        let spec = QuadratureSpec { x_max: 14.0, panels_per_side: 48, nodes_per_panel: 32 };
        let nu = JumpMeasure::density(|x: f64| (-x * x / 2.0).exp(), spec, 1e-10).unwrap();
        let mu = MuMeasure::new(0.0, nu).unwrap();
        let sys = hermite_weighted_system(0, &mu, 1.0).unwrap();
        assert_eq!(sys.len(), 1);
        assert_relative_eq!(mu_norm2(&sys.members()[0], &mu).unwrap(), 1.0, max_relative = 1e-8);
    }

    #[test]
    fn hermite_weighted_requires_density() {
        let mu = MuMeasure::new(0.0, JumpMeasure::atomic(vec![(1.0, 1.0)]).unwrap()).unwrap();
        assert!(matches!(hermite_weighted_system(1, &mu, 1.0), Err(Error::DensityRequired)));
    }

    #[test]
    fn hermite_p0_p1_quadrature_orthogonal() {
        let spec = QuadratureSpec { x_max: 14.0, panels_per_side: 48, nodes_per_panel: 32 };
        let nu = JumpMeasure::density(|x: f64| (-x * x / 2.0).exp(), spec, 1e-9).unwrap();
        let mu = MuMeasure::new(1.0, nu).unwrap();
        let sys = hermite_weighted_system(1, &mu, 1.0).unwrap();
        let ip = mu_inner(&sys.members()[0], &sys.members()[1], &mu).unwrap();
        assert!(ip.abs() <= 1e-8, "ip = {ip}");
    }

    #[test]
    fn haar_mother_values() {
        assert_eq!(haar_wavelet(0, 0, 0.25), 1.0);
        assert_eq!(haar_wavelet(0, 0, 0.75), -1.0);
        assert_eq!(haar_wavelet(0, 0, 1.25), 0.0);
        assert_eq!(haar_wavelet(0, 0, -0.25), 0.0);
    }

    #[test]
    fn haar_system_orthonormal() {
        let spec = QuadratureSpec { x_max: 16.0, panels_per_side: 40, nodes_per_panel: 24 };
        let nu = JumpMeasure::density(|x: f64| (-x.abs()).exp(), spec, 1e-9).unwrap();
        let mu = MuMeasure::new(0.0, nu).unwrap();
        let sys = haar_system(0, 2, -2, 2, &mu, 1.0).unwrap();
        assert_eq!(sys.len(), 15);
        assert!(sys.gram_residual() <= 1e-8, "residual {}", sys.gram_residual());
    }

    #[test]
    fn haar_disjoint_supports_orthogonal() {
        let a = haar_piece(1, 0); // support [0, 1/2)
        let b = haar_piece(1, 1); // support [1/2, 1)
        assert_eq!(a.lebesgue_product_integral(&b), 0.0);
        assert_relative_eq!(a.lebesgue_product_integral(&a), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn indicator_closure_and_norm() {
        let nu = JumpMeasure::atomic(vec![(1.5, 2.0)]).unwrap();
        let mu = MuMeasure::new(0.0, nu).unwrap();
        let sys = indicator_system(&[(1.0, 2.0), (3.0, 4.0)], 1.0, &mu).unwrap();
        // f = 1{0} + 1_(1,2], g = 1_(1,2]: product off zero is 1_(1,2]
        let i_f = 0; // c=1 member of first cell
        let i_g = 1; // bare indicator of first cell
        let k = sys.product_index(i_f, i_g);
        let prod = &sys.members()[k];
        assert_eq!(prod.at_zero(), 0.0);
        assert_eq!(prod.jump_at(1.5), 1.0);
        assert_relative_eq!(mu_norm2(prod, &mu).unwrap(), 2.0, max_relative = 1e-14);
        // disjoint cells multiply to the zero member
        let z = sys.product_index(1, 3);
        assert_eq!(mu_integral(&sys.members()[z], &mu).unwrap(), 0.0);
    }

    #[test]
    fn indicator_rejects_interval_over_zero() {
        let mu = MuMeasure::new(0.0, JumpMeasure::atomic(vec![(1.0, 1.0)]).unwrap()).unwrap();
        assert!(matches!(
            indicator_system(&[(-1.0, 1.0)], 0.0, &mu),
            Err(Error::IntervalTouchesZero(_, _))
        ));
    }

    #[test]
    fn gram_schmidt_of_indicators_matches_dimension() {
        let nu = JumpMeasure::atomic(vec![(1.5, 2.0), (3.5, 1.0)]).unwrap();
        let mu = MuMeasure::new(1.0, nu).unwrap();
        let sys = indicator_system(&[(1.0, 2.0), (3.0, 4.0)], 1.0, &mu).unwrap();
        let onb = gram_schmidt(sys.members(), &mu, DROP_TOL).unwrap();
        assert_eq!(onb.len(), 3); // 2 atoms + Gaussian direction
    }
}
