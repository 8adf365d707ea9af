//! Jump measures, the measure `mu = sigma^2*delta_0 + nu`, and the L^2(mu)
//! geometry (integrals, inner products, Gram-Schmidt) that indexes every
//! martingale in this crate.
//!
//! Atomic measures are handled with exact finite sums; densities go through
//! composite Gauss-Legendre panels on a truncated domain `eps < |x| <= x_max`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// One atom of a purely atomic jump measure: mass `weight` at `location != 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// Panel layout for composite Gauss-Legendre integration of a density
/// over `truncation_eps < |x| <= x_max`, with geometrically spaced panels
/// so that integrable singularities at the origin are resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub x_max: f64,
    pub panels_per_side: usize,
    pub nodes_per_panel: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { x_max: 30.0, panels_per_side: 40, nodes_per_panel: 32 }
    }
}

/// The jump measure `nu` of a Levy process. `nu({0}) = 0` always; a density
/// is only ever integrated outside the declared truncation window.
#[derive(Clone)]
pub enum JumpMeasure {
    Atomic {
        atoms: Vec<Atom>,
    },
    Density {
        density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        quadrature: QuadratureSpec,
        truncation_eps: f64,
    },
}

impl fmt::Debug for JumpMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpMeasure::Atomic { atoms } => f.debug_struct("Atomic").field("atoms", atoms).finish(),
            JumpMeasure::Density { quadrature, truncation_eps, .. } => f
                .debug_struct("Density")
                .field("quadrature", quadrature)
                .field("truncation_eps", truncation_eps)
                .finish(),
        }
    }
}

impl JumpMeasure {
    /// Atomic measure; rejects atoms at the origin and non-positive weights.
    pub fn atomic(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(x, w) in &atoms {
            if x == 0.0 || !x.is_finite() {
                return Err(Error::NotIntegrable(format!("atom at x = {x} is not allowed")));
            }
            if w <= 0.0 || !w.is_finite() {
                return Err(Error::NotIntegrable(format!("atom weight {w} must be positive")));
            }
        }
        let mut atoms: Vec<Atom> = atoms.into_iter().map(|(location, weight)| Atom { location, weight }).collect();
        atoms.sort_by(|a, b| a.location.partial_cmp(&b.location).unwrap());
        Ok(JumpMeasure::Atomic { atoms })
    }

    /// Empty jump measure (pure diffusion / deterministic models).
    pub fn empty() -> Self {
        JumpMeasure::Atomic { atoms: Vec::new() }
    }

    /// Density measure `d nu = h(x) dx` restricted to `eps < |x| <= x_max`.
    /// Checks `int (x^2 ^ 1) d nu < inf` on the represented (truncated) measure.
    pub fn density<F>(h: F, quadrature: QuadratureSpec, truncation_eps: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if truncation_eps <= 0.0 {
            return Err(Error::InfiniteActivityWithoutTruncation);
        }
        let m = JumpMeasure::Density {
            density: Arc::new(h),
            quadrature,
            truncation_eps,
        };
        let check = m.integral_jump(&|x: f64| x.powi(2).min(1.0));
        if !check.is_finite() {
            return Err(Error::NotIntegrable(format!(
                "int (x^2 ^ 1) d nu = {check} on the truncated domain"
            )));
        }
        Ok(m)
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, JumpMeasure::Atomic { .. })
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match self {
            JumpMeasure::Atomic { atoms } => Some(atoms),
            JumpMeasure::Density { .. } => None,
        }
    }

    pub fn truncation_eps(&self) -> Option<f64> {
        match self {
            JumpMeasure::Atomic { .. } => None,
            JumpMeasure::Density { truncation_eps, .. } => Some(*truncation_eps),
        }
    }

    /// Total mass of the (truncated) measure; the jump intensity of simulation.
    pub fn total_mass(&self) -> f64 {
        self.integral_jump(&|_| 1.0)
    }

    /// `nu(g)` for a function on `R \ {0}`. Exact sum for atoms, composite
    /// Gauss-Legendre for densities.
    pub fn integral_jump(&self, g: &dyn Fn(f64) -> f64) -> f64 {
        match self {
            JumpMeasure::Atomic { atoms } => atoms.iter().map(|a| a.weight * g(a.location)).sum(),
            JumpMeasure::Density { density, quadrature, truncation_eps } => {
                panel_quadrature(density, quadrature, *truncation_eps, g)
            }
        }
    }

    /// `nu(g)` together with a quadrature error estimate (0 for atoms).
    pub fn integral_jump_with_err(&self, g: &dyn Fn(f64) -> f64) -> (f64, f64) {
        match self {
            JumpMeasure::Atomic { .. } => (self.integral_jump(g), 0.0),
            JumpMeasure::Density { density, quadrature, truncation_eps } => {
                let fine = panel_quadrature(density, quadrature, *truncation_eps, g);
                let coarse_spec = QuadratureSpec {
                    panels_per_side: (quadrature.panels_per_side / 2).max(1),
                    ..*quadrature
                };
                let coarse = panel_quadrature(density, &coarse_spec, *truncation_eps, g);
                (fine, (fine - coarse).abs())
            }
        }
    }

    /// Image measure under `x -> x` weighting `x^2 nu(dx)`; the jump part of
    /// the second-moment measure used by the hat map.
    pub fn squared_weighting(&self) -> Self {
        match self {
            JumpMeasure::Atomic { atoms } => JumpMeasure::Atomic {
                atoms: atoms
                    .iter()
                    .map(|a| Atom { location: a.location, weight: a.weight * a.location * a.location })
                    .collect(),
            },
            JumpMeasure::Density { density, quadrature, truncation_eps } => {
                let h = density.clone();
                JumpMeasure::Density {
                    density: Arc::new(move |x: f64| x * x * h(x)),
                    quadrature: *quadrature,
                    truncation_eps: *truncation_eps,
                }
            }
        }
    }

    /// Convergence probe for `int g d nu` beyond the quadrature window:
    /// integrates `g` against the density over doubling windows and requires
    /// the increments to decay geometrically. Atomic measures always pass.
    pub fn tail_converges(&self, g: &dyn Fn(f64) -> f64) -> bool {
        match self {
            JumpMeasure::Atomic { .. } => true,
            JumpMeasure::Density { density, quadrature, .. } => {
                let mut lo = quadrature.x_max;
                let mut last = f64::INFINITY;
                for _ in 0..8 {
                    let hi = 2.0 * lo;
                    let inc = window_integral(density, lo, hi, g) + window_integral(density, -hi, -lo, g);
                    if !inc.is_finite() {
                        return false;
                    }
                    if inc > 1e-300 && inc >= 0.9 * last {
                        return false;
                    }
                    last = inc.max(1e-300);
                    lo = hi;
                }
                true
            }
        }
    }

    /// L^2 truncation bias `int_{finer_eps < |x| <= eps} g^2 d nu` reported
    /// when small jumps below the declared window are discarded.
    pub fn truncation_bias(&self, g: &dyn Fn(f64) -> f64, finer_eps: f64) -> f64 {
        match self {
            JumpMeasure::Atomic { .. } => 0.0,
            JumpMeasure::Density { density, truncation_eps, .. } => {
                if finer_eps >= *truncation_eps {
                    return 0.0;
                }
                let sq = |x: f64| g(x) * g(x);
                window_integral(density, finer_eps, *truncation_eps, &sq)
                    + window_integral(density, -*truncation_eps, -finer_eps, &sq)
            }
        }
    }
}

/// Characteristics `(beta, sigma^2, nu)` of the driving Levy process.
#[derive(Debug, Clone)]
pub struct LevyTriplet {
    pub beta: f64,
    pub sigma2: f64,
    pub nu: JumpMeasure,
}

impl LevyTriplet {
    pub fn new(beta: f64, sigma2: f64, nu: JumpMeasure) -> Result<Self> {
        if sigma2 < 0.0 || !sigma2.is_finite() {
            return Err(Error::ConfigInvalid(format!("sigma2 = {sigma2} must be >= 0")));
        }
        Ok(Self { beta, sigma2, nu })
    }

    pub fn mu(&self) -> MuMeasure {
        MuMeasure { sigma2: self.sigma2, nu: self.nu.clone() }
    }
}

/// The measure `mu = sigma^2 * delta_0 + nu` whose L^2 space indexes the
/// martingale family.
#[derive(Debug, Clone)]
pub struct MuMeasure {
    pub sigma2: f64,
    pub nu: JumpMeasure,
}

impl MuMeasure {
    pub fn new(sigma2: f64, nu: JumpMeasure) -> Result<Self> {
        if sigma2 < 0.0 || !sigma2.is_finite() {
            return Err(Error::ConfigInvalid(format!("sigma2 = {sigma2} must be >= 0")));
        }
        Ok(Self { sigma2, nu })
    }

    /// The second-moment measure `eta = sigma^2 * delta_0 + x^2 nu(dx)`.
    pub fn eta(&self) -> MuMeasure {
        MuMeasure { sigma2: self.sigma2, nu: self.nu.squared_weighting() }
    }

    /// Dimension of L^2(mu) as a vector space; finite only for atomic `nu`.
    pub fn l2_dimension(&self) -> Option<usize> {
        self.nu.atoms().map(|a| a.len() + usize::from(self.sigma2 > 0.0))
    }
}

/// Integrability evidence recorded when a function is certified against a
/// measure. For densities the flags are numerical evidence (quadrature plus
/// tail-window convergence), not proofs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrabilityFlags {
    pub in_l1_nu: bool,
    pub in_l2_nu: bool,
    pub bounded: bool,
}

/// Shared evaluable jump part of a function on `R \ {0}`.
pub type JumpFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// An element `f` of L^2(mu), stored as its value at zero plus the jump part
/// on `R \ {0}`. The jump part never contributes at `x = 0`: integrals
/// against `nu` only ever evaluate `jump`, and the atom at the origin only
/// ever sees `at_zero`.
#[derive(Clone)]
pub struct TestFunction {
    at_zero: f64,
    jump: JumpFn,
    flags: IntegrabilityFlags,
    label: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("at_zero", &self.at_zero)
            .field("flags", &self.flags)
            .finish()
    }
}

impl TestFunction {
    /// Build from a value at zero and a jump part, certifying integrability
    /// flags against `mu`.
    pub fn new<F>(at_zero: f64, jump: F, label: impl Into<String>, mu: &MuMeasure) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut f = Self { at_zero, jump: Arc::new(jump), flags: IntegrabilityFlags::default(), label: label.into() };
        f.flags = f.certify(mu);
        f
    }

    /// The zero function.
    pub fn zero() -> Self {
        Self {
            at_zero: 0.0,
            jump: Arc::new(|_| 0.0),
            flags: IntegrabilityFlags { in_l1_nu: true, in_l2_nu: true, bounded: true },
            label: "0".into(),
        }
    }

    /// The pure Gaussian direction `1_{0}`.
    pub fn indicator_zero() -> Self {
        Self {
            at_zero: 1.0,
            jump: Arc::new(|_| 0.0),
            flags: IntegrabilityFlags { in_l1_nu: true, in_l2_nu: true, bounded: true },
            label: "1{0}".into(),
        }
    }

    pub fn at_zero(&self) -> f64 {
        self.at_zero
    }

    /// Value of the jump part at `x != 0`. By convention returns 0 at `x = 0`.
    pub fn jump_at(&self, x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            (self.jump)(x)
        }
    }

    /// Full evaluation: `at_zero` at the origin, jump part elsewhere.
    pub fn eval(&self, x: f64) -> f64 {
        if x == 0.0 {
            self.at_zero
        } else {
            (self.jump)(x)
        }
    }

    pub fn flags(&self) -> IntegrabilityFlags {
        self.flags
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn certify(&self, mu: &MuMeasure) -> IntegrabilityFlags {
        let jump = self.jump.clone();
        let l1 = mu.nu.integral_jump(&|x| jump_abs(&jump, x));
        let l2 = mu.nu.integral_jump(&|x| {
            let v = (jump)(x);
            v * v
        });
        let jump2 = self.jump.clone();
        let tail_l1 = mu.nu.tail_converges(&|x| jump_abs(&jump2, x));
        let jump3 = self.jump.clone();
        let tail_l2 = mu.nu.tail_converges(&|x| {
            let v = (jump3)(x);
            v * v
        });
        let bounded = self.at_zero.is_finite() && self.sup_evidence(&mu.nu).is_finite();
        IntegrabilityFlags {
            in_l1_nu: l1.is_finite() && tail_l1,
            in_l2_nu: l2.is_finite() && tail_l2,
            bounded,
        }
    }

    fn sup_evidence(&self, nu: &JumpMeasure) -> f64 {
        match nu {
            JumpMeasure::Atomic { atoms } => atoms
                .iter()
                .map(|a| (self.jump)(a.location).abs())
                .fold(0.0_f64, f64::max),
            JumpMeasure::Density { quadrature, truncation_eps, .. } => {
                let mut sup = 0.0_f64;
                for x in sample_grid(*truncation_eps, quadrature.x_max, 512) {
                    sup = sup.max((self.jump)(x).abs());
                }
                sup
            }
        }
    }

    /// Re-certify against a (possibly different) measure.
    pub fn certified(mut self, mu: &MuMeasure) -> Self {
        self.flags = self.certify(mu);
        self
    }

    /// `f * g` pointwise.
    pub fn product(&self, other: &TestFunction, mu: &MuMeasure) -> TestFunction {
        let a = self.jump.clone();
        let b = other.jump.clone();
        TestFunction::new(
            self.at_zero * other.at_zero,
            move |x| a(x) * b(x),
            format!("({})*({})", self.label, other.label),
            mu,
        )
    }

    /// `f * g * 1_{R \ 0}`: the pointwise product with the origin removed,
    /// i.e. the generator of the compensated-covariation martingale.
    pub fn product_offzero(&self, other: &TestFunction, mu: &MuMeasure) -> TestFunction {
        let a = self.jump.clone();
        let b = other.jump.clone();
        TestFunction::new(
            0.0,
            move |x| a(x) * b(x),
            format!("({})*({})|x!=0", self.label, other.label),
            mu,
        )
    }

    /// Flat linear combination `sum_i coeffs[i] * fs[i]` evaluated without
    /// building a closure tree.
    pub fn linear_combination(coeffs: &[f64], fs: &[TestFunction], mu: &MuMeasure) -> TestFunction {
        assert_eq!(coeffs.len(), fs.len());
        let at_zero = coeffs.iter().zip(fs).map(|(c, f)| c * f.at_zero).sum();
        let parts: Vec<(f64, JumpFn)> =
            coeffs.iter().zip(fs).map(|(c, f)| (*c, f.jump.clone())).collect();
        TestFunction::new(
            at_zero,
            move |x| parts.iter().map(|(c, j)| c * j(x)).sum(),
            "lincomb",
            mu,
        )
    }

    /// The hat map `g -> g^`: multiplies the jump part by `x` and keeps the
    /// value at zero. An isometry from L^2(eta) onto L^2(mu).
    pub fn hat(&self, mu: &MuMeasure) -> TestFunction {
        let j = self.jump.clone();
        TestFunction::new(self.at_zero, move |x| x * j(x), format!("hat({})", self.label), mu)
    }

    /// Inverse of the hat map on its range: divides the jump part by `x`.
    pub fn unhat(&self, eta_certifier: &MuMeasure) -> TestFunction {
        let j = self.jump.clone();
        TestFunction::new(self.at_zero, move |x| j(x) / x, format!("unhat({})", self.label), eta_certifier)
    }
}

fn jump_abs(j: &JumpFn, x: f64) -> f64 {
    j(x).abs()
}

/// `mu(f) = sigma^2 f(0) + nu(f~)`.
pub fn mu_integral(f: &TestFunction, mu: &MuMeasure) -> Result<f64> {
    if !f.flags().in_l1_nu || !f.at_zero.is_finite() {
        return Err(Error::NotIntegrable(format!("{} is not certified in L1(mu)", f.label())));
    }
    Ok(mu.sigma2 * f.at_zero + mu.nu.integral_jump(&|x| f.jump_at(x)))
}

/// `mu(f)` with a quadrature error estimate (exactly 0 for atomic measures).
pub fn mu_integral_with_err(f: &TestFunction, mu: &MuMeasure) -> Result<(f64, f64)> {
    if !f.flags().in_l1_nu || !f.at_zero.is_finite() {
        return Err(Error::NotIntegrable(format!("{} is not certified in L1(mu)", f.label())));
    }
    let (v, e) = mu.nu.integral_jump_with_err(&|x| f.jump_at(x));
    Ok((mu.sigma2 * f.at_zero + v, e))
}

/// The bilinear form `mu(fg) = sigma^2 f(0)g(0) + int f~ g~ d nu`.
pub fn mu_inner(f: &TestFunction, g: &TestFunction, mu: &MuMeasure) -> Result<f64> {
    if !f.flags().in_l2_nu || !g.flags().in_l2_nu {
        return Err(Error::NotIntegrable(format!(
            "{} or {} is not certified in L2(mu)",
            f.label(),
            g.label()
        )));
    }
    Ok(mu.sigma2 * f.at_zero * g.at_zero + mu.nu.integral_jump(&|x| f.jump_at(x) * g.jump_at(x)))
}

/// `||f||^2 in L^2(mu)`.
pub fn mu_norm2(f: &TestFunction, mu: &MuMeasure) -> Result<f64> {
    mu_inner(f, f, mu)
}

/// `||f - g||^2 in L^2(mu)`.
pub fn mu_distance2(f: &TestFunction, g: &TestFunction, mu: &MuMeasure) -> Result<f64> {
    let d = TestFunction::linear_combination(&[1.0, -1.0], &[f.clone(), g.clone()], mu);
    mu_norm2(&d, mu)
}

/// An ordered orthonormal system in L^2(mu) together with the Gram residual
/// `max |<e_i, e_j> - delta_ij|` recorded when it was built.
#[derive(Debug, Clone)]
pub struct OrthonormalSystem {
    members: Vec<TestFunction>,
    gram_residual: f64,
}

impl OrthonormalSystem {
    pub fn from_parts(members: Vec<TestFunction>, gram_residual: f64) -> Self {
        Self { members, gram_residual }
    }

    pub fn members(&self) -> &[TestFunction] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn gram_residual(&self) -> f64 {
        self.gram_residual
    }
}

/// Default tolerance on the Gram residual of an orthonormalized system.
pub const GRAM_RESIDUAL_TOL: f64 = 1e-10;
/// Default drop tolerance for linearly dependent members.
pub const DROP_TOL: f64 = 1e-9;

/// Modified Gram-Schmidt in L^2(mu) with re-orthogonalization.
///
/// Functions are mapped isometrically onto coordinate vectors
/// `sqrt(weight) * f(point)` over the mass points of the measure (the atoms
/// plus the origin; quadrature nodes for densities), so projections are
/// plain Euclidean and do not square the condition number. Members whose
/// post-projection norm falls below `drop_tol` (relative to the largest
/// input norm) are dropped as linearly dependent. The sign of each output
/// is fixed so that its first nonzero coordinate (value at zero, then jump
/// values in increasing |x|) is positive.
pub fn gram_schmidt(system: &[TestFunction], mu: &MuMeasure, drop_tol: f64) -> Result<OrthonormalSystem> {
    let n = system.len();
    if n == 0 {
        return Err(Error::EmptySystem);
    }
    for f in system {
        if !f.flags().in_l2_nu {
            return Err(Error::NotIntegrable(format!("{} is not certified in L2(mu)", f.label())));
        }
    }
    let points = mass_points(mu);
    let coords: Vec<Vec<f64>> = system
        .iter()
        .map(|f| {
            points
                .iter()
                .map(|&(x, w)| {
                    let v = match x {
                        None => f.at_zero(),
                        Some(x) => f.jump_at(x),
                    };
                    w.sqrt() * v
                })
                .collect()
        })
        .collect();
    let scale = coords.iter().map(|c| dot(c, c)).fold(0.0_f64, f64::max).sqrt().max(1.0);

    let mut basis_vecs: Vec<Vec<f64>> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new(); // coefficients over the inputs
    for i in 0..n {
        let mut v = coords[i].clone();
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        // two projection passes, plus extras while cross terms stay above
        // the tolerance relative to the member's own norm
        for pass in 0..4 {
            for (e, e_row) in basis_vecs.iter().zip(&rows) {
                let c = dot(&v, e);
                axpy(&mut v, e, -c);
                axpy(&mut row, e_row, -c);
            }
            if pass == 0 {
                continue;
            }
            let r = basis_vecs.iter().map(|e| dot(&v, e).abs()).fold(0.0_f64, f64::max);
            let vn = dot(&v, &v).sqrt();
            if r <= 0.02 * GRAM_RESIDUAL_TOL * vn.max(drop_tol * scale) {
                break;
            }
        }
        let norm = dot(&v, &v).sqrt();
        // NaN-safe: a degenerate norm is dropped, never normalized
        if norm.is_nan() || norm <= drop_tol * scale {
            continue;
        }
        let inv = 1.0 / norm;
        for c in &mut v {
            *c *= inv;
        }
        for c in &mut row {
            *c *= inv;
        }
        // sign convention: the points are ordered origin-first then by |x|
        if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
            if *first < 0.0 {
                for c in &mut v {
                    *c = -*c;
                }
                for c in &mut row {
                    *c = -*c;
                }
            }
        }
        basis_vecs.push(v);
        rows.push(row);
    }
    if basis_vecs.is_empty() {
        return Err(Error::EmptySystem);
    }

    let mut residual = 0.0_f64;
    for (i, a) in basis_vecs.iter().enumerate() {
        for (j, b) in basis_vecs.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            residual = residual.max((dot(a, b) - target).abs());
        }
    }

    let members = rows
        .iter()
        .enumerate()
        .map(|(k, row)| TestFunction::linear_combination(row, system, mu).with_label(format!("e{}", k + 1)))
        .collect();
    Ok(OrthonormalSystem::from_parts(members, residual))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// The mass points of `mu` as `(location, weight)` pairs, the origin first
/// and then increasing |x| (positive side first on ties); `None` encodes
/// the origin. For densities these are the quadrature nodes, so Euclidean
/// products of the induced coordinates reproduce the quadrature inner
/// product exactly.
fn mass_points(mu: &MuMeasure) -> Vec<(Option<f64>, f64)> {
    let mut pts: Vec<(Option<f64>, f64)> = vec![(None, mu.sigma2)];
    let mut jump_pts: Vec<(f64, f64)> = match &mu.nu {
        JumpMeasure::Atomic { atoms } => atoms.iter().map(|a| (a.location, a.weight)).collect(),
        JumpMeasure::Density { density, quadrature, truncation_eps } => {
            quadrature_points(quadrature, *truncation_eps)
                .into_iter()
                .map(|(x, w)| (x, w * density(x)))
                .collect()
        }
    };
    jump_pts.sort_by(|a, b| {
        (a.0.abs(), -a.0.signum()).partial_cmp(&(b.0.abs(), -b.0.signum())).unwrap()
    });
    pts.extend(jump_pts.into_iter().map(|(x, w)| (Some(x), w)));
    pts
}

/// Symmetric grid `+-` logarithmically spaced over `eps..x_max`.
fn sample_grid(eps: f64, x_max: f64, per_side: usize) -> Vec<f64> {
    let mut xs = Vec::with_capacity(2 * per_side);
    let l0 = eps.max(1e-12).ln();
    let l1 = x_max.ln();
    for k in 0..per_side {
        let x = (l0 + (l1 - l0) * (k as f64 + 0.5) / per_side as f64).exp();
        xs.push(x);
        xs.push(-x);
    }
    xs
}

// ---------------------------------------------------------------------------
// Composite Gauss-Legendre quadrature
// ---------------------------------------------------------------------------

/// Nodes and bare Lebesgue weights of the composite rule over
/// `eps < |x| <= x_max` (the density is not folded in).
fn quadrature_points(spec: &QuadratureSpec, eps: f64) -> Vec<(f64, f64)> {
    let (nodes, weights) = gauss_legendre(spec.nodes_per_panel);
    let breaks = geometric_breaks(eps, spec.x_max, spec.panels_per_side);
    let mut pts = Vec::with_capacity(2 * spec.panels_per_side * spec.nodes_per_panel);
    for side in [-1.0_f64, 1.0] {
        for w in breaks.windows(2) {
            let (a, b) = if side > 0.0 { (w[0], w[1]) } else { (-w[1], -w[0]) };
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for (x, wt) in nodes.iter().zip(&weights) {
                pts.push((mid + half * x, half * wt));
            }
        }
    }
    pts
}

fn panel_quadrature(
    density: &Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    spec: &QuadratureSpec,
    eps: f64,
    g: &dyn Fn(f64) -> f64,
) -> f64 {
    quadrature_points(spec, eps).iter().map(|&(x, w)| w * g(x) * density(x)).sum()
}

fn window_integral(density: &Arc<dyn Fn(f64) -> f64 + Send + Sync>, lo: f64, hi: f64, g: &dyn Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_legendre(32);
    let panels = 8;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + (hi - lo) * p as f64 / panels as f64;
        let b = lo + (hi - lo) * (p + 1) as f64 / panels as f64;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (x, wt) in nodes.iter().zip(&weights) {
            let u = mid + half * x;
            total += half * wt * g(u) * density(u);
        }
    }
    total
}

fn geometric_breaks(eps: f64, x_max: f64, panels: usize) -> Vec<f64> {
    let ratio = (x_max / eps).powf(1.0 / panels as f64);
    let mut breaks = Vec::with_capacity(panels + 1);
    let mut x = eps;
    breaks.push(x);
    for _ in 0..panels {
        x *= ratio;
        breaks.push(x);
    }
    *breaks.last_mut().unwrap() = x_max;
    breaks
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_delta_one() -> MuMeasure {
        MuMeasure::new(1.0, JumpMeasure::atomic(vec![(1.0, 2.0)]).unwrap()).unwrap()
    }

    fn f_one_plus_x(mu: &MuMeasure) -> TestFunction {
        TestFunction::new(1.0, |x| x, "1{0}+x", mu)
    }

    fn f_x2(mu: &MuMeasure) -> TestFunction {
        TestFunction::new(0.0, |x| x * x, "x^2", mu)
    }

    #[test]
    fn integral_atom_sum() {
        let mu = two_delta_one();
        let f = f_one_plus_x(&mu);
        assert_relative_eq!(mu_integral(&f, &mu).unwrap(), 3.0, max_relative = 1e-15);
    }

    #[test]
    fn integral_zero_function() {
        let mu = two_delta_one();
        assert_eq!(mu_integral(&TestFunction::zero(), &mu).unwrap(), 0.0);
    }

    #[test]
    fn integral_pure_jump_square() {
        let nu = JumpMeasure::atomic(vec![(1.0, 2.0)]).unwrap();
        let mu = MuMeasure::new(0.0, nu).unwrap();
        let f = f_x2(&mu);
        assert_relative_eq!(mu_integral(&f, &mu).unwrap(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn inner_products_exact_on_atoms() {
        let mu = two_delta_one();
        let f = f_one_plus_x(&mu);
        let g = f_x2(&mu);
        assert_relative_eq!(mu_inner(&f, &g, &mu).unwrap(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(mu_inner(&f, &f, &mu).unwrap(), 3.0, max_relative = 1e-15);
        assert_eq!(mu_inner(&TestFunction::zero(), &TestFunction::zero(), &mu).unwrap(), 0.0);
    }

    #[test]
    fn gram_schmidt_two_members() {
        let mu = two_delta_one();
        let sys = vec![f_one_plus_x(&mu), f_x2(&mu)];
        let onb = gram_schmidt(&sys, &mu, DROP_TOL).unwrap();
        assert_eq!(onb.len(), 2);
        assert!(onb.gram_residual() <= GRAM_RESIDUAL_TOL);
        let e1 = &onb.members()[0];
        let e2 = &onb.members()[1];
        let s3 = 3.0_f64.sqrt();
        assert_relative_eq!(e1.at_zero(), 1.0 / s3, max_relative = 1e-12);
        assert_relative_eq!(e1.jump_at(1.0), 1.0 / s3, max_relative = 1e-12);
        // Classical projection gives (-2/3, 1/3)/sqrt(2/3); the sign
        // convention flips it so the value at zero is positive.
        let n = (2.0f64 / 3.0).sqrt();
        assert_relative_eq!(e2.at_zero(), (2.0 / 3.0) / n, max_relative = 1e-12);
        assert_relative_eq!(e2.jump_at(1.0), -(1.0 / 3.0) / n, max_relative = 1e-12);
    }

    #[test]
    fn gram_schmidt_idempotent_on_orthonormal_input() {
        let mu = two_delta_one();
        let sys = vec![f_one_plus_x(&mu), f_x2(&mu)];
        let onb = gram_schmidt(&sys, &mu, DROP_TOL).unwrap();
        let again = gram_schmidt(onb.members(), &mu, DROP_TOL).unwrap();
        assert_eq!(again.len(), onb.len());
        for (a, b) in onb.members().iter().zip(again.members()) {
            assert_relative_eq!(a.at_zero(), b.at_zero(), epsilon = 1e-12);
            assert_relative_eq!(a.jump_at(1.0), b.jump_at(1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn gram_schmidt_drops_dependent_member() {
        let mu = two_delta_one();
        let f = f_one_plus_x(&mu);
        let two_f = TestFunction::linear_combination(&[2.0], std::slice::from_ref(&f), &mu);
        let onb = gram_schmidt(&[f, two_f], &mu, DROP_TOL).unwrap();
        assert_eq!(onb.len(), 1);
    }

    #[test]
    fn gram_schmidt_empty_after_drops() {
        let mu = two_delta_one();
        let z = TestFunction::zero();
        assert!(matches!(gram_schmidt(&[z.clone(), z], &mu, DROP_TOL), Err(Error::EmptySystem)));
    }

    #[test]
    fn hat_map_definition_and_isometry() {
        let nu = JumpMeasure::atomic(vec![(1.0, 2.0), (2.0, 0.5)]).unwrap();
        let mu = MuMeasure::new(1.0, nu).unwrap();
        let eta = mu.eta();
        let g = TestFunction::new(1.0, |_| 1.0, "1", &eta);
        let hat = g.hat(&mu);
        assert_eq!(hat.eval(0.0), 1.0);
        assert_eq!(hat.jump_at(1.0), 1.0);
        assert_eq!(hat.jump_at(2.0), 2.0);
        let n_eta = mu_norm2(&g, &eta).unwrap();
        let n_mu = mu_norm2(&hat, &mu).unwrap();
        assert_relative_eq!(n_eta, n_mu, max_relative = 1e-12);

        // norm preservation example on nu = 2*delta_1, g = 1{0} + 1_{1}
        let nu1 = JumpMeasure::atomic(vec![(1.0, 2.0)]).unwrap();
        let mu1 = MuMeasure::new(1.0, nu1).unwrap();
        let eta1 = mu1.eta();
        let g1 = TestFunction::new(1.0, |x| if (x - 1.0).abs() < 1e-12 { 1.0 } else { 0.0 }, "1{0}+1{1}", &eta1);
        let h1 = g1.hat(&mu1);
        assert_relative_eq!(mu_norm2(&g1, &eta1).unwrap(), 3.0, max_relative = 1e-14);
        assert_relative_eq!(mu_norm2(&h1, &mu1).unwrap(), 3.0, max_relative = 1e-14);

        // hat then unhat is the identity on the atoms
        let back = h1.unhat(&eta1);
        assert_relative_eq!(back.jump_at(1.0), g1.jump_at(1.0), epsilon = 1e-14);
        assert_eq!(back.at_zero(), g1.at_zero());
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        // nu with standard Gaussian-shaped density: int x^2 e^{-x^2/2} dx = sqrt(2 pi)
        let spec = QuadratureSpec { x_max: 12.0, panels_per_side: 30, nodes_per_panel: 32 };
        let nu = JumpMeasure::density(|x: f64| (-x * x / 2.0).exp(), spec, 1e-9).unwrap();
        let v = nu.integral_jump(&|x| x * x);
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-9);
        let (v2, err) = nu.integral_jump_with_err(&|x| x * x);
        assert_relative_eq!(v, v2, max_relative = 1e-15);
        assert!(err < 1e-8);
    }

    #[test]
    fn tail_probe_flags_divergence() {
        let spec = QuadratureSpec { x_max: 20.0, panels_per_side: 30, nodes_per_panel: 16 };
        let cauchy = JumpMeasure::density(|x: f64| x.powi(-2), spec, 0.05).unwrap();
        // e^{|x|} against x^{-2} diverges
        assert!(!cauchy.tail_converges(&|x: f64| x.abs().exp()));
        // x^2 against e^{-2|x|} converges
        let laplace = JumpMeasure::density(|x: f64| (-2.0 * x.abs()).exp(), spec, 1e-6).unwrap();
        assert!(laplace.tail_converges(&|x: f64| x * x));
    }

    #[test]
    fn dimension_of_l2_mu() {
        let nu = JumpMeasure::atomic(vec![(1.0, 1.0), (-0.5, 2.0), (2.0, 0.3)]).unwrap();
        assert_eq!(MuMeasure::new(0.0, nu.clone()).unwrap().l2_dimension(), Some(3));
        assert_eq!(MuMeasure::new(1.0, nu).unwrap().l2_dimension(), Some(4));
        assert_eq!(MuMeasure::new(1.0, JumpMeasure::empty()).unwrap().l2_dimension(), Some(1));
    }
}
