//! Path simulation and pathwise calculus.
//!
//! A simulated path carries Brownian values on a uniform grid plus an exact
//! list of jump events. Every derived process lives on a shared timeline
//! (grid, jump times and caller-supplied marker times merged); jump-part
//! integrals are therefore pathwise exact and only the Brownian component
//! carries discretization error. Left limits at a time `t` use the Brownian
//! value at the last grid point strictly before `t` (left-point rule), so
//! integrands built from them stay predictable.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::measure::{mu_inner, JumpMeasure, LevyTriplet, MuMeasure, TestFunction};

/// One simulated realization of the driving process.
#[derive(Debug, Clone)]
pub struct LevyPath {
    pub horizon: f64,
    /// grid times `0 = t_0 < ... < t_K = T`
    pub grid: Vec<f64>,
    /// Brownian values at the grid times, `W_0 = 0`, variance rate sigma^2
    pub brownian: Vec<f64>,
    /// time-sorted jump events `(s_j, x_j)`, `x_j != 0`
    pub jumps: Vec<(f64, f64)>,
    pub seed: u64,
}

/// Derive the seed of path `index` from a master seed (splitmix64 mixing).
pub fn path_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inverse-CDF sampler for jump sizes of a density measure, built once and
/// reused across paths.
struct SizeSampler {
    /// sorted support points and the normalized cumulative mass up to each
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl SizeSampler {
    fn build(nu: &JumpMeasure) -> Option<SizeSampler> {
        let (density, quad, eps) = match nu {
            JumpMeasure::Density { density, quadrature, truncation_eps } => {
                (density.clone(), *quadrature, *truncation_eps)
            }
            JumpMeasure::Atomic { .. } => return None,
        };
        let per_side = 1024usize;
        let mut xs = Vec::with_capacity(2 * per_side + 2);
        let l0 = eps.ln();
        let l1 = quad.x_max.ln();
        for k in 0..=per_side {
            xs.push(-((l1 - (l1 - l0) * k as f64 / per_side as f64).exp()));
        }
        for k in 0..=per_side {
            xs.push((l0 + (l1 - l0) * k as f64 / per_side as f64).exp());
        }
        let mut cdf = Vec::with_capacity(xs.len());
        cdf.push(0.0);
        let mut acc = 0.0;
        for w in xs.windows(2) {
            if w[0] < 0.0 && w[1] > 0.0 {
                cdf.push(acc); // the gap (-eps, eps) carries no mass
                continue;
            }
            // 4-point Gauss-Legendre per cell is plenty at this resolution
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[0] + w[1]);
            const N: [f64; 4] = [-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526];
            const W: [f64; 4] = [0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538];
            let mut cell = 0.0;
            for (n, wt) in N.iter().zip(&W) {
                cell += wt * density(mid + half * n);
            }
            acc += half * cell;
            cdf.push(acc);
        }
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        Some(SizeSampler { xs, cdf })
    }

    fn sample(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.xs[i - 1] + frac * (self.xs[i] - self.xs[i - 1])
    }
}

/// Reusable simulator for one triplet/horizon/grid configuration.
pub struct PathGenerator {
    triplet: LevyTriplet,
    horizon: f64,
    n_steps: usize,
    total_rate: f64,
    atoms: Option<(Vec<f64>, Vec<f64>)>, // cumulative weights, locations
    sizes: Option<SizeSampler>,
}

impl PathGenerator {
    pub fn new(triplet: &LevyTriplet, horizon: f64, grid_step: f64) -> Result<Self> {
        if grid_step.is_nan() || grid_step <= 0.0 || horizon.is_nan() || horizon <= 0.0 {
            return Err(Error::ConfigInvalid(format!(
                "horizon = {horizon} and grid_step = {grid_step} must be positive"
            )));
        }
        let n_steps = (horizon / grid_step).ceil().max(1.0) as usize;
        let total_rate = triplet.nu.total_mass();
        let (atoms, sizes) = match &triplet.nu {
            JumpMeasure::Atomic { atoms } => {
                let mut cum = Vec::with_capacity(atoms.len());
                let mut locs = Vec::with_capacity(atoms.len());
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.weight;
                    cum.push(acc);
                    locs.push(a.location);
                }
                (Some((cum, locs)), None)
            }
            JumpMeasure::Density { .. } => (None, SizeSampler::build(&triplet.nu)),
        };
        Ok(Self { triplet: triplet.clone(), horizon, n_steps, total_rate, atoms, sizes })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Simulate one path. Deterministic in `seed`: the draw order is
    /// Brownian increments (when sigma^2 > 0), then the jump count, then
    /// jump times, then jump sizes.
    pub fn path(&self, seed: u64) -> LevyPath {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let k = self.n_steps;
        let dt = self.horizon / k as f64;
        let mut grid = Vec::with_capacity(k + 1);
        let mut brownian = Vec::with_capacity(k + 1);
        grid.push(0.0);
        brownian.push(0.0);
        let sd = (self.triplet.sigma2 * dt).sqrt();
        let mut w = 0.0;
        for i in 1..=k {
            grid.push(if i == k { self.horizon } else { i as f64 * dt });
            if sd > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                w += sd * z;
            }
            brownian.push(w);
        }

        let mut jumps: Vec<(f64, f64)> = Vec::new();
        let lambda = self.total_rate * self.horizon;
        if lambda > 0.0 {
            let n = Poisson::new(lambda).expect("positive rate").sample(&mut rng) as usize;
            let mut times = Vec::with_capacity(n);
            for _ in 0..n {
                loop {
                    let t = rng.gen::<f64>() * self.horizon;
                    if t > 0.0 && !times.contains(&t) {
                        times.push(t);
                        break;
                    }
                }
            }
            for t in times {
                let x = if let Some((cum, locs)) = &self.atoms {
                    let u = rng.gen::<f64>() * self.total_rate;
                    let i = cum.partition_point(|&c| c < u).min(locs.len() - 1);
                    locs[i]
                } else {
                    self.sizes.as_ref().expect("density sampler").sample(rng.gen::<f64>())
                };
                jumps.push((t, x));
            }
            jumps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        }
        LevyPath { horizon: self.horizon, grid, brownian, jumps, seed }
    }
}

/// One-shot convenience wrapper around [`PathGenerator`].
pub fn simulate_levy(triplet: &LevyTriplet, horizon: f64, grid_step: f64, seed: u64) -> Result<LevyPath> {
    Ok(PathGenerator::new(triplet, horizon, grid_step)?.path(seed))
}

/// The merged event timeline of one path: grid points (carrying Brownian
/// increments), exact jump times and caller-supplied marker times.
#[derive(Debug)]
pub struct Timeline {
    times: Vec<f64>,
    /// Brownian increment applied at each point (0 off the grid)
    dw: Vec<f64>,
    /// jump size at each point (0 when there is no jump)
    jump: Vec<f64>,
    horizon: f64,
    path_seed: u64,
}

impl Timeline {
    pub fn from_path(path: &LevyPath) -> Arc<Timeline> {
        Self::from_path_with_breaks(path, &[])
    }

    /// Merge in extra deterministic times (tensor breakpoints, partition
    /// cell boundaries, stopping times) so that step factors are constant
    /// between consecutive timeline points.
    pub fn from_path_with_breaks(path: &LevyPath, extra: &[f64]) -> Arc<Timeline> {
        let mut times: Vec<f64> = path.grid.clone();
        times.extend(path.jumps.iter().map(|&(s, _)| s));
        times.extend(extra.iter().copied().filter(|&t| t > 0.0 && t < path.horizon));
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let mut dw = vec![0.0; times.len()];
        let mut jump = vec![0.0; times.len()];
        let mut prev_w = 0.0;
        for (k, (&t, &w)) in path.grid.iter().zip(&path.brownian).enumerate() {
            if k == 0 {
                continue;
            }
            let i = times.partition_point(|&u| u < t);
            debug_assert_eq!(times[i], t);
            dw[i] = w - prev_w;
            prev_w = w;
        }
        for &(s, x) in &path.jumps {
            let i = times.partition_point(|&u| u < s);
            debug_assert_eq!(times[i], s);
            jump[i] = x;
        }
        Arc::new(Timeline { times, dw, jump, horizon: path.horizon, path_seed: path.seed })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn path_seed(&self) -> u64 {
        self.path_seed
    }

    pub fn brownian_increment(&self, i: usize) -> f64 {
        self.dw[i]
    }

    pub fn jump_size(&self, i: usize) -> f64 {
        self.jump[i]
    }

    /// Exact index of a timeline point (markers are inserted verbatim).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&u| u < t);
        (i < self.times.len() && self.times[i] == t).then_some(i)
    }

    pub fn contains(&self, t: f64) -> bool {
        t <= 0.0 || t >= self.horizon || self.index_of(t).is_some()
    }

    /// Build a series `t -> bc * W_t + sum_{s_j <= t} jump_map(x_j) + drift(t)`
    /// with the matching left limits (`drift` must be continuous, `drift(0) = 0`).
    pub fn series(
        self: &Arc<Self>,
        brownian_coef: f64,
        jump_map: impl Fn(f64) -> f64,
        drift: impl Fn(f64) -> f64,
    ) -> CadlagSeries {
        let m = self.times.len();
        let mut values = Vec::with_capacity(m);
        let mut pres = Vec::with_capacity(m);
        let mut w = 0.0;
        let mut jumps = 0.0;
        for i in 0..m {
            let d = drift(self.times[i]);
            pres.push(brownian_coef * w + jumps + d);
            w += self.dw[i];
            if self.jump[i] != 0.0 {
                jumps += jump_map(self.jump[i]);
            }
            values.push(brownian_coef * w + jumps + d);
        }
        if m > 0 {
            pres[0] = 0.0;
        }
        CadlagSeries { timeline: self.clone(), values, pres, dynamics: None }
    }
}

/// Linear dynamics of a series of the form
/// `bc * W_t + sum jump(x_j) + rate * t`; interior drift between events is
/// `rate * du`, which keeps iterated drift integrals closed-form.
#[derive(Clone)]
pub struct Dynamics {
    pub brownian_coef: f64,
    pub jump: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub drift_rate: f64,
}

/// A piecewise-evaluated cadlag process on a shared timeline, carrying
/// right-continuous values and left limits at every timeline point
/// (`value_{0-} = 0` by convention).
#[derive(Clone)]
pub struct CadlagSeries {
    timeline: Arc<Timeline>,
    values: Vec<f64>,
    pres: Vec<f64>,
    dynamics: Option<Dynamics>,
}

impl CadlagSeries {
    pub fn timeline(&self) -> &Arc<Timeline> {
        &self.timeline
    }

    pub fn same_timeline(&self, other: &CadlagSeries) -> bool {
        Arc::ptr_eq(&self.timeline, &other.timeline)
    }

    pub fn times(&self) -> &[f64] {
        self.timeline.times()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pre_values(&self) -> &[f64] {
        &self.pres
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn pre_value(&self, i: usize) -> f64 {
        self.pres[i]
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub(crate) fn dynamics(&self) -> Option<&Dynamics> {
        self.dynamics.as_ref()
    }

    pub(crate) fn from_parts(timeline: Arc<Timeline>, values: Vec<f64>, pres: Vec<f64>) -> Self {
        Self { timeline, values, pres, dynamics: None }
    }

    /// Value at an arbitrary time, interpolating the continuous part
    /// linearly between timeline points (exact for linear drift).
    pub fn value_at(&self, u: f64) -> f64 {
        let times = self.timeline.times();
        if u >= *times.last().unwrap() {
            return *self.values.last().unwrap();
        }
        if u <= times[0] {
            return self.values[0];
        }
        let i = times.partition_point(|&t| t <= u) - 1;
        let span = times[i + 1] - times[i];
        let frac = if span > 0.0 { (u - times[i]) / span } else { 0.0 };
        if frac == 0.0 {
            self.values[i]
        } else {
            self.values[i] + frac * (self.pres[i + 1] - self.values[i])
        }
    }

    /// Freeze the series after time `u` (stopping at a deterministic time).
    pub fn stop_at(&self, u: f64) -> CadlagSeries {
        let times = self.timeline.times();
        let frozen = self.value_at(u);
        let mut values = self.values.clone();
        let mut pres = self.pres.clone();
        for i in 0..times.len() {
            if times[i] > u {
                values[i] = frozen;
                pres[i] = frozen;
            }
        }
        // the left limit at the first point past u comes from before u only
        // when the series was still running there; value_at(u) is that limit
        CadlagSeries { timeline: self.timeline.clone(), values, pres, dynamics: None }
    }

    pub fn scale(&self, c: f64) -> CadlagSeries {
        CadlagSeries {
            timeline: self.timeline.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            pres: self.pres.iter().map(|v| c * v).collect(),
            dynamics: None,
        }
    }

    pub fn add(&self, other: &CadlagSeries) -> Result<CadlagSeries> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &CadlagSeries) -> Result<CadlagSeries> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn product(&self, other: &CadlagSeries) -> Result<CadlagSeries> {
        self.zip_with(other, |a, b| a * b)
    }

    fn zip_with(&self, other: &CadlagSeries, op: impl Fn(f64, f64) -> f64) -> Result<CadlagSeries> {
        if !self.same_timeline(other) {
            return Err(Error::PathMismatch);
        }
        Ok(CadlagSeries {
            timeline: self.timeline.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| op(*a, *b)).collect(),
            pres: self.pres.iter().zip(&other.pres).map(|(a, b)| op(*a, *b)).collect(),
            dynamics: None,
        })
    }

    /// Sup-norm distance over all timeline values and left limits.
    pub fn sup_gap(&self, other: &CadlagSeries) -> Result<f64> {
        if !self.same_timeline(other) {
            return Err(Error::PathMismatch);
        }
        let mut gap = 0.0_f64;
        for (a, b) in self.values.iter().zip(&other.values) {
            gap = gap.max((a - b).abs());
        }
        for (a, b) in self.pres.iter().zip(&other.pres) {
            gap = gap.max((a - b).abs());
        }
        Ok(gap)
    }

    /// Dump as CSV rows `time,value,pre_value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time,value,pre_value")?;
        for i in 0..self.values.len() {
            writeln!(out, "{},{},{}", self.timeline.times()[i], self.values[i], self.pres[i])?;
        }
        Ok(())
    }
}

/// The martingale generated by `f`: `X^f_t = f(0) W_t + sum_{s_j <= t}
/// f~(x_j) - t nu(f~)` on every timeline point.
pub fn martingale_path_on(timeline: &Arc<Timeline>, f: &TestFunction, mu: &MuMeasure) -> Result<CadlagSeries> {
    if !f.flags().in_l2_nu {
        return Err(Error::NotSquareIntegrable(f.label().to_string()));
    }
    if !f.flags().in_l1_nu && mu.nu.is_atomic() {
        return Err(Error::NotIntegrable(format!(
            "{} needs a truncated density for small-jump compensation",
            f.label()
        )));
    }
    let rate = mu.nu.integral_jump(&|x| f.jump_at(x));
    let f_jump = f.clone();
    let f_dyn = f.clone();
    let mut series = timeline.series(f.at_zero(), move |x| f_jump.jump_at(x), move |t| -rate * t);
    series.dynamics = Some(Dynamics {
        brownian_coef: f.at_zero(),
        jump: Arc::new(move |x| f_dyn.jump_at(x)),
        drift_rate: -rate,
    });
    Ok(series)
}

/// Convenience: build the timeline and the martingale series in one go.
pub fn martingale_path(f: &TestFunction, path: &LevyPath, mu: &MuMeasure) -> Result<CadlagSeries> {
    martingale_path_on(&Timeline::from_path(path), f, mu)
}

/// Pathwise covariation `[X^f, X^g]_t = f(0) g(0) sigma^2 t +
/// sum_{s_j <= t} f~(x_j) g~(x_j)`; exact given the jump list.
pub fn quadratic_covariation(
    xf: &CadlagSeries,
    f: &TestFunction,
    xg: &CadlagSeries,
    g: &TestFunction,
    sigma2: f64,
) -> Result<CadlagSeries> {
    if !xf.same_timeline(xg) {
        return Err(Error::PathMismatch);
    }
    let cont = f.at_zero() * g.at_zero() * sigma2;
    let (f, g) = (f.clone(), g.clone());
    Ok(xf
        .timeline
        .series(0.0, move |x| f.jump_at(x) * g.jump_at(x), move |t| cont * t))
}

/// Deterministic predictable covariation `<X^f, X^g>_t = t mu(fg)`.
pub fn predictable_covariation(f: &TestFunction, g: &TestFunction, mu: &MuMeasure, t: f64) -> Result<f64> {
    Ok(t * mu_inner(f, g, mu)?)
}

/// The compensated-covariation process `[X^f, X^g] - <X^f, X^g>` pathwise.
pub fn compensated_covariation(
    f: &TestFunction,
    g: &TestFunction,
    timeline: &Arc<Timeline>,
    mu: &MuMeasure,
) -> Result<CadlagSeries> {
    let xf = martingale_path_on(timeline, f, mu)?;
    let xg = martingale_path_on(timeline, g, mu)?;
    let bracket = quadratic_covariation(&xf, f, &xg, g, mu.sigma2)?;
    let rate = mu_inner(f, g, mu)?;
    let times = timeline.times();
    let values = bracket.values.iter().enumerate().map(|(i, v)| v - rate * times[i]).collect();
    let mut pres: Vec<f64> = bracket.pres.iter().enumerate().map(|(i, v)| v - rate * times[i]).collect();
    if !pres.is_empty() {
        pres[0] = 0.0;
    }
    Ok(CadlagSeries { timeline: timeline.clone(), values, pres, dynamics: None })
}

// ---------------------------------------------------------------------------
// Compensated Poisson processes with continuous (affine) intensity
// ---------------------------------------------------------------------------

/// Deterministic intensity `a(t) = a0 + a1 t`, nonnegative on the horizon.
#[derive(Debug, Clone, Copy)]
pub struct AffineIntensity {
    pub a0: f64,
    pub a1: f64,
}

impl AffineIntensity {
    pub fn constant(rate: f64) -> Self {
        Self { a0: rate, a1: 0.0 }
    }

    /// Cumulative intensity `Lambda(t) = a0 t + a1 t^2 / 2`.
    pub fn cumulative(&self, t: f64) -> f64 {
        self.a0 * t + 0.5 * self.a1 * t * t
    }

    fn inverse_cumulative(&self, q: f64) -> f64 {
        if self.a1 == 0.0 {
            q / self.a0
        } else {
            (-self.a0 + (self.a0 * self.a0 + 2.0 * self.a1 * q).sqrt()) / self.a1
        }
    }
}

/// Simulate a compensated Poisson process `N - Lambda` with affine intensity
/// on its own timeline of exact event times.
pub fn compensated_poisson_affine(intensity: AffineIntensity, horizon: f64, seed: u64) -> Result<CadlagSeries> {
    if intensity.a0 < 0.0 || intensity.a0 + intensity.a1 * horizon < 0.0 {
        return Err(Error::ConfigInvalid("intensity must stay nonnegative on the horizon".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let total = intensity.cumulative(horizon);
    let mut times: Vec<f64> = Vec::new();
    if total > 0.0 {
        let n = Poisson::new(total).expect("positive mass").sample(&mut rng) as usize;
        for _ in 0..n {
            let u: f64 = rng.gen();
            let t = intensity.inverse_cumulative(u * total);
            if t > 0.0 && t < horizon {
                times.push(t);
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
    }
    let path = LevyPath {
        horizon,
        grid: vec![0.0, horizon],
        brownian: vec![0.0, 0.0],
        jumps: times.into_iter().map(|t| (t, 1.0)).collect(),
        seed,
    };
    let timeline = Timeline::from_path(&path);
    Ok(timeline.series(0.0, |_| 1.0, move |t| -intensity.cumulative(t)))
}

/// `[Nbar, Nbar] - <Nbar, Nbar>` for the affine compensated Poisson built by
/// [`compensated_poisson_affine`]; equals the counting process minus its
/// compensator, i.e. `Nbar` itself.
pub fn affine_poisson_bracket_minus_compensator(series: &CadlagSeries, intensity: AffineIntensity) -> CadlagSeries {
    series
        .timeline
        .series(0.0, |_| 1.0, move |t| -intensity.cumulative(t))
}
