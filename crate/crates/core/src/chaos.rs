//! Structural identities and chaos projections: the product representation
//! of monomials in the family, the permutation identity between multiple and
//! iterated integrals, and L^2 projections of path functionals onto spaces
//! of iterated integrals.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::MartingaleFamily;
use crate::iterated::{iterate, simplex_integral, McOptions, MomentCheck};
use crate::measure::{mu_norm2, OrthonormalSystem, TestFunction};
use crate::path::{path_seed, CadlagSeries, LevyPath, PathGenerator, Timeline};
use crate::stats::{z_score, OnlineStats};
use crate::stepfn::{ElementaryTensor, IteratedSpec, StepFunction};

// ---------------------------------------------------------------------------
// Product representation of monomials
// ---------------------------------------------------------------------------

/// Pathwise check of the product representation: the product
/// `prod_i X^{a_i}_t` against its expansion into stochastic integrals of
/// left-limit products driven by iterated compensated-covariation
/// martingales, plus Lebesgue-Stieltjes integrals against the deterministic
/// brackets (only the quasi-left-continuous terms survive for these
/// families).
///
/// Returns the sup-norm gap over the whole timeline.
pub fn product_formula_check(indices: &[usize], family: &MartingaleFamily, path: &LevyPath) -> Result<f64> {
    let m = indices.len();
    assert!(m >= 1, "need at least one factor");
    family.closed_on(indices)?;

    let timeline = Timeline::from_path(path);
    let series = family.series_all(&timeline)?;
    let n_pts = timeline.len();

    // left-hand side: the raw product of the member paths
    let mut lhs = series[indices[0]].clone();
    for &i in &indices[1..] {
        lhs = lhs.product(&series[i])?;
    }

    let mut rhs_values = vec![0.0; n_pts];
    let mut rhs_pres = vec![0.0; n_pts];

    for mask in 1u32..(1u32 << m) {
        let slots: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
        let subset: Vec<usize> = slots.iter().map(|&k| indices[k]).collect();
        let complement: Vec<&CadlagSeries> = (0..m)
            .filter(|k| mask & (1 << k) == 0)
            .map(|k| &series[indices[k]])
            .collect();

        let comp_fn = family.compensated_product(&subset);
        let jump_rate = family.mu().nu.integral_jump(&|x| comp_fn.jump_at(x));
        accumulate_product_integral(
            &timeline,
            &complement,
            &mut rhs_values,
            &mut rhs_pres,
            ProductIntegrand::Stochastic {
                brownian_coef: comp_fn.at_zero(),
                jump: &comp_fn,
                drift_rate: -jump_rate,
            },
        );

        if subset.len() >= 2 {
            let head = &subset[..subset.len() - 1];
            let last = *subset.last().unwrap();
            let bracket_fn = family.compensated_product(head);
            let rate = crate::measure::mu_inner(&bracket_fn, family.function(last), family.mu())?;
            accumulate_product_integral(
                &timeline,
                &complement,
                &mut rhs_values,
                &mut rhs_pres,
                ProductIntegrand::Lebesgue { rate },
            );
        }
    }

    let mut gap = 0.0_f64;
    for i in 0..n_pts {
        gap = gap.max((lhs.value(i) - rhs_values[i]).abs());
        gap = gap.max((lhs.pre_value(i) - rhs_pres[i]).abs());
    }
    Ok(gap)
}

enum ProductIntegrand<'a> {
    /// `int (prod X_-) dX^{g}` for a driver with linear dynamics
    Stochastic { brownian_coef: f64, jump: &'a TestFunction, drift_rate: f64 },
    /// `int (prod X_-) c du`
    Lebesgue { rate: f64 },
}

/// Add `int_0^t (prod_k Y^k_{u-}) d(integrator)` to `values`/`pres`, where
/// every `Y^k` is piecewise linear between timeline points (martingale
/// member series are). The interval drift integrates the product polynomial
/// exactly; event masses use the left limits.
fn accumulate_product_integral(
    timeline: &Arc<Timeline>,
    complement: &[&CadlagSeries],
    values: &mut [f64],
    pres: &mut [f64],
    integrand: ProductIntegrand<'_>,
) {
    let times = timeline.times();
    let n_pts = times.len();
    let slopes: Vec<f64> = complement
        .iter()
        .map(|s| s.dynamics().expect("member series carry dynamics").drift_rate)
        .collect();
    let drift_rate = match &integrand {
        ProductIntegrand::Stochastic { drift_rate, .. } => *drift_rate,
        ProductIntegrand::Lebesgue { rate } => *rate,
    };
    let mut running = 0.0;
    let mut poly = vec![0.0_f64; complement.len() + 1];
    for i in 1..n_pts {
        let delta = times[i] - times[i - 1];
        let mut drift = 0.0;
        if drift_rate != 0.0 {
            // product of the linear segments, integrated over (0, delta)
            poly.clear();
            poly.push(1.0);
            for (k, s) in complement.iter().enumerate() {
                let v = s.value(i - 1);
                let r = slopes[k];
                poly.push(0.0);
                for j in (0..poly.len() - 1).rev() {
                    let p = poly[j];
                    poly[j + 1] += p * r;
                    poly[j] = p * v;
                }
            }
            let mut anti = 0.0;
            for (j, c) in poly.iter().enumerate().rev() {
                anti = anti * delta + c / (j as f64 + 1.0);
            }
            drift = drift_rate * anti * delta;
        }
        running += drift;
        pres[i] += running;
        if let ProductIntegrand::Stochastic { brownian_coef, jump, .. } = &integrand {
            let dw = timeline.brownian_increment(i);
            let xj = timeline.jump_size(i);
            if dw != 0.0 || xj != 0.0 {
                let h: f64 = complement.iter().map(|s| s.pre_value(i)).product();
                let mut mass = 0.0;
                if dw != 0.0 {
                    mass += h * brownian_coef * dw;
                }
                if xj != 0.0 {
                    mass += h * jump.jump_at(xj);
                }
                running += mass;
            }
        }
        values[i] += running;
    }
}

// ---------------------------------------------------------------------------
// Multiple vs iterated integrals
// ---------------------------------------------------------------------------

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    heap_permute(&mut cur, n, &mut out);
    out
}

fn heap_permute(cur: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(cur.clone());
        return;
    }
    for i in 0..k {
        heap_permute(cur, k - 1, out);
        if k.is_multiple_of(2) {
            cur.swap(i, k - 1);
        } else {
            cur.swap(0, k - 1);
        }
    }
}

/// The permutation-sum side of the multiple-integral identity: for a
/// permutation `pi = (i_1, ..., i_n)`, slot `l` integrates against the
/// martingale of `g_{i_l}`'s hat image with the time factor whose original
/// index sits at position `l` of the tuple.
fn permuted_spec(pi: &[usize], hat_indices: &[usize], factors: &[StepFunction]) -> IteratedSpec {
    let n = pi.len();
    let mut slot_factor = vec![0usize; n];
    for (k, &i) in pi.iter().enumerate() {
        slot_factor[i] = k;
    }
    let tensor = ElementaryTensor::new(1.0, (0..n).map(|l| factors[slot_factor[l]].clone()).collect());
    let indices = pi.iter().map(|&i| hat_indices[i]).collect();
    IteratedSpec::new(indices, tensor).expect("orders match")
}

fn check_normalized(gs: &[TestFunction], eta: &crate::measure::MuMeasure) -> Result<()> {
    for g in gs {
        let n2 = mu_norm2(g, eta)?;
        if (n2 - 1.0).abs() > 1e-6 {
            return Err(Error::NotNormalized(n2));
        }
    }
    Ok(())
}

/// Pathwise check of the multiple-vs-iterated identity for indicator data
/// with pairwise disjoint time supports `[a_i, b_i)`: the product of the
/// single integrals against the hat-image martingales versus the sum of
/// iterated integrals over all permutations. Returns the sup-norm gap.
pub fn multiple_vs_iterated_disjoint(
    gs: &[TestFunction],
    time_supports: &[(f64, f64)],
    family: &MartingaleFamily,
    path: &LevyPath,
) -> Result<f64> {
    let n = gs.len();
    assert_eq!(n, time_supports.len());
    for (i, a) in time_supports.iter().enumerate() {
        for b in time_supports.iter().skip(i + 1) {
            assert!(a.1 <= b.0 || b.1 <= a.0, "time supports must be disjoint");
        }
    }
    let eta = family.mu().eta();
    check_normalized(gs, &eta)?;
    let hats: Vec<TestFunction> = gs.iter().map(|g| g.hat(family.mu())).collect();
    let hat_family = MartingaleFamily::new(family.triplet().clone(), hats)?;
    let hat_indices: Vec<usize> = (0..n).collect();
    let factors: Vec<StepFunction> =
        time_supports.iter().map(|&(a, b)| StepFunction::indicator(a, b)).collect();

    let mut breaks: Vec<f64> = Vec::new();
    for f in &factors {
        breaks.extend(f.breakpoints());
    }
    let timeline = Timeline::from_path_with_breaks(path, &breaks);
    let series = hat_family.series_all(&timeline)?;

    // left side: product of the single integrals of each time indicator
    let mut lhs: Option<CadlagSeries> = None;
    for (i, f) in factors.iter().enumerate() {
        let spec = IteratedSpec::new(vec![i], ElementaryTensor::new(1.0, vec![f.clone()]))?;
        let j1 = iterate(&spec, &[&series[i]])?;
        lhs = Some(match lhs {
            None => j1,
            Some(acc) => acc.product(&j1)?,
        });
    }
    let lhs = lhs.expect("n >= 1");

    let mut rhs: Option<CadlagSeries> = None;
    for pi in permutations(n) {
        let spec = permuted_spec(&pi, &hat_indices, &factors);
        let refs: Vec<&CadlagSeries> = spec.indices.iter().map(|&j| &series[j]).collect();
        let j = iterate(&spec, &refs)?;
        rhs = Some(match rhs {
            None => j,
            Some(acc) => acc.add(&j)?,
        });
    }
    lhs.sup_gap(&rhs.expect("n >= 1"))
}

/// Mean-square check of the identity for a general step tensor
/// `F_1 (x) ... (x) F_n`: the second moment of the permutation sum is
/// estimated by Monte Carlo and compared against its deterministic value
/// (the pairwise simplex integrals across permutations), which equals the
/// second moment of the multiple integral of `F g_1 (x) ... (x) g_n`.
pub fn multiple_vs_iterated_meansquare(
    gs: &[TestFunction],
    factors: &[StepFunction],
    family: &MartingaleFamily,
    t: f64,
    mc: &McOptions,
) -> Result<MomentCheck> {
    let n = gs.len();
    assert_eq!(n, factors.len());
    let eta = family.mu().eta();
    check_normalized(gs, &eta)?;
    let hats: Vec<TestFunction> = gs.iter().map(|g| g.hat(family.mu())).collect();
    let hat_family = MartingaleFamily::new(family.triplet().clone(), hats)?;
    let hat_indices: Vec<usize> = (0..n).collect();

    let perms = permutations(n);
    let specs: Vec<IteratedSpec> =
        perms.iter().map(|pi| permuted_spec(pi, &hat_indices, factors)).collect();

    let mut reference = 0.0;
    for sa in &specs {
        for sb in &specs {
            let prod = sa.tensor.hadamard(&sb.tensor)?;
            let mut rates = Vec::with_capacity(n);
            for (&a, &b) in sa.indices.iter().zip(&sb.indices) {
                rates.push(hat_family.bracket_rate(a, b)?);
            }
            reference += simplex_integral(&prod, &rates, t);
        }
    }

    let gen = PathGenerator::new(family.triplet(), t, mc.grid_step)?;
    let mut breaks: Vec<f64> = Vec::new();
    for f in factors {
        breaks.extend(f.breakpoints());
    }
    let mut stats = OnlineStats::new();
    for p in 0..mc.n_paths {
        let path = gen.path(path_seed(mc.seed, p as u64));
        let timeline = Timeline::from_path_with_breaks(&path, &breaks);
        let series = hat_family.series_all(&timeline)?;
        let mut total = 0.0;
        for spec in &specs {
            let refs: Vec<&CadlagSeries> = spec.indices.iter().map(|&j| &series[j]).collect();
            total += iterate(spec, &refs)?.terminal();
        }
        stats.push(total * total);
    }
    let estimate = stats.mean();
    let std_error = stats.se();
    Ok(MomentCheck { estimate, std_error, reference, z: z_score(estimate, std_error, reference) })
}

// ---------------------------------------------------------------------------
// Chaos basis and projections
// ---------------------------------------------------------------------------

/// One basis direction of the truncated chaos decomposition: an index tuple
/// into an orthonormal system and a non-decreasing signature of dyadic time
/// cells restricted to the simplex. Distinct elements are L^2-orthogonal:
/// across tuples because some slot pair is mu-orthogonal, across signatures
/// because the restricted supports are disjoint.
#[derive(Debug, Clone, Serialize)]
pub struct ChaosBasisElement {
    pub order: usize,
    pub indices: Vec<usize>,
    pub cells: Vec<usize>,
    /// exact `E[J_b(T)^2]` from the simplex volume of the cell signature
    pub second_moment: f64,
}

/// The truncated chaos basis: all tuples up to `order_cap` over a dyadic
/// partition of `[0, T]` into `2^depth` cells.
pub struct ChaosBasis {
    horizon: f64,
    depth: u32,
    order_cap: usize,
    edges: Vec<f64>,
    elements: Vec<ChaosBasisElement>,
    n_members: usize,
}

impl ChaosBasis {
    pub fn new(system: &OrthonormalSystem, horizon: f64, depth: u32, order_cap: usize) -> Result<Self> {
        if system.gram_residual() > 1e-6 {
            return Err(Error::NotNormalized(system.gram_residual()));
        }
        if system.is_empty() {
            return Err(Error::EmptySystem);
        }
        let k = system.len();
        let cells = 1usize << depth;
        let edges: Vec<f64> = (0..=cells).map(|c| horizon * c as f64 / cells as f64).collect();
        let mut elements = vec![ChaosBasisElement { order: 0, indices: vec![], cells: vec![], second_moment: 1.0 }];
        let mut moment_cache: HashMap<Vec<usize>, f64> = HashMap::new();
        for order in 1..=order_cap {
            let mut idx = vec![0usize; order];
            loop {
                for sig in nondecreasing_signatures(cells, order) {
                    let m = *moment_cache.entry(sig.clone()).or_insert_with(|| {
                        let tensor = cell_tensor(&sig, &edges, horizon);
                        simplex_integral(&tensor, &vec![1.0; order], horizon)
                    });
                    if m < 1e-14 {
                        return Err(Error::IllConditioned(m));
                    }
                    elements.push(ChaosBasisElement {
                        order,
                        indices: idx.clone(),
                        cells: sig,
                        second_moment: m,
                    });
                }
                // next index tuple in lexicographic order
                let mut carry = order;
                while carry > 0 {
                    idx[carry - 1] += 1;
                    if idx[carry - 1] < k {
                        break;
                    }
                    idx[carry - 1] = 0;
                    carry -= 1;
                }
                if carry == 0 {
                    break;
                }
            }
        }
        Ok(Self { horizon, depth, order_cap, edges, elements, n_members: k })
    }

    pub fn elements(&self) -> &[ChaosBasisElement] {
        &self.elements
    }

    pub fn order_cap(&self) -> usize {
        self.order_cap
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn cell_edges(&self) -> &[f64] {
        &self.edges
    }

    /// Drop every element that touches the given member index (used to
    /// emulate an incomplete system).
    pub fn without_member(&self, member: usize) -> ChaosBasis {
        ChaosBasis {
            horizon: self.horizon,
            depth: self.depth,
            order_cap: self.order_cap,
            edges: self.edges.clone(),
            elements: self.elements.iter().filter(|e| !e.indices.contains(&member)).cloned().collect(),
            n_members: self.n_members,
        }
    }

    /// Evaluate every basis integral at the horizon on one path. The member
    /// series must live on a timeline containing the cell edges.
    pub fn eval_all(&self, timeline: &Arc<Timeline>, series: &[CadlagSeries]) -> Result<Vec<f64>> {
        assert_eq!(series.len(), self.n_members);
        let cells = self.edges.len() - 1;
        let k = self.n_members;
        // cell increments X(cell_end-) - X(cell_start) (mass at the horizon
        // belongs to the last cell)
        let mut inc = vec![0.0; k * cells];
        let mut cell_idx = Vec::with_capacity(self.edges.len());
        for &e in &self.edges {
            cell_idx.push(if e == 0.0 {
                0
            } else if e >= self.horizon {
                timeline.len() - 1
            } else {
                timeline.index_of(e).ok_or(Error::PathMismatch)?
            });
        }
        // value-to-value increments: a Brownian step sitting exactly on an
        // edge carries the variance of the interval left of it and belongs
        // to the left cell (jump times a.s. avoid the deterministic edges)
        for (j, s) in series.iter().enumerate() {
            for c in 0..cells {
                inc[j * cells + c] = s.value(cell_idx[c + 1]) - s.value(cell_idx[c]);
            }
        }
        // within-cell second-order integrals for every ordered member pair
        let mut within = vec![0.0; k * k * cells];
        if self.order_cap >= 2 {
            for c in 0..cells {
                let last = c + 1 == cells;
                for j1 in 0..k {
                    for j2 in 0..k {
                        within[(j1 * k + j2) * cells + c] = within_cell_double(
                            timeline,
                            &series[j1],
                            &series[j2],
                            cell_idx[c],
                            cell_idx[c + 1],
                            last,
                        );
                    }
                }
            }
        }

        let mut higher_cache: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
        let mut out = Vec::with_capacity(self.elements.len());
        for el in &self.elements {
            if el.order == 0 {
                out.push(1.0);
                continue;
            }
            let mut v = 1.0;
            let mut a = 0;
            while a < el.order {
                let mut b = a + 1;
                while b < el.order && el.cells[b] == el.cells[a] {
                    b += 1;
                }
                let cell = el.cells[a];
                v *= match b - a {
                    1 => inc[el.indices[a] * cells + cell],
                    2 => within[(el.indices[a] * k + el.indices[a + 1]) * cells + cell],
                    _ => {
                        let key = (cell, el.indices[a..b].to_vec());
                        if let Some(&cached) = higher_cache.get(&key) {
                            cached
                        } else {
                            let r = b - a;
                            let step = self.cell_step(cell);
                            let tensor = ElementaryTensor::new(1.0, vec![step; r]);
                            let spec = IteratedSpec::new(el.indices[a..b].to_vec(), tensor)?;
                            let refs: Vec<&CadlagSeries> =
                                spec.indices.iter().map(|&j| &series[j]).collect();
                            let val = iterate(&spec, &refs)?.terminal();
                            higher_cache.insert(key, val);
                            val
                        }
                    }
                };
                a = b;
            }
            out.push(v);
        }
        Ok(out)
    }

    fn cell_step(&self, cell: usize) -> StepFunction {
        let a = self.edges[cell];
        let b = if cell + 2 == self.edges.len() { self.horizon + 1.0 } else { self.edges[cell + 1] };
        StepFunction::indicator(a.max(0.0), b)
    }
}

fn cell_tensor(sig: &[usize], edges: &[f64], horizon: f64) -> ElementaryTensor {
    let factors = sig
        .iter()
        .map(|&c| {
            let b = if c + 2 == edges.len() { horizon + 1.0 } else { edges[c + 1] };
            StepFunction::indicator(edges[c], b)
        })
        .collect();
    ElementaryTensor::new(1.0, factors)
}

fn nondecreasing_signatures(cells: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; order];
    loop {
        out.push(cur.clone());
        let mut k = order;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if cur[k] + 1 < cells {
                cur[k] += 1;
                for j in k + 1..order {
                    cur[j] = cur[k];
                }
                break;
            }
        }
    }
}

/// `int_cell (X1_{u-} - X1_{start}) dX2_u` with the trapezoid rule on the
/// (piecewise linear) drift, which is exact. Brownian masses on the right
/// edge belong to this cell, jump masses there to the next one; when
/// `include_end` is set (last cell) the right edge is fully inside.
fn within_cell_double(
    timeline: &Arc<Timeline>,
    x1: &CadlagSeries,
    x2: &CadlagSeries,
    ia: usize,
    ib: usize,
    include_end: bool,
) -> f64 {
    let d2 = x2.dynamics().expect("member series carry dynamics");
    let times = timeline.times();
    let base = x1.value(ia);
    let mut acc = 0.0;
    for i in ia + 1..=ib {
        let delta = times[i] - times[i - 1];
        if d2.drift_rate != 0.0 {
            let mid = 0.5 * ((x1.value(i - 1) - base) + (x1.pre_value(i) - base));
            acc += d2.drift_rate * mid * delta;
        }
        let dw = timeline.brownian_increment(i);
        if dw != 0.0 {
            acc += (x1.pre_value(i) - base) * d2.brownian_coef * dw;
        }
        if i < ib || include_end {
            let xj = timeline.jump_size(i);
            if xj != 0.0 {
                acc += (x1.pre_value(i) - base) * (d2.jump)(xj);
            }
        }
    }
    acc
}

/// A simulated path together with the member series of the projected family.
pub struct PathSample<'a> {
    pub path: &'a LevyPath,
    pub timeline: &'a Arc<Timeline>,
    pub member_series: &'a [CadlagSeries],
}

impl PathSample<'_> {
    pub fn member_terminal(&self, j: usize) -> f64 {
        self.member_series[j].terminal()
    }
}

/// Projection coefficients of one target functional.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub order: usize,
    pub indices: Vec<usize>,
    pub cells: Vec<usize>,
    pub coefficient: f64,
    pub std_error: f64,
    pub second_moment: f64,
}

/// Residual of the truncation at each order cap. `residual2` is the raw
/// out-of-sample `E[(target - proj)^2]`; it sits above the true squared
/// residual by the coefficient-estimation noise `sum se_b^2 E[J_b^2]`, which
/// is reported as `noise_floor` so that `residual2 - noise_floor` is an
/// unbiased estimate. `std_error` combines the path-sampling error with the
/// dispersion of the floor subtraction, so `corrected() / std_error` is an
/// honest z-score.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualRow {
    pub order_cap: usize,
    pub residual2: f64,
    pub noise_floor: f64,
    pub std_error: f64,
}

impl ResidualRow {
    /// Noise-corrected squared residual.
    pub fn corrected(&self) -> f64 {
        self.residual2 - self.noise_floor
    }
}

/// Full projection study of a target functional onto the chaos basis.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionReport {
    pub target: String,
    pub order_cap: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub target_second_moment: f64,
    pub target_second_moment_se: f64,
    pub coefficients: Vec<CoefficientRow>,
    pub residuals: Vec<ResidualRow>,
}

impl ProjectionReport {
    /// `sum c_b^2 E[J_b^2]`, the explained energy (Bessel bound).
    pub fn explained_energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.coefficient * c.coefficient * c.second_moment).sum()
    }

    pub fn residual_at(&self, order: usize) -> Option<&ResidualRow> {
        self.residuals.iter().find(|r| r.order_cap == order)
    }
}

/// Project a target functional onto the chaos basis: coefficients
/// `c_b = E[target J_b] / E[J_b^2]` with exact denominators, then a second
/// pass over the same seeded paths estimates the squared residual of every
/// truncation order directly as `E[(target - proj)^2]`.
pub fn chaos_coefficients(
    target: &dyn Fn(&PathSample<'_>) -> f64,
    target_name: &str,
    basis: &ChaosBasis,
    family: &MartingaleFamily,
    mc: &McOptions,
) -> Result<ProjectionReport> {
    let gen = PathGenerator::new(family.triplet(), basis.horizon, mc.grid_step)?;
    let interior: Vec<f64> = basis.edges[1..basis.edges.len() - 1].to_vec();
    let n_el = basis.elements.len();

    let mut numerators = vec![OnlineStats::new(); n_el];
    let mut target_sq = OnlineStats::new();
    for p in 0..mc.n_paths {
        let path = gen.path(path_seed(mc.seed, p as u64));
        let timeline = Timeline::from_path_with_breaks(&path, &interior);
        let series = family.series_all(&timeline)?;
        let sample = PathSample { path: &path, timeline: &timeline, member_series: &series };
        let y = target(&sample);
        target_sq.push(y * y);
        let js = basis.eval_all(&timeline, &series)?;
        for (stat, j) in numerators.iter_mut().zip(&js) {
            stat.push(y * j);
        }
    }

    let coefficients: Vec<CoefficientRow> = basis
        .elements
        .iter()
        .zip(&numerators)
        .map(|(el, stat)| CoefficientRow {
            order: el.order,
            indices: el.indices.clone(),
            cells: el.cells.clone(),
            coefficient: stat.mean() / el.second_moment,
            std_error: stat.se() / el.second_moment,
            second_moment: el.second_moment,
        })
        .collect();

    // second pass on an independent seed stream: out-of-sample residuals
    // per truncation order
    let oos_seed = mc.seed ^ 0x9E37_79B9_7F4A_7C15;
    let mut residual_stats = vec![OnlineStats::new(); basis.order_cap + 1];
    for p in 0..mc.n_paths {
        let path = gen.path(path_seed(oos_seed, p as u64));
        let timeline = Timeline::from_path_with_breaks(&path, &interior);
        let series = family.series_all(&timeline)?;
        let sample = PathSample { path: &path, timeline: &timeline, member_series: &series };
        let y = target(&sample);
        let js = basis.eval_all(&timeline, &series)?;
        for (cap, stat) in residual_stats.iter_mut().enumerate() {
            let proj: f64 = coefficients
                .iter()
                .zip(&js)
                .filter(|(c, _)| c.order <= cap)
                .map(|(c, j)| c.coefficient * j)
                .sum();
            let r = y - proj;
            stat.push(r * r);
        }
    }
    let residuals = residual_stats
        .iter()
        .enumerate()
        .map(|(cap, s)| {
            let mut noise_floor = 0.0;
            let mut floor_var = 0.0;
            for c in coefficients.iter().filter(|c| c.order <= cap) {
                let term = c.std_error * c.std_error * c.second_moment;
                noise_floor += term;
                floor_var += 2.0 * term * term;
            }
            ResidualRow {
                order_cap: cap,
                residual2: s.mean(),
                noise_floor,
                std_error: (s.se() * s.se() + floor_var).sqrt(),
            }
        })
        .collect();

    Ok(ProjectionReport {
        target: target_name.to_string(),
        order_cap: basis.order_cap,
        n_paths: mc.n_paths,
        seed: mc.seed,
        target_second_moment: target_sq.mean(),
        target_second_moment_se: target_sq.se(),
        coefficients,
        residuals,
    })
}

/// One row of a convergence study table.
#[derive(Debug, Clone, Serialize)]
pub struct CrpRow {
    pub n_paths: usize,
    pub order_cap: usize,
    pub residual2: f64,
    pub noise_floor: f64,
    pub std_error: f64,
}

/// Residual-vs-order table across Monte Carlo sizes.
pub fn crp_convergence_study(
    target: &dyn Fn(&PathSample<'_>) -> f64,
    target_name: &str,
    basis: &ChaosBasis,
    family: &MartingaleFamily,
    base: &McOptions,
    sizes: &[usize],
) -> Result<Vec<CrpRow>> {
    let mut rows = Vec::new();
    for (k, &n_paths) in sizes.iter().enumerate() {
        let mc = McOptions { n_paths, seed: base.seed.wrapping_add(k as u64), grid_step: base.grid_step };
        let report = chaos_coefficients(target, target_name, basis, family, &mc)?;
        for r in &report.residuals {
            rows.push(CrpRow {
                n_paths,
                order_cap: r.order_cap,
                residual2: r.residual2,
                noise_floor: r.noise_floor,
                std_error: r.std_error,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{gram_schmidt, JumpMeasure, LevyTriplet, TestFunction, DROP_TOL};
    use crate::path::simulate_levy;
    use approx::assert_relative_eq;

    fn poisson_family(rate: f64) -> MartingaleFamily {
        let triplet = LevyTriplet::new(0.0, 0.0, JumpMeasure::atomic(vec![(1.0, rate)]).unwrap()).unwrap();
        let mu = triplet.mu();
        // x and x^2 = x on unit jumps: the family {x} is closed
        let f = TestFunction::new(0.0, |x| x, "x", &mu);
        MartingaleFamily::new(triplet, vec![f]).unwrap()
    }

    #[test]
    fn product_formula_single_factor_is_identity() {
        let family = poisson_family(1.0);
        let path = simulate_levy(family.triplet(), 1.0, 1.0, 2).unwrap();
        let gap = product_formula_check(&[0], &family, &path).unwrap();
        assert!(gap <= 1e-14, "gap = {gap}");
    }

    #[test]
    fn product_formula_square_of_compensated_poisson() {
        let family = poisson_family(1.0);
        for seed in 0..20 {
            let path = simulate_levy(family.triplet(), 1.0, 1.0, 100 + seed).unwrap();
            let gap = product_formula_check(&[0, 0], &family, &path).unwrap();
            assert!(gap <= 1e-12, "seed {seed}: gap = {gap}");
        }
    }

    #[test]
    fn product_formula_two_gaussian_members() {
        let triplet = LevyTriplet::new(0.0, 1.0, JumpMeasure::empty()).unwrap();
        let mu = triplet.mu();
        let f = TestFunction::indicator_zero();
        let g = TestFunction::new(0.5, |_| 0.0, "0.5*1{0}", &mu);
        let family = MartingaleFamily::new(triplet, vec![f, g]).unwrap();
        let path = simulate_levy(family.triplet(), 1.0, 1e-4, 7).unwrap();
        let gap = product_formula_check(&[0, 1], &family, &path).unwrap();
        assert!(gap <= 5e-2, "gap = {gap}");
    }

    #[test]
    fn permutation_identity_disjoint_supports() {
        // pure jump model with two atoms; g normalized in L^2(eta)
        let triplet = LevyTriplet::new(0.0, 0.0, JumpMeasure::atomic(vec![(1.0, 1.0), (2.0, 0.5)]).unwrap()).unwrap();
        let mu = triplet.mu();
        let eta = mu.eta();
        let g_raw = TestFunction::new(0.0, |_| 1.0, "1", &eta);
        let n2 = mu_norm2(&g_raw, &eta).unwrap();
        let g = TestFunction::linear_combination(&[n2.powf(-0.5)], &[g_raw], &eta);
        let family = MartingaleFamily::new(triplet, vec![]).unwrap();
        for seed in 0..20 {
            let path = simulate_levy(family.triplet(), 1.0, 1.0, 300 + seed).unwrap();
            let gap = multiple_vs_iterated_disjoint(
                &[g.clone(), g.clone()],
                &[(0.0, 0.4), (0.4, 1.0)],
                &family,
                &path,
            )
            .unwrap();
            assert!(gap <= 1e-12, "seed {seed}: gap = {gap}");
        }
    }

    #[test]
    fn permutation_identity_single_factor() {
        let triplet = LevyTriplet::new(0.0, 0.0, JumpMeasure::atomic(vec![(1.0, 2.0)]).unwrap()).unwrap();
        let mu = triplet.mu();
        let eta = mu.eta();
        let g_raw = TestFunction::new(0.0, |_| 1.0, "1", &eta);
        let n2 = mu_norm2(&g_raw, &eta).unwrap();
        let g = TestFunction::linear_combination(&[n2.powf(-0.5)], &[g_raw], &eta);
        let family = MartingaleFamily::new(triplet, vec![]).unwrap();
        let path = simulate_levy(family.triplet(), 1.0, 1.0, 5).unwrap();
        let gap = multiple_vs_iterated_disjoint(&[g], &[(0.0, 1.0)], &family, &path).unwrap();
        assert!(gap <= 1e-14, "gap = {gap}");
    }

    #[test]
    fn permutation_identity_disjoint_supports_with_brownian_part() {
        let triplet = LevyTriplet::new(0.0, 1.0, JumpMeasure::atomic(vec![(1.0, 1.0)]).unwrap()).unwrap();
        let mu = triplet.mu();
        let eta = mu.eta();
        let g_raw = TestFunction::new(1.0, |_| 1.0, "1{0}+1", &eta);
        let n2 = mu_norm2(&g_raw, &eta).unwrap();
        let g = TestFunction::linear_combination(&[n2.powf(-0.5)], &[g_raw], &eta);
        let family = MartingaleFamily::new(triplet, vec![]).unwrap();
        let path = simulate_levy(family.triplet(), 1.0, 1e-4, 77).unwrap();
        let gap = multiple_vs_iterated_disjoint(
            &[g.clone(), g],
            &[(0.0, 0.5), (0.5, 1.0)],
            &family,
            &path,
        )
        .unwrap();
        // only discretization of the Brownian component remains
        assert!(gap <= 5e-2, "gap = {gap}");
    }

    #[test]
    fn meansquare_reference_for_symmetric_flat_tensor() {
        // n = 2, F = 1, g1 = g2: E[(sum_pi J)^2] = 4 * t^2/2 at unit rates
        let triplet = LevyTriplet::new(0.0, 0.0, JumpMeasure::atomic(vec![(1.0, 1.0)]).unwrap()).unwrap();
        let mu = triplet.mu();
        let eta = mu.eta();
        let g_raw = TestFunction::new(0.0, |_| 1.0, "1", &eta);
        let n2 = mu_norm2(&g_raw, &eta).unwrap();
        let g = TestFunction::linear_combination(&[n2.powf(-0.5)], &[g_raw], &eta);
        let family = MartingaleFamily::new(triplet, vec![]).unwrap();
        let mc = McOptions::new(20_000, 99, 1.0);
        let check = multiple_vs_iterated_meansquare(
            &[g.clone(), g],
            &[StepFunction::one(), StepFunction::one()],
            &family,
            1.0,
            &mc,
        )
        .unwrap();
        assert_relative_eq!(check.reference, 2.0, max_relative = 1e-12);
        assert!(check.z.abs() <= 3.5, "z = {}", check.z);
    }

    fn simple_levy_basis(depth: u32, cap: usize) -> (MartingaleFamily, ChaosBasis) {
        let triplet = LevyTriplet::new(0.0, 1.0, JumpMeasure::atomic(vec![(1.0, 2.0)]).unwrap()).unwrap();
        let mu = triplet.mu();
        let h1 = TestFunction::new(1.0, |x| x, "1{0}+x", &mu);
        let h2 = TestFunction::new(0.0, |x| x * x, "x^2", &mu);
        let onb = gram_schmidt(&[h1, h2], &mu, DROP_TOL).unwrap();
        let basis = ChaosBasis::new(&onb, 1.0, depth, cap).unwrap();
        let family = MartingaleFamily::from_orthonormal(triplet, &onb).unwrap();
        (family, basis)
    }

    #[test]
    fn basis_evaluation_matches_direct_iterate() {
        let (family, basis) = simple_levy_basis(2, 2);
        let gen = PathGenerator::new(family.triplet(), 1.0, 0.05).unwrap();
        let interior: Vec<f64> = basis.cell_edges()[1..basis.cell_edges().len() - 1].to_vec();
        for seed in 0..10 {
            let path = gen.path(path_seed(12345, seed));
            let timeline = Timeline::from_path_with_breaks(&path, &interior);
            let series = family.series_all(&timeline).unwrap();
            let fast = basis.eval_all(&timeline, &series).unwrap();
            for (el, &v) in basis.elements().iter().zip(&fast) {
                if el.order == 0 {
                    assert_eq!(v, 1.0);
                    continue;
                }
                let tensor = cell_tensor(&el.cells, basis.cell_edges(), 1.0);
                let spec = IteratedSpec::new(el.indices.clone(), tensor).unwrap();
                let refs: Vec<&CadlagSeries> = spec.indices.iter().map(|&j| &series[j]).collect();
                let direct = iterate(&spec, &refs).unwrap().terminal();
                assert_relative_eq!(v, direct, epsilon = 1e-10, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn constant_target_projects_onto_order_zero() {
        let (family, basis) = simple_levy_basis(2, 1);
        let mc = McOptions::new(2_000, 7, 0.25);
        let report = chaos_coefficients(&|_| 1.0, "1", &basis, &family, &mc).unwrap();
        assert_relative_eq!(report.coefficients[0].coefficient, 1.0, epsilon = 1e-12);
        for r in &report.residuals {
            assert!(
                r.corrected().abs() <= 3.0 * r.std_error + 1e-15,
                "order {} corrected residual {} vs se {}",
                r.order_cap,
                r.corrected(),
                r.std_error
            );
        }
    }

    #[test]
    fn compensated_poisson_target_is_order_one() {
        let triplet = LevyTriplet::new(0.0, 0.0, JumpMeasure::atomic(vec![(1.0, 1.0)]).unwrap()).unwrap();
        let mu = triplet.mu();
        let f = TestFunction::new(0.0, |x| x, "x", &mu);
        let onb = gram_schmidt(&[f], &mu, DROP_TOL).unwrap();
        let family = MartingaleFamily::from_orthonormal(triplet, &onb).unwrap();
        let basis = ChaosBasis::new(&onb, 1.0, 1, 1).unwrap();
        let mc = McOptions::new(5_000, 21, 1.0);
        // target = the (normalized) member itself at T
        let report =
            chaos_coefficients(&|s: &PathSample<'_>| s.member_terminal(0), "Nbar", &basis, &family, &mc).unwrap();
        // order-1 coefficients all 1 (cell indicators sum to the full increment)
        for c in report.coefficients.iter().filter(|c| c.order == 1) {
            assert!((c.coefficient - 1.0).abs() <= 3.0 * c.std_error.max(1e-9), "c = {}", c.coefficient);
        }
        let r1 = report.residual_at(1).unwrap();
        assert!(
            r1.corrected() <= 3.0 * r1.std_error,
            "corrected residual {} vs se {}",
            r1.corrected(),
            r1.std_error
        );
    }
}
