//! Iterated stochastic integrals `J_n` driven by a family of martingales
//! with deterministic brackets that are linear in time.
//!
//! The recursion integrates the left limit of the previous level against the
//! next driver: jump and Brownian-step contributions are summed at the exact
//! event times, and the compensator drift between events is integrated in
//! closed form against a per-interval polynomial carrier, so pure-jump
//! models evaluate without discretization error.

use crate::error::{Error, Result};
use crate::family::MartingaleFamily;
use crate::path::{path_seed, CadlagSeries, PathGenerator, Timeline};
use crate::piecewise;
use crate::stats::{z_score, OnlineStats};
use crate::stepfn::{ElementaryTensor, IteratedSpec};

/// Monte Carlo loop options shared by the statistical checks.
#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub grid_step: f64,
}

impl McOptions {
    pub fn new(n_paths: usize, seed: u64, grid_step: f64) -> Self {
        Self { n_paths, seed, grid_step }
    }
}

/// Outcome of a moment check: Monte Carlo estimate against a deterministic
/// reference.
#[derive(Debug, Clone, Copy)]
pub struct MomentCheck {
    pub estimate: f64,
    pub std_error: f64,
    pub reference: f64,
    pub z: f64,
}

/// Evaluate the iterated integral of `spec` given one driver series per
/// index slot. All series must share one timeline that contains the tensor
/// breakpoints, and must carry linear dynamics (they do when they were built
/// by `martingale_path_on`).
pub fn iterate(spec: &IteratedSpec, series: &[&CadlagSeries]) -> Result<CadlagSeries> {
    let m = spec.order();
    if series.len() != m {
        return Err(Error::OrderMismatch(series.len(), m));
    }
    if m == 0 {
        // order zero: the constant F0 with left limit 0 at the origin
        let tl = series.first().map(|s| s.timeline().clone());
        let tl = tl.ok_or(Error::PathMismatch)?;
        let n = tl.len();
        let mut pres = vec![spec.tensor.f0; n];
        pres[0] = 0.0;
        return Ok(CadlagSeries::from_parts(tl, vec![spec.tensor.f0; n], pres));
    }
    let tl = series[0].timeline().clone();
    for s in series {
        if !std::sync::Arc::ptr_eq(s.timeline(), &tl) {
            return Err(Error::PathMismatch);
        }
        if s.dynamics().is_none() {
            return Err(Error::PathMismatch);
        }
    }
    for b in spec.tensor.breakpoints() {
        if !tl.contains(b) {
            return Err(Error::PathMismatch);
        }
    }

    let times = tl.times();
    let n_pts = times.len();
    let n_segs = n_pts.saturating_sub(1);

    // level 0: constant F0
    let mut prev_pres = vec![spec.tensor.f0; n_pts];
    prev_pres[0] = 0.0;
    let mut prev_stride = 1usize;
    let mut prev_segs = vec![spec.tensor.f0; n_segs];

    let mut values = Vec::new();
    let mut pres = Vec::new();
    for level in 1..=m {
        let driver = series[level - 1];
        let dynamics = driver.dynamics().expect("checked above");
        let factor = &spec.tensor.factors[level - 1];
        let stride = level + 1;
        let mut segs = vec![0.0; n_segs * stride];
        values = vec![0.0; n_pts];
        pres = vec![0.0; n_pts];
        let mut running = 0.0;
        for i in 1..n_pts {
            let left = times[i - 1];
            let delta = times[i] - left;
            let c = factor.eval(left) * dynamics.drift_rate;
            let seg = &mut segs[(i - 1) * stride..i * stride];
            seg[0] = running;
            if c != 0.0 {
                let prev = &prev_segs[(i - 1) * prev_stride..i * prev_stride];
                for (j, &p) in prev.iter().enumerate() {
                    seg[j + 1] = c * p / (j as f64 + 1.0);
                }
            }
            // left limit at times[i]: drift accumulated over the open interval
            let mut pre = 0.0;
            for &cf in seg.iter().rev() {
                pre = pre * delta + cf;
            }
            let mut mass = 0.0;
            let dw = tl.brownian_increment(i);
            let xj = tl.jump_size(i);
            if dw != 0.0 {
                // grid increments carry the mass of (t - dt, t]: weight by
                // the factor's left limit so cells split at grid points
                // receive the variance accumulated inside them
                mass += prev_pres[i] * factor.eval_left(times[i]) * dynamics.brownian_coef * dw;
            }
            if xj != 0.0 {
                mass += prev_pres[i] * factor.eval(times[i]) * (dynamics.jump)(xj);
            }
            pres[i] = pre;
            values[i] = pre + mass;
            running = values[i];
        }
        prev_pres = pres.clone();
        prev_segs = segs;
        prev_stride = stride;
    }
    Ok(CadlagSeries::from_parts(tl, values, pres))
}

/// Build the merged timeline and driver series for `spec` and evaluate it.
pub fn iterate_on_path(
    spec: &IteratedSpec,
    path: &crate::path::LevyPath,
    family: &MartingaleFamily,
) -> Result<CadlagSeries> {
    let tl = Timeline::from_path_with_breaks(path, &spec.tensor.breakpoints());
    let series = family.series_all(&tl)?;
    let refs: Vec<&CadlagSeries> = spec.indices.iter().map(|&j| &series[j]).collect();
    iterate(spec, &refs)
}

/// Exact simplex moment
/// `f0 * int_0^t int_0^{t_n} ... int_0^{t_2} prod_k F_k(t_k) c_k dt_1 ... dt_n`
/// for an elementary tensor with step factors and constant bracket rates
/// `c_k` (slot 1 innermost). For the mixed second moment of two iterated
/// integrals, pass the slot-wise product tensor and `c_k = mu(f_{a_k} f_{b_k})`.
pub fn simplex_integral(tensor: &ElementaryTensor, bracket_rates: &[f64], t: f64) -> f64 {
    assert_eq!(tensor.order(), bracket_rates.len());
    tensor.f0 * piecewise::simplex_integral(&tensor.factors, bracket_rates, t)
}

/// Deterministic second-moment reference `E[J(F)_t J(G)_t]`: zero when the
/// orders differ, otherwise the simplex integral of the product tensor.
pub fn isometry_reference(
    specf: &IteratedSpec,
    specg: &IteratedSpec,
    family: &MartingaleFamily,
    t: f64,
) -> Result<f64> {
    if specf.order() != specg.order() {
        return Ok(0.0);
    }
    let prod = specf.tensor.hadamard(&specg.tensor)?;
    let mut rates = Vec::with_capacity(specf.order());
    for (&a, &b) in specf.indices.iter().zip(&specg.indices) {
        rates.push(family.bracket_rate(a, b)?);
    }
    Ok(simplex_integral(&prod, &rates, t))
}

/// Monte Carlo check of the isometry/orthogonality relations: estimates
/// `E[J(F)_t J(G)_t]` over seeded paths and compares it with the
/// deterministic reference.
pub fn isometry_check(
    specf: &IteratedSpec,
    specg: &IteratedSpec,
    family: &MartingaleFamily,
    t: f64,
    mc: &McOptions,
) -> Result<MomentCheck> {
    let reference = isometry_reference(specf, specg, family, t)?;
    let gen = PathGenerator::new(family.triplet(), t, mc.grid_step)?;
    let mut breaks = specf.tensor.breakpoints();
    breaks.extend(specg.tensor.breakpoints());
    let mut stats = OnlineStats::new();
    for p in 0..mc.n_paths {
        let path = gen.path(path_seed(mc.seed, p as u64));
        let tl = Timeline::from_path_with_breaks(&path, &breaks);
        let series = family.series_all(&tl)?;
        let f_refs: Vec<&CadlagSeries> = specf.indices.iter().map(|&j| &series[j]).collect();
        let g_refs: Vec<&CadlagSeries> = specg.indices.iter().map(|&j| &series[j]).collect();
        let jf = iterate(specf, &f_refs)?.terminal();
        let jg = iterate(specg, &g_refs)?.terminal();
        stats.push(jf * jg);
    }
    let estimate = stats.mean();
    let std_error = stats.se();
    Ok(MomentCheck { estimate, std_error, reference, z: z_score(estimate, std_error, reference) })
}

/// Closed-form references for low-order flat iterated integrals of a
/// martingale with bracket `t`: `J_1 = w`, `J_2 = (w^2 - t)/2`,
/// `J_3 = (w^3 - 3 t w)/6`, where `w` is the martingale value at `t`.
pub fn hermite_reference(n: usize, w: f64, t: f64) -> Result<f64> {
    match n {
        0 => Ok(1.0),
        1 => Ok(w),
        2 => Ok((w * w - t) / 2.0),
        3 => Ok((w * w * w - 3.0 * t * w) / 6.0),
        _ => Err(Error::UnsupportedOrder(n)),
    }
}

/// Closed-form references for low-order flat iterated integrals of a
/// compensated Poisson process: `nbar` is the compensated value and
/// `n_count` the raw count at the same time.
pub fn charlier_style_reference(n: usize, nbar: f64, n_count: f64) -> Result<f64> {
    match n {
        0 => Ok(1.0),
        1 => Ok(nbar),
        2 => Ok((nbar * nbar - n_count) / 2.0),
        3 => Ok((nbar * nbar * nbar - 3.0 * n_count * nbar + 2.0 * n_count) / 6.0),
        _ => Err(Error::UnsupportedOrder(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{JumpMeasure, LevyTriplet, TestFunction};
    use crate::path::simulate_levy;
    use crate::stepfn::StepFunction;
    use approx::assert_relative_eq;

    fn poisson_family(rate: f64) -> MartingaleFamily {
        let triplet = LevyTriplet::new(0.0, 0.0, JumpMeasure::atomic(vec![(1.0, rate)]).unwrap()).unwrap();
        let mu = triplet.mu();
        let f = TestFunction::new(0.0, |x| x, "x", &mu);
        MartingaleFamily::new(triplet, vec![f]).unwrap()
    }

    #[test]
    fn order_one_flat_recovers_driver() {
        let family = poisson_family(2.0);
        let path = simulate_levy(family.triplet(), 1.0, 1.0, 3).unwrap();
        let spec = IteratedSpec::new(vec![0], ElementaryTensor::flat(1)).unwrap();
        let j1 = iterate_on_path(&spec, &path, &family).unwrap();
        let tl = j1.timeline().clone();
        let x = family.series_all(&tl).unwrap().remove(0);
        assert!(j1.sup_gap(&x).unwrap() <= 1e-14);
    }

    #[test]
    fn order_two_flat_matches_charlier_form() {
        let family = poisson_family(1.0);
        let path = simulate_levy(family.triplet(), 1.0, 1.0, 11).unwrap();
        let spec = IteratedSpec::new(vec![0, 0], ElementaryTensor::flat(2)).unwrap();
        let j2 = iterate_on_path(&spec, &path, &family).unwrap();
        let times = j2.times().to_vec();
        for (i, &t) in times.iter().enumerate() {
            let n = path.jumps.iter().filter(|&&(s, _)| s <= t).count() as f64;
            let nbar = n - t;
            let expect = charlier_style_reference(2, nbar, n).unwrap();
            assert_relative_eq!(j2.value(i), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn order_three_flat_matches_charlier_form() {
        let family = poisson_family(1.5);
        let path = simulate_levy(family.triplet(), 1.0, 1.0, 13).unwrap();
        let spec = IteratedSpec::new(vec![0, 0, 0], ElementaryTensor::flat(3)).unwrap();
        let j3 = iterate_on_path(&spec, &path, &family).unwrap();
        let t = 1.0;
        let n = path.jumps.len() as f64;
        let nbar = n - 1.5 * t;
        let expect = charlier_style_reference(3, nbar, n).unwrap();
        assert_relative_eq!(j3.terminal(), expect, epsilon = 1e-11);
    }

    #[test]
    fn brownian_order_two_tracks_ito_formula() {
        let triplet = LevyTriplet::new(0.0, 1.0, JumpMeasure::empty()).unwrap();
        let f = TestFunction::indicator_zero();
        let family = MartingaleFamily::new(triplet, vec![f]).unwrap();
        let spec = IteratedSpec::new(vec![0, 0], ElementaryTensor::flat(2)).unwrap();
        let mut worst = 0.0_f64;
        for seed in 0..50 {
            let path = simulate_levy(family.triplet(), 1.0, 1e-3, 1000 + seed).unwrap();
            let j2 = iterate_on_path(&spec, &path, &family).unwrap();
            let w = *path.brownian.last().unwrap();
            let gap = (j2.terminal() - hermite_reference(2, w, 1.0).unwrap()).abs();
            worst = worst.max(gap);
        }
        // O(sqrt(dt)) pathwise error at dt = 1e-3
        assert!(worst < 0.2, "worst gap {worst}");
    }

    #[test]
    fn multilinearity_in_one_slot() {
        let family = poisson_family(2.0);
        let path = simulate_levy(family.triplet(), 1.0, 1.0, 17).unwrap();
        let a = StepFunction::indicator(0.0, 0.6);
        let b = StepFunction::indicator(0.3, 1.0);
        let sum = a.add(&b);
        let mk = |f: StepFunction| {
            IteratedSpec::new(vec![0, 0], ElementaryTensor::new(1.0, vec![f, StepFunction::one()])).unwrap()
        };
        // shared timeline across the three tensors
        let mut breaks = mk(a.clone()).tensor.breakpoints();
        breaks.extend(mk(b.clone()).tensor.breakpoints());
        let tl = Timeline::from_path_with_breaks(&path, &breaks);
        let series = family.series_all(&tl).unwrap();
        let refs: Vec<&CadlagSeries> = vec![&series[0], &series[0]];
        let ja = iterate(&mk(a), &refs).unwrap();
        let jb = iterate(&mk(b), &refs).unwrap();
        let jsum = iterate(&mk(sum), &refs).unwrap();
        let lin = ja.add(&jb).unwrap();
        assert!(jsum.sup_gap(&lin).unwrap() <= 1e-12);
    }

    #[test]
    fn simplex_reference_values() {
        assert_relative_eq!(
            simplex_integral(&ElementaryTensor::flat(2), &[1.0, 1.0], 1.0),
            0.5,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            simplex_integral(&ElementaryTensor::flat(3), &[1.0; 3], 1.0),
            1.0 / 6.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn closed_form_reference_values() {
        assert_relative_eq!(hermite_reference(2, 0.0, 1.0).unwrap(), -0.5);
        assert_eq!(hermite_reference(1, 0.7, 1.0).unwrap(), 0.7);
        assert_relative_eq!(charlier_style_reference(2, 2.0, 3.0).unwrap(), 0.5);
        assert!(matches!(hermite_reference(4, 0.0, 1.0), Err(Error::UnsupportedOrder(4))));
        assert!(matches!(charlier_style_reference(4, 0.0, 0.0), Err(Error::UnsupportedOrder(4))));
    }

    #[test]
    fn isometry_of_compensated_poisson_order_two() {
        let family = poisson_family(1.0);
        let spec = IteratedSpec::new(vec![0, 0], ElementaryTensor::flat(2)).unwrap();
        let mc = McOptions::new(20_000, 424_242, 1.0);
        let check = isometry_check(&spec, &spec, &family, 1.0, &mc).unwrap();
        assert_relative_eq!(check.reference, 0.5, max_relative = 1e-14);
        assert!(check.z.abs() <= 3.5, "z = {}", check.z);
    }

    #[test]
    fn cross_order_orthogonality() {
        let family = poisson_family(1.0);
        let s1 = IteratedSpec::new(vec![0], ElementaryTensor::flat(1)).unwrap();
        let s2 = IteratedSpec::new(vec![0, 0], ElementaryTensor::flat(2)).unwrap();
        let mc = McOptions::new(20_000, 55, 1.0);
        let check = isometry_check(&s1, &s2, &family, 1.0, &mc).unwrap();
        assert_eq!(check.reference, 0.0);
        assert!(check.z.abs() <= 3.5, "z = {}", check.z);
    }
}
