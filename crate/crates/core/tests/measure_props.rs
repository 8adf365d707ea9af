//! Property tests for the L^2(mu) geometry on random atomic measures.

use levychaos::{
    gram_schmidt, mu_inner, mu_norm2, JumpMeasure, MuMeasure, TestFunction, DROP_TOL,
    GRAM_RESIDUAL_TOL,
};
use proptest::prelude::*;

/// Random atomic measure with well-separated atoms plus coordinate vectors
/// for functions on it.
fn measure_strategy() -> impl Strategy<Value = (f64, Vec<(f64, f64)>)> {
    (
        prop_oneof![Just(0.0), 0.2f64..2.0],
        prop::collection::vec((0.1f64..0.45, 0.2f64..3.0, any::<bool>()), 1..5),
    )
        .prop_map(|(sigma2, raw)| {
            let atoms = raw
                .into_iter()
                .enumerate()
                .map(|(i, (off, w, neg))| {
                    let x = (0.5 + i as f64) + off;
                    (if neg { -x } else { x }, w)
                })
                .collect();
            (sigma2, atoms)
        })
}

fn coord_fn(atoms: &[(f64, f64)], at_zero: f64, values: Vec<f64>, mu: &MuMeasure) -> TestFunction {
    let locs: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    TestFunction::new(
        at_zero,
        move |x| locs.iter().position(|&a| a == x).map(|i| values[i]).unwrap_or(0.0),
        "coord",
        mu,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn inner_product_bilinear_and_symmetric(
        (sigma2, atoms) in measure_strategy(),
        fz in -2.0f64..2.0, gz in -2.0f64..2.0, hz in -2.0f64..2.0,
        a in -3.0f64..3.0, b in -3.0f64..3.0,
        fv in prop::collection::vec(-2.0f64..2.0, 4),
        gv in prop::collection::vec(-2.0f64..2.0, 4),
        hv in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let mu = MuMeasure::new(sigma2, JumpMeasure::atomic(atoms.clone()).unwrap()).unwrap();
        let f = coord_fn(&atoms, fz, fv, &mu);
        let g = coord_fn(&atoms, gz, gv, &mu);
        let h = coord_fn(&atoms, hz, hv, &mu);
        let lin = TestFunction::linear_combination(&[a, b], &[f.clone(), g.clone()], &mu);
        let lhs = mu_inner(&lin, &h, &mu).unwrap();
        let rhs = a * mu_inner(&f, &h, &mu).unwrap() + b * mu_inner(&g, &h, &mu).unwrap();
        let scale = 1.0 + lhs.abs().max(rhs.abs());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        let fg = mu_inner(&f, &g, &mu).unwrap();
        let gf = mu_inner(&g, &f, &mu).unwrap();
        prop_assert!((fg - gf).abs() <= 1e-12 * (1.0 + fg.abs()));
    }

    #[test]
    fn cauchy_schwarz(
        (sigma2, atoms) in measure_strategy(),
        fz in -2.0f64..2.0, gz in -2.0f64..2.0,
        fv in prop::collection::vec(-2.0f64..2.0, 4),
        gv in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let mu = MuMeasure::new(sigma2, JumpMeasure::atomic(atoms.clone()).unwrap()).unwrap();
        let f = coord_fn(&atoms, fz, fv, &mu);
        let g = coord_fn(&atoms, gz, gv, &mu);
        let fg = mu_inner(&f, &g, &mu).unwrap();
        let ff = mu_norm2(&f, &mu).unwrap();
        let gg = mu_norm2(&g, &mu).unwrap();
        prop_assert!(fg * fg <= ff * gg * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn gram_schmidt_residual_span_and_dimension(
        (sigma2, atoms) in measure_strategy(),
        extra in 0usize..3,
        seed_vals in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let mu = MuMeasure::new(sigma2, JumpMeasure::atomic(atoms.clone()).unwrap()).unwrap();
        let dim = mu.l2_dimension().unwrap();
        let n_fn = dim + extra;
        let mut vals = seed_vals.into_iter().cycle();
        let mut sys = Vec::with_capacity(n_fn);
        for _ in 0..n_fn {
            let at_zero = if sigma2 > 0.0 { vals.next().unwrap() } else { 0.0 };
            let values: Vec<f64> = atoms.iter().map(|_| vals.next().unwrap()).collect();
            sys.push(coord_fn(&atoms, at_zero, values, &mu));
        }
        let onb = match gram_schmidt(&sys, &mu, DROP_TOL) {
            Ok(o) => o,
            // a randomly rank-deficient draw (measure zero) may drop everything
            Err(_) => return Ok(()),
        };
        prop_assert!(onb.gram_residual() <= GRAM_RESIDUAL_TOL, "residual {}", onb.gram_residual());
        prop_assert!(onb.len() <= dim);
        if onb.len() == dim {
            // span preservation: each input is recovered from its coefficients
            for f in &sys {
                let coeffs: Vec<f64> = onb
                    .members()
                    .iter()
                    .map(|e| mu_inner(f, e, &mu).unwrap())
                    .collect();
                let recon = TestFunction::linear_combination(&coeffs, onb.members(), &mu);
                let diff = TestFunction::linear_combination(&[1.0, -1.0], &[f.clone(), recon], &mu);
                let err = mu_norm2(&diff, &mu).unwrap().max(0.0).sqrt();
                prop_assert!(err <= 1e-8, "reconstruction error {err}");
            }
        }
    }

    #[test]
    fn hat_map_is_an_isometry(
        (sigma2, atoms) in measure_strategy(),
        gz in -2.0f64..2.0,
        gv in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let mu = MuMeasure::new(sigma2, JumpMeasure::atomic(atoms.clone()).unwrap()).unwrap();
        let eta = mu.eta();
        let g = coord_fn(&atoms, gz, gv, &eta);
        let hat = g.hat(&mu);
        let n_eta = mu_norm2(&g, &eta).unwrap();
        let n_mu = mu_norm2(&hat, &mu).unwrap();
        prop_assert!((n_eta - n_mu).abs() <= 1e-10 * (1.0 + n_eta), "{n_eta} vs {n_mu}");
    }
}
