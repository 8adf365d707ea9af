//! Deterministic stability of the second-moment references: perturbing a
//! family member by delta in L^2(mu) moves E[J_n^2] by O(delta).

use levychaos::suite::simple_levy_orthonormal;
use levychaos::{
    isometry_reference, ElementaryTensor, IteratedSpec, MartingaleFamily, TestFunction,
};

#[test]
fn second_moment_is_lipschitz_in_the_generator() {
    let (family, onb) = simple_levy_orthonormal();
    let mu = family.mu().clone();
    let e1 = onb.members()[0].clone();
    let e2 = onb.members()[1].clone();
    for order in 1..=3usize {
        let spec = IteratedSpec::new(vec![0; order], ElementaryTensor::flat(order)).unwrap();
        let base = isometry_reference(&spec, &spec, &family, 1.0).unwrap();
        let mut last_gap = f64::INFINITY;
        for &delta in &[0.2, 0.1, 0.05, 0.025] {
            let perturbed = TestFunction::linear_combination(&[1.0, delta], &[e1.clone(), e2.clone()], &mu);
            let fam_d =
                MartingaleFamily::new(family.triplet().clone(), vec![perturbed, e2.clone()]).unwrap();
            let moved = isometry_reference(&spec, &spec, &fam_d, 1.0).unwrap();
            let gap = (moved - base).abs();
            // O(delta): bounded by C * delta and decreasing along the sequence
            assert!(gap <= 10.0 * delta, "order {order}, delta {delta}: gap {gap}");
            assert!(gap < last_gap, "order {order}: gap not decreasing at delta {delta}");
            last_gap = gap;
        }
    }
}
