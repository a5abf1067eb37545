mod common;

use common::*;
use mmflow::transport::{wasserstein, wasserstein_1d};
use mmflow::{DiscreteMeasure, Error, MetricMeasureSpace};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_is_a_coupling_with_certificate(
        (space, a, b) in (2usize..9).prop_flat_map(|n| (plane(n), probability(n), probability(n))),
        p in 1.0f64..3.0,
    ) {
        let w = wasserstein(&space, &a, &b, p).unwrap();
        for (r, x) in w.plan.row_sums().iter().zip(a.weights()) {
            prop_assert!((r - x).abs() <= 1e-9);
        }
        for (c, y) in w.plan.col_sums().iter().zip(b.weights()) {
            prop_assert!((c - y).abs() <= 1e-9);
        }
        prop_assert!(w.plan.plan.iter().flatten().all(|&g| g >= 0.0));
        prop_assert!((w.plan.cost - w.dual_value).abs() <= 1e-10);
        for i in 0..space.len() {
            for j in 0..space.len() {
                prop_assert!(w.phi[i] + w.psi[j] <= space.dist(i, j).powf(p) + 1e-9);
            }
        }
    }

    #[test]
    fn line_matches_quantile_coupling(
        (x, a, b) in (2usize..12).prop_flat_map(|n| {
            (prop::collection::btree_set(-100i32..100, n), probability(n), probability(n))
        }),
        p in 1.0f64..3.0,
    ) {
        let x: Vec<f64> = x.into_iter().map(|v| v as f64 / 10.0).collect();
        prop_assume!(x.len() == a.len());
        let space = MetricMeasureSpace::line(&x, vec![1.0; x.len()]).unwrap();
        let lp = wasserstein(&space, &a, &b, p).unwrap().distance;
        prop_assert!((lp - wasserstein_1d(&x, &a, &b, p).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn wp_is_a_metric_and_monotone_in_p(
        (space, a, b, c) in (2usize..8).prop_flat_map(|n| (plane(n), probability(n), probability(n), probability(n))),
    ) {
        let w = |x: &DiscreteMeasure, y: &DiscreteMeasure, p: f64| wasserstein(&space, x, y, p).unwrap().distance;
        prop_assert!(w(&a, &a, 2.0) <= 1e-12);
        prop_assert!((w(&a, &b, 2.0) - w(&b, &a, 2.0)).abs() <= 1e-9);
        prop_assert!(w(&a, &c, 2.0) <= w(&a, &b, 2.0) + w(&b, &c, 2.0) + 1e-9);
        prop_assert!(w(&a, &b, 1.0) <= w(&a, &b, 2.0) + 1e-9);
    }
}

#[test]
fn dirac_distance_is_the_metric() {
    let space = MetricMeasureSpace::from_rows(&[vec![0.0, 3.0], vec![3.0, 0.0]], vec![1.0, 1.0]).unwrap();
    let w = wasserstein(&space, &DiscreteMeasure::dirac(2, 0), &DiscreteMeasure::dirac(2, 1), 2.5).unwrap();
    assert!((w.distance - 3.0).abs() < 1e-12);
}

#[test]
fn mass_preconditions() {
    let space = MetricMeasureSpace::cycle(3, 3.0).unwrap();
    let a = DiscreteMeasure::new(vec![1.0, 0.0, 0.0]).unwrap();
    let b = DiscreteMeasure::new(vec![0.0, 0.0, 2.0]).unwrap();
    assert!(matches!(wasserstein(&space, &a, &b, 2.0), Err(Error::MassMismatch { .. })));
    let z = DiscreteMeasure::zeros(3);
    assert!(matches!(wasserstein(&space, &z, &z, 2.0), Err(Error::ZeroMass)));
}
