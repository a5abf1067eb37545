use mmflow::heat::{
    curvature_lower_bound, cycle_generator, dirichlet_energy, gamma, gamma2, heat_apply, heat_dual, ou_generator, r_k,
    Generator,
};
use mmflow::{DiscreteMeasure, MetricMeasureSpace};
use proptest::prelude::*;

/// Random reversible chain: symmetric conductances over random reference weights.
fn chain() -> impl Strategy<Value = Generator> {
    (2usize..8).prop_flat_map(|n| {
        (prop::collection::vec(0.2f64..3.0, n), prop::collection::vec(0.0f64..2.0, n * n)).prop_map(move |(m, c)| {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut row: Vec<f64> = (0..n)
                        .map(|j| if i == j { 0.0 } else { (c[i.min(j) * n + i.max(j)] + 0.05) / m[i] })
                        .collect();
                    row[i] = -row.iter().sum::<f64>();
                    row
                })
                .collect();
            let dist: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
            Generator::from_rows(&rows, MetricMeasureSpace::from_rows(&dist, m).unwrap()).unwrap()
        })
    })
}

fn with_function() -> impl Strategy<Value = (Generator, Vec<f64>)> {
    chain().prop_flat_map(|g| {
        let n = g.len();
        (Just(g), prop::collection::vec(-2.0f64..2.0, n))
    })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn semigroup_law((g, f) in with_function(), s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let a = heat_apply(&g, s + t, &f).unwrap();
        let b = heat_apply(&g, s, &heat_apply(&g, t, &f).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn markov_contraction((g, f) in with_function(), t in 0.0f64..3.0) {
        let pf = heat_apply(&g, t, &f).unwrap();
        prop_assert!(sup(&pf) <= sup(&f) + 1e-12);
        let m = g.space().weights();
        let l1 = |v: &[f64]| v.iter().zip(m).map(|(a, w)| a.abs() * w).sum::<f64>();
        prop_assert!(l1(&pf) <= l1(&f) + 1e-10);
        let ones = heat_apply(&g, t, &vec![1.0; g.len()]).unwrap();
        prop_assert!(ones.iter().all(|v| (v - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn dual_flow_conserves_mass((g, f) in with_function(), t in 0.0f64..3.0) {
        let mu = DiscreteMeasure::new(f.iter().map(|v| v.abs()).collect()).unwrap();
        let nu = heat_dual(&g, t, &mu).unwrap();
        prop_assert!((nu.mass() - mu.mass()).abs() <= 1e-12 * mu.mass().max(1.0));
        let fixed = heat_dual(&g, t, &g.space().reference_measure()).unwrap();
        for (a, b) in fixed.weights().iter().zip(g.space().weights()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn energy_identity((g, f) in with_function()) {
        let m = g.space().weights();
        let lf = g.apply(&f);
        let e = -0.5 * f.iter().zip(&lf).zip(m).map(|((a, b), w)| a * b * w).sum::<f64>();
        prop_assert!((dirichlet_energy(&g, &f) - e).abs() <= 1e-10 * e.abs().max(1.0));
        prop_assert!(gamma(&g, &f, &f).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn curvature_bound_holds_pointwise((g, f) in with_function()) {
        let k = curvature_lower_bound(&g);
        prop_assume!(k.is_finite());
        let g2 = gamma2(&g, &f);
        let g1 = gamma(&g, &f, &f);
        for (a, b) in g2.iter().zip(&g1) {
            prop_assert!(a - k * b >= -1e-9 * (1.0 + b.abs() * k.abs()));
        }
    }
}

#[test]
fn r_k_limits() {
    assert!((r_k(0.0, 0.3).unwrap() - 0.6).abs() < 1e-15);
    assert_eq!(r_k(f64::NEG_INFINITY, 0.3).unwrap(), 0.0);
    let small = r_k(1e-9, 0.3).unwrap();
    assert!((small - 0.6).abs() < 1e-9);
    assert!(r_k(1.0, -0.1).is_err());
}

#[test]
fn model_curvatures() {
    let k = curvature_lower_bound(&cycle_generator(40, std::f64::consts::TAU).unwrap());
    assert!(k.abs() <= 0.1);
    let k = curvature_lower_bound(&ou_generator(0.1, 4.0).unwrap());
    assert!((0.9..=1.1).contains(&k));
}

#[test]
fn negative_time_is_rejected() {
    let g = cycle_generator(4, 4.0).unwrap();
    assert!(heat_apply(&g, -1.0, &[0.0; 4]).is_err());
}
