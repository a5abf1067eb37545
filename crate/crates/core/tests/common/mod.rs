#![allow(dead_code)]

use mmflow::{DiscreteMeasure, MetricMeasureSpace};
use proptest::prelude::*;

/// Weights in `[0, 3)`, about a third of them exactly zero.
pub fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 2 => 0.01f64..3.0], n)
}

pub fn measure(n: usize) -> impl Strategy<Value = DiscreteMeasure> {
    weights(n).prop_map(|w| DiscreteMeasure::new(w).unwrap())
}

pub fn nonzero_measure(n: usize) -> impl Strategy<Value = DiscreteMeasure> {
    measure(n).prop_filter("nonzero", |m| m.mass() > 0.0)
}

pub fn probability(n: usize) -> impl Strategy<Value = DiscreteMeasure> {
    nonzero_measure(n).prop_map(|m| m.normalized().unwrap())
}

/// Euclidean distances between random points in the plane.
pub fn plane(n: usize) -> impl Strategy<Value = MetricMeasureSpace> {
    prop::collection::vec((0.0f64..2.0, 0.0f64..2.0), n).prop_filter_map("distinct points", |pts| {
        let rows: Vec<Vec<f64>> =
            pts.iter().map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect()).collect();
        MetricMeasureSpace::from_rows(&rows, vec![1.0; pts.len()]).ok()
    })
}
