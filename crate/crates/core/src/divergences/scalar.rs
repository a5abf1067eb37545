//! Scalar maximization of concave functions on open intervals.
//!
//! A log-stretched grid brackets the maximizer, golden-section refines it.
//! Suprema approached at an open end of the interval are reported with
//! `attained = false`.

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const LOG_MIN: f64 = -45.0;
const LOG_MAX: f64 = 700.0;
const LOG_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMax {
    pub arg: f64,
    pub value: f64,
    pub attained: bool,
}

fn log_offsets(max_log: f64) -> impl Iterator<Item = f64> {
    let steps = ((max_log.min(LOG_MAX) - LOG_MIN) / LOG_STEP).floor().max(0.0) as usize;
    (0..=steps).map(|k| (LOG_MIN + k as f64 * LOG_STEP).exp())
}

fn grid(lo: f64, hi: f64) -> Vec<f64> {
    let anchor = match (lo.is_finite(), hi.is_finite()) {
        (false, false) => 0.0,
        (true, false) => lo + 1.0,
        (false, true) => hi - 1.0,
        (true, true) => 0.5 * (lo + hi),
    };
    let mut pts = vec![anchor];
    for off in log_offsets(LOG_MAX) {
        pts.push(anchor + off);
        pts.push(anchor - off);
    }
    if lo.is_finite() {
        let room = (anchor - lo).ln();
        pts.extend(log_offsets(room).map(|off| lo + off));
    }
    if hi.is_finite() {
        let room = (hi - anchor).ln();
        pts.extend(log_offsets(room).map(|off| hi - off));
    }
    pts.retain(|&x| x.is_finite() && x > lo && x < hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn eval(f: &impl Fn(f64) -> f64, x: f64) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximizes a concave `f` over the open interval `(lo, hi)`; either end may be infinite.
///
/// `xtol` is the relative tolerance on the argument for the golden-section stage.
pub fn maximize_concave(f: impl Fn(f64) -> f64, lo: f64, hi: f64, xtol: f64) -> ScalarMax {
    let pts = grid(lo, hi);
    let vals: Vec<f64> = pts.iter().map(|&x| eval(&f, x)).collect();
    let (j, &best) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is never empty");
    let last = pts.len() - 1;

    if j == 0 || j == last {
        // The supremum sits at an open end of the search interval.
        let (inner, inner2) = if j == 0 { (1, 2) } else { (last - 1, last - 2) };
        let unbounded_side = if j == 0 { lo.is_infinite() } else { hi.is_infinite() };
        if unbounded_side && pts.len() > 2 {
            let d1 = best - vals[inner];
            let d2 = vals[inner] - vals[inner2];
            if d1 > 1e-12 * best.abs().max(1.0) && d1 >= 0.5 * d2 {
                return ScalarMax { arg: pts[j], value: f64::INFINITY, attained: false };
            }
        }
        return ScalarMax { arg: pts[j], value: best, attained: false };
    }

    let (mut a, mut b) = (pts[j - 1], pts[j + 1]);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = eval(&f, x1);
    let mut f2 = eval(&f, x2);
    let mut iters = 0;
    while (b - a) > xtol * x1.abs().max(1.0) && iters < 400 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = eval(&f, x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = eval(&f, x1);
        }
        iters += 1;
    }
    let (arg, value) = [(pts[j], best), (x1, f1), (x2, f2)]
        .into_iter()
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap();
    ScalarMax { arg, value, attained: true }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_quadratic() {
        let r = maximize_concave(|x| -(x - 3.25).powi(2) + 1.0, f64::NEG_INFINITY, f64::INFINITY, 1e-10);
        assert!(r.attained);
        assert!((r.arg - 3.25).abs() < 1e-8);
        assert!((r.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sup_at_open_finite_end() {
        let r = maximize_concave(|x| 2.0 * x, f64::NEG_INFINITY, 1.0, 1e-10);
        assert!(!r.attained);
        assert!((r.value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unbounded_linear_growth_reported_infinite() {
        let r = maximize_concave(|x| 0.5 * x, f64::NEG_INFINITY, f64::INFINITY, 1e-10);
        assert_eq!(r.value, f64::INFINITY);
        assert!(!r.attained);
    }

    #[test]
    fn bounded_asymptote_not_infinite() {
        let r = maximize_concave(|x| 1.0 - (-x).exp(), f64::NEG_INFINITY, f64::INFINITY, 1e-10);
        assert!(!r.attained);
        assert!((r.value - 1.0).abs() < 1e-15);
        let r = maximize_concave(|z| z / (1.0 + z), -1.0, f64::INFINITY, 1e-10);
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn maximizer_near_lower_bound() {
        let r = maximize_concave(|x| -(x + 1.0 - 1e-9).powi(2), -1.0, f64::INFINITY, 1e-12);
        assert!(r.value > -1e-20);
    }
}
