//! Hellinger-Kantorovich distance through the logarithmic entropy-transport problem
//!
//! `HK_α²(μ0, μ1) = min_γ KL(γ0|μ0) + KL(γ1|μ1) + Σ γ_ij ℓ_α(d_ij)`,
//! solved by entropic regularization `+ ε KL(γ | μ0⊗μ1)` and unbalanced
//! Sinkhorn scaling over a decreasing ε schedule. The scaling iterations run on
//! an absorbed kernel and fall back to log-sum-exp when it underflows.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::space::{DiscreteMeasure, MetricMeasureSpace};

/// `ℓ_α(d) = log(1 + tan²(d/√α)) = -2 log cos(d/√α)`, `+∞` beyond `√α π/2`.
pub fn cost_ell(alpha: f64, d: f64) -> f64 {
    let r = d / alpha.sqrt();
    if r < std::f64::consts::FRAC_PI_2 {
        -2.0 * r.cos().ln()
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HkOptions {
    pub epsilon_schedule: Vec<f64>,
    /// Iteration budget for each ε stage.
    pub max_iter: usize,
    /// Stop a stage once no potential moves by more than this.
    pub tol: f64,
}

impl Default for HkOptions {
    fn default() -> Self {
        HkOptions { epsilon_schedule: vec![1e-1, 1e-2, 1e-3, 1e-4], max_iter: 100_000, tol: 1e-8 }
    }
}

impl HkOptions {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon_schedule.is_empty() || self.epsilon_schedule.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidParameter("epsilon_schedule must be a nonempty list of positive numbers".into()));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("max_iter and tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LetSolution {
    pub gamma: Vec<Vec<f64>>,
    /// Unregularized LET objective of `gamma`, an upper bound for `HK_α²`.
    pub value: f64,
    /// `value` minus a feasible dual value; bounds the suboptimality of `value`.
    pub gap_estimate: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LetSolution {
    pub fn distance(&self) -> f64 {
        self.value.max(0.0).sqrt()
    }

    /// Lower bound on `HK_α²` certified by the dual.
    pub fn lower_bound(&self) -> f64 {
        (self.value - self.gap_estimate).max(0.0)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("HK scale needs α > 0, got {alpha}")))
    }
}

fn kl_term(x: f64, mu: f64) -> f64 {
    if x == 0.0 {
        mu
    } else if mu == 0.0 {
        f64::INFINITY
    } else {
        x * (x / mu).ln() - x + mu
    }
}

/// LET objective of an arbitrary nonnegative plan.
pub fn let_objective(
    space: &MetricMeasureSpace,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    alpha: f64,
    gamma: &[Vec<f64>],
) -> Result<f64> {
    check_alpha(alpha)?;
    let n = space.len();
    check_len(n, mu0.len())?;
    check_len(n, mu1.len())?;
    check_len(n, gamma.len())?;
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut transport = 0.0;
    for (i, r) in gamma.iter().enumerate() {
        check_len(n, r.len())?;
        for (j, &x) in r.iter().enumerate() {
            if x < 0.0 || !x.is_finite() {
                return Err(Error::InvalidWeight { index: i * n + j, value: x });
            }
            if x > 0.0 {
                transport += x * cost_ell(alpha, space.dist(i, j));
            }
            row[i] += x;
            col[j] += x;
        }
    }
    let ent: f64 = (0..n).map(|i| kl_term(row[i], mu0.weights()[i]) + kl_term(col[i], mu1.weights()[i])).sum();
    Ok(ent + transport)
}

/// Finite-cost entries between the supports, stored row-major.
struct Sparse {
    rows: Vec<usize>,
    cols: Vec<usize>,
    cost: Vec<f64>,
    row_start: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Sparse {
    fn new(cost: impl Fn(usize, usize) -> f64, a: Vec<f64>, b: Vec<f64>) -> Self {
        let (mut rows, mut cols, mut c) = (vec![], vec![], vec![]);
        let mut row_start = vec![0];
        for i in 0..a.len() {
            for j in 0..b.len() {
                let v = cost(i, j);
                if v.is_finite() {
                    rows.push(i);
                    cols.push(j);
                    c.push(v);
                }
            }
            row_start.push(rows.len());
        }
        Sparse { rows, cols, cost: c, row_start, a, b }
    }
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    mx + it.map(|x| (x - mx).exp()).sum::<f64>().ln()
}

const ABSORB: f64 = 30.0;

/// Unbalanced Sinkhorn state for one ε: potentials `f = F + ε log u`, `g = G + ε log v`.
struct Scaling<'a> {
    sp: &'a Sparse,
    eps: f64,
    big_f: Vec<f64>,
    big_g: Vec<f64>,
    kernel: Vec<f64>,
    log_u: Vec<f64>,
    log_v: Vec<f64>,
}

impl<'a> Scaling<'a> {
    fn new(sp: &'a Sparse, eps: f64, f: &[f64], g: &[f64]) -> Self {
        let mut s = Scaling {
            sp,
            eps,
            big_f: f.to_vec(),
            big_g: g.to_vec(),
            kernel: vec![0.0; sp.cost.len()],
            log_u: vec![0.0; f.len()],
            log_v: vec![0.0; g.len()],
        };
        s.rebuild();
        s
    }

    fn f(&self) -> Vec<f64> {
        self.big_f.iter().zip(&self.log_u).map(|(a, b)| a + self.eps * b).collect()
    }

    fn g(&self) -> Vec<f64> {
        self.big_g.iter().zip(&self.log_v).map(|(a, b)| a + self.eps * b).collect()
    }

    fn absorb(&mut self) {
        self.big_f = self.f();
        self.big_g = self.g();
        self.log_u.fill(0.0);
        self.log_v.fill(0.0);
        self.rebuild();
    }

    fn rebuild(&mut self) {
        let sp = self.sp;
        for e in 0..sp.cost.len() {
            let (i, j) = (sp.rows[e], sp.cols[e]);
            let fi = self.big_f[i];
            let gj = self.big_g[j];
            self.kernel[e] = if fi.is_finite() && gj.is_finite() {
                ((fi + gj - sp.cost[e]) / self.eps).exp() * sp.a[i] * sp.b[j]
            } else {
                0.0
            };
        }
    }

    /// One full row-then-column update; returns the largest potential change.
    fn step(&mut self) -> f64 {
        let sp = self.sp;
        let eps = self.eps;
        let k = 1.0 / (1.0 + eps);
        let mut delta: f64 = 0.0;
        let mut fallback = false;

        let v: Vec<f64> = self.log_v.iter().map(|x| x.exp()).collect();
        for i in 0..sp.a.len() {
            let range = sp.row_start[i]..sp.row_start[i + 1];
            if range.is_empty() {
                self.big_f[i] = f64::INFINITY;
                continue;
            }
            let s: f64 = range.clone().map(|e| self.kernel[e] * v[sp.cols[e]]).sum::<f64>() / sp.a[i];
            let new = if s > 0.0 && s.is_finite() {
                -k * (s.ln() + self.big_f[i])
            } else {
                fallback = true;
                let g = self.g();
                let lse = log_sum_exp(range.map(|e| sp.b[sp.cols[e]].ln() + (g[sp.cols[e]] - sp.cost[e]) / eps));
                (-eps * k * lse - self.big_f[i]) / eps
            };
            delta = delta.max(eps * (new - self.log_u[i]).abs());
            self.log_u[i] = new;
        }

        let u: Vec<f64> = self.log_u.iter().map(|x| x.exp()).collect();
        let mut colsum = vec![0.0; sp.b.len()];
        let mut has = vec![false; sp.b.len()];
        for e in 0..sp.cost.len() {
            colsum[sp.cols[e]] += self.kernel[e] * u[sp.rows[e]];
            has[sp.cols[e]] = true;
        }
        let mut f_cache: Option<Vec<f64>> = None;
        for j in 0..sp.b.len() {
            if !has[j] {
                self.big_g[j] = f64::INFINITY;
                continue;
            }
            let s = colsum[j] / sp.b[j];
            let new = if s > 0.0 && s.is_finite() {
                -k * (s.ln() + self.big_g[j])
            } else {
                fallback = true;
                let f = f_cache.get_or_insert_with(|| self.f());
                let lse = log_sum_exp(
                    (0..sp.cost.len())
                        .filter(|&e| sp.cols[e] == j)
                        .map(|e| sp.a[sp.rows[e]].ln() + (f[sp.rows[e]] - sp.cost[e]) / eps),
                );
                (-eps * k * lse - self.big_g[j]) / eps
            };
            delta = delta.max(eps * (new - self.log_v[j]).abs());
            self.log_v[j] = new;
        }

        let wide = self.log_u.iter().chain(&self.log_v).any(|x| x.abs() > ABSORB);
        if fallback || wide {
            self.absorb();
        }
        delta
    }
}

/// Solves the LET problem for `HK_α²`.
pub fn hk(
    space: &MetricMeasureSpace,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    alpha: f64,
    opts: &HkOptions,
) -> Result<LetSolution> {
    check_alpha(alpha)?;
    opts.validate()?;
    let n = space.len();
    check_len(n, mu0.len())?;
    check_len(n, mu1.len())?;
    let s0: Vec<usize> = (0..n).filter(|&i| mu0.weights()[i] > 0.0).collect();
    let s1: Vec<usize> = (0..n).filter(|&j| mu1.weights()[j] > 0.0).collect();
    let sp = Sparse::new(
        |i, j| cost_ell(alpha, space.dist(s0[i], s1[j])),
        s0.iter().map(|&i| mu0.weights()[i]).collect(),
        s1.iter().map(|&j| mu1.weights()[j]).collect(),
    );

    let mut f = vec![0.0; s0.len()];
    let mut g = vec![0.0; s1.len()];
    let mut iterations = 0;
    let mut converged = sp.cost.is_empty();
    let mut last_eps = opts.epsilon_schedule[0];
    if !sp.cost.is_empty() {
        for &eps in &opts.epsilon_schedule {
            last_eps = eps;
            let mut st = Scaling::new(&sp, eps, &f, &g);
            converged = false;
            for _ in 0..opts.max_iter {
                iterations += 1;
                if st.step() < opts.tol {
                    converged = true;
                    break;
                }
            }
            f = st.f();
            g = st.g();
        }
    }

    let mut gamma = vec![vec![0.0; n]; n];
    for e in 0..sp.cost.len() {
        let (i, j) = (sp.rows[e], sp.cols[e]);
        if f[i].is_finite() && g[j].is_finite() {
            let x = ((f[i] + g[j] - sp.cost[e]) / last_eps).exp() * sp.a[i] * sp.b[j];
            gamma[s0[i]][s1[j]] = x;
        }
    }
    let value = let_objective(space, mu0, mu1, alpha, &gamma)?;
    let dual = dual_bound(&sp, &f, &g);
    Ok(LetSolution { gamma, value, gap_estimate: (value - dual).max(0.0), converged, iterations })
}

/// `Σ a(1 - e^{-φ}) + Σ b(1 - e^{-ψ})` at a pair with `φ_i + ψ_j ≤ c_ij`.
fn dual_objective(sp: &Sparse, phi: &[f64], psi: &[f64]) -> f64 {
    let part = |w: &[f64], p: &[f64]| -> f64 { w.iter().zip(p).map(|(w, p)| w * -(-p).exp_m1()).sum() };
    part(&sp.a, phi) + part(&sp.b, psi)
}

fn c_transform_cols(sp: &Sparse, phi: &[f64]) -> Vec<f64> {
    let mut psi = vec![f64::INFINITY; sp.b.len()];
    for e in 0..sp.cost.len() {
        let v = sp.cost[e] - phi[sp.rows[e]];
        if v < psi[sp.cols[e]] {
            psi[sp.cols[e]] = v;
        }
    }
    psi
}

fn c_transform_rows(sp: &Sparse, psi: &[f64]) -> Vec<f64> {
    let mut phi = vec![f64::INFINITY; sp.a.len()];
    for e in 0..sp.cost.len() {
        let v = sp.cost[e] - psi[sp.cols[e]];
        if v < phi[sp.rows[e]] {
            phi[sp.rows[e]] = v;
        }
    }
    phi
}

/// Best feasible dual value among c-transforms of the Sinkhorn potentials.
fn dual_bound(sp: &Sparse, f: &[f64], g: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let psi = c_transform_cols(sp, f);
    let phi = c_transform_rows(sp, &psi);
    best = best.max(dual_objective(sp, &phi, &psi));
    let phi = c_transform_rows(sp, g);
    let psi = c_transform_cols(sp, &phi);
    best = best.max(dual_objective(sp, &phi, &psi));
    best
}

/// Direct minimization of the LET objective over plans on at most 3 points.
///
/// A coarse grid over every finite-cost entry seeds cyclic exact coordinate
/// minimization, interleaved with the optimal global rescaling of the plan.
pub fn hk_bruteforce(
    space: &MetricMeasureSpace,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    alpha: f64,
    resolution: usize,
) -> Result<f64> {
    check_alpha(alpha)?;
    let n = space.len();
    if n > 3 {
        return Err(Error::InvalidParameter(format!("brute-force HK supports n <= 3, got {n}")));
    }
    check_len(n, mu0.len())?;
    check_len(n, mu1.len())?;
    let a = mu0.weights();
    let b = mu1.weights();
    let entries: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a[i] > 0.0 && b[j] > 0.0)
        .map(|(i, j)| (i, j, cost_ell(alpha, space.dist(i, j))))
        .filter(|e| e.2.is_finite())
        .collect();
    let objective = |x: &[f64]| -> f64 {
        let mut row = [0.0; 3];
        let mut col = [0.0; 3];
        let mut t = 0.0;
        for (k, &(i, j, c)) in entries.iter().enumerate() {
            row[i] += x[k];
            col[j] += x[k];
            t += x[k] * c;
        }
        t + (0..n).map(|i| kl_term(row[i], a[i]) + kl_term(col[i], b[i])).sum::<f64>()
    };
    let k = entries.len();
    if k == 0 {
        return Ok(objective(&[]));
    }

    // Grid seed: each entry ranges over [0, 2 sqrt(a_i b_j)].
    let mut levels = resolution.max(1);
    while ((levels + 1) as f64).powi(k as i32) > 4e6 && levels > 1 {
        levels -= 1;
    }
    let span: Vec<f64> = entries.iter().map(|&(i, j, _)| 2.0 * (a[i] * b[j]).sqrt()).collect();
    let mut x = vec![0.0; k];
    let mut best_x = x.clone();
    let mut best = objective(&x);
    let mut idx = vec![0usize; k];
    loop {
        for t in 0..k {
            x[t] = span[t] * idx[t] as f64 / levels as f64;
        }
        let v = objective(&x);
        if v < best {
            best = v;
            best_x.copy_from_slice(&x);
        }
        let mut t = 0;
        while t < k {
            idx[t] += 1;
            if idx[t] <= levels {
                break;
            }
            idx[t] = 0;
            t += 1;
        }
        if t == k {
            break;
        }
    }

    let mut x = best_x;
    for _sweep in 0..200_000 {
        let before = objective(&x);
        for t in 0..k {
            let (i, j, c) = entries[t];
            let r: f64 = entries.iter().enumerate().filter(|&(s, e)| s != t && e.0 == i).map(|(s, _)| x[s]).sum();
            let q: f64 = entries.iter().enumerate().filter(|&(s, e)| s != t && e.1 == j).map(|(s, _)| x[s]).sum();
            // Stationarity (r + x)(q + x) = a_i b_j e^{-c}.
            let prod = a[i] * b[j] * (-c).exp();
            let root = 0.5 * (-(r + q) + ((r - q) * (r - q) + 4.0 * prod).sqrt());
            x[t] = root.max(0.0);
        }
        // Optimal rescaling γ -> sγ.
        let mut row = [0.0; 3];
        let mut col = [0.0; 3];
        let mut lin = 0.0;
        for (t, &(i, j, c)) in entries.iter().enumerate() {
            row[i] += x[t];
            col[j] += x[t];
            lin += x[t] * c;
        }
        let mass: f64 = row.iter().sum::<f64>() + col.iter().sum::<f64>();
        if mass > 0.0 {
            let mut num = lin;
            for i in 0..n {
                if row[i] > 0.0 {
                    num += row[i] * (row[i] / a[i]).ln();
                }
                if col[i] > 0.0 {
                    num += col[i] * (col[i] / b[i]).ln();
                }
            }
            let s = (-num / mass).exp();
            let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
            if objective(&scaled) < objective(&x) {
                x = scaled;
            }
        }
        let after = objective(&x);
        if before - after <= 1e-15 * after.abs().max(1e-300) {
            break;
        }
    }
    Ok(objective(&x).min(best))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(w: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(w.to_vec()).unwrap()
    }

    #[test]
    fn cost_examples() {
        assert_eq!(cost_ell(3.0, 0.0), 0.0);
        let q = std::f64::consts::FRAC_PI_4;
        assert!((cost_ell(1.0, q) - 2f64.ln()).abs() < 1e-15);
        assert!((cost_ell(1.0, q) - (1.0 + q.tan().powi(2)).ln()).abs() < 1e-15);
        assert_eq!(cost_ell(1.0, std::f64::consts::FRAC_PI_2), f64::INFINITY);
    }

    #[test]
    fn identical_measures() {
        let s = MetricMeasureSpace::cycle(4, 4.0).unwrap();
        let a = m(&[0.1, 0.4, 0.2, 0.3]);
        let sol = hk(&s, &a, &a, 1.0, &HkOptions::default()).unwrap();
        assert!(sol.value < 1e-6, "{}", sol.value);
        for i in 0..4 {
            assert!((sol.gamma[i][i] - a.weights()[i]).abs() < 1e-3);
        }
    }

    #[test]
    fn single_point_reduces_to_hellinger() {
        let s = MetricMeasureSpace::from_rows(&[vec![0.0]], vec![1.0]).unwrap();
        let sol = hk(&s, &m(&[4.0]), &m(&[1.0]), 1.0, &HkOptions::default()).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-6);
        assert!(sol.converged);
        assert!((hk_bruteforce(&s, &m(&[4.0]), &m(&[1.0]), 1.0, 20).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn cutoff_forces_pure_creation() {
        let d = 2.0;
        let s = MetricMeasureSpace::from_rows(&[vec![0.0, d], vec![d, 0.0]], vec![0.5, 0.5]).unwrap();
        let sol = hk(&s, &m(&[1.0, 0.0]), &m(&[0.0, 1.0]), 1.0, &HkOptions::default()).unwrap();
        assert_eq!(sol.value, 2.0);
        assert!(sol.gamma.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(hk_bruteforce(&s, &m(&[1.0, 0.0]), &m(&[0.0, 1.0]), 1.0, 10).unwrap(), 2.0);
    }

    #[test]
    fn two_points_at_quarter_pi_match_oracle() {
        let q = std::f64::consts::FRAC_PI_4;
        let s = MetricMeasureSpace::from_rows(&[vec![0.0, q], vec![q, 0.0]], vec![0.5, 0.5]).unwrap();
        let (a, b) = (m(&[1.0, 0.0]), m(&[0.0, 1.0]));
        let sol = hk(&s, &a, &b, 1.0, &HkOptions::default()).unwrap();
        let brute = hk_bruteforce(&s, &a, &b, 1.0, 40).unwrap();
        assert!((sol.value - brute).abs() < 1e-4, "{} vs {brute}", sol.value);
        // Moving mass x costs 2(x log x - x + 1) + x log 2, minimized at x = 2^{-1/2}.
        assert!((brute - (2.0 - 2.0 * 0.5f64.sqrt())).abs() < 1e-6);
        assert!(sol.gap_estimate < 1e-3);
    }

    #[test]
    fn options_json_keys() {
        let o: HkOptions = serde_json::from_str(r#"{"epsilon_schedule":[0.1,0.01],"max_iter":10,"tol":1e-6}"#).unwrap();
        assert_eq!(o.epsilon_schedule, vec![0.1, 0.01]);
        assert_eq!(o.max_iter, 10);
        let partial: HkOptions = serde_json::from_str(r#"{"tol":1e-5}"#).unwrap();
        assert_eq!(partial.max_iter, HkOptions::default().max_iter);
        assert!(serde_json::from_str::<HkOptions>(r#"{"iters":3}"#).is_err());
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let s = MetricMeasureSpace::cycle(5, 2.0).unwrap();
        let opts = HkOptions { max_iter: 1, ..HkOptions::default() };
        let sol = hk(&s, &m(&[0.5, 0.1, 0.0, 0.3, 0.1]), &m(&[0.1, 0.1, 0.6, 0.1, 0.1]), 1.0, &opts).unwrap();
        assert!(!sol.converged);
    }

    #[test]
    fn invalid_alpha() {
        let s = MetricMeasureSpace::cycle(3, 3.0).unwrap();
        let a = m(&[1.0, 0.0, 0.0]);
        assert!(hk(&s, &a, &a, 0.0, &HkOptions::default()).is_err());
        assert!(hk_bruteforce(&MetricMeasureSpace::cycle(4, 4.0).unwrap(), &m(&[1.0; 4]), &m(&[1.0; 4]), 1.0, 4).is_err());
    }
}
