use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::record::{params, CheckRecord, Exactness, Param};
use crate::divergences::{csiszar, hellinger, EntropyFunction};
use crate::error::{check_len, Error, Result};
use crate::gaussian::{he2_gauss, kl_gauss, ou_flow, w2_gauss, Gaussian1D};
use crate::heat::{gamma, heat_apply, heat_apply_centred, heat_dual, r_k, Generator};
use crate::hk::{hk, HkOptions};
use crate::space::DiscreteMeasure;
use crate::transport::wasserstein;

/// Tolerance of checks that hold exactly on a finite space.
pub const EXACT_TOL: f64 = 1e-9;
/// Tolerance of monotonicity along a time grid.
pub const MONOTONE_TOL: f64 = 1e-10;
/// Default allowance for metric-side checks on discretized continua.
pub const DISCRETIZATION_TOL: f64 = 5e-2;

const CONVEXITY_SAMPLES: usize = 2000;
const CONVEXITY_SEED: u64 = 0x5eed_c0de;

/// Integrand `E(r, s)` of a functional `∫ E(f, g) dm`.
#[derive(Clone)]
pub struct Integrand {
    name: String,
    nonnegative: bool,
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Integrand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Integrand").field("name", &self.name).field("nonnegative", &self.nonnegative).finish()
    }
}

impl Integrand {
    /// An arbitrary integrand; `nonnegative` restricts its domain to `[0, ∞)²`.
    pub fn custom(name: impl Into<String>, nonnegative: bool, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Integrand { name: name.into(), nonnegative, f: Arc::new(f) }
    }

    /// `(r - s)²`.
    pub fn quadratic() -> Self {
        Self::custom("quadratic", false, |r, s| (r - s) * (r - s))
    }

    /// `|r - s|`.
    pub fn abs() -> Self {
        Self::custom("abs", false, |r, s| (r - s).abs())
    }

    /// `(√r - √s)²`.
    pub fn hellinger() -> Self {
        Self::custom("hellinger", true, |r, s| {
            let d = r.sqrt() - s.sqrt();
            d * d
        })
    }

    /// `r log(r/s) - r + s`.
    pub fn kl() -> Self {
        Self::custom("kl", true, |r, s| EntropyFunction::kl().perspective().value(r, s))
    }

    /// `e^{r-s} - 1 - (r - s)`.
    pub fn exp_bregman() -> Self {
        Self::custom("exp_bregman", false, |r, s| (r - s).exp_m1() - (r - s))
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "quadratic" => Ok(Self::quadratic()),
            "abs" => Ok(Self::abs()),
            "hellinger" => Ok(Self::hellinger()),
            "kl" => Ok(Self::kl()),
            "exp_bregman" => Ok(Self::exp_bregman()),
            other => Err(Error::InvalidParameter(format!(
                "unknown integrand {other:?}; expected quadratic, abs, hellinger, kl or exp_bregman"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn eval(&self, r: f64, s: f64) -> f64 {
        (self.f)(r, s)
    }

    /// Random midpoint test of joint convexity on `[-2, 2]²` (or `(0, 2]²`).
    pub fn check_convex(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(CONVEXITY_SEED);
        let lo = if self.nonnegative { 1e-3 } else { -2.0 };
        for _ in 0..CONVEXITY_SAMPLES {
            let a = (rng.gen_range(lo..2.0), rng.gen_range(lo..2.0));
            let b = (rng.gen_range(lo..2.0), rng.gen_range(lo..2.0));
            let mid = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
            let (ea, eb, em) = (self.eval(a.0, a.1), self.eval(b.0, b.1), self.eval(mid.0, mid.1));
            let avg = 0.5 * (ea + eb);
            if !(em <= avg + 1e-12 * (1.0 + ea.abs() + eb.abs())) {
                return Err(Error::NotConvex(format!(
                    "{}: E{mid:?} = {em} exceeds the average {avg} of E{a:?} = {ea} and E{b:?} = {eb}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter(format!("time grid must be finite and nonnegative: {t_grid:?}")));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(format!("time grid must be increasing: {t_grid:?}")));
    }
    Ok(())
}

fn check_nonnegative(what: &str, f: &[f64]) -> Result<()> {
    match f.iter().position(|v| !(*v >= 0.0)) {
        Some(i) => Err(Error::InvalidParameter(format!("{what} must be nonnegative, entry {i} is {}", f[i]))),
        None => Ok(()),
    }
}

fn check_probability(mu: &DiscreteMeasure) -> Result<()> {
    if (mu.mass() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("expected a probability measure, mass is {}", mu.mass())));
    }
    Ok(())
}

fn check_p_range(p: f64) -> Result<()> {
    if (1.0..=2.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("exponent must lie in [1, 2], got {p}")))
    }
}

/// `e^{-c t}` with the convention `e^{-c·0} = 1` for any `c`.
fn decay(c: f64, t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        (-c * t).exp()
    }
}

fn integral(g: &Generator, e: &Integrand, f: &[f64], h: &[f64]) -> f64 {
    f.iter().zip(h).zip(g.space().weights()).map(|((&a, &b), &w)| w * e.eval(a, b)).sum()
}

/// Records `name.monotone` asserting `values[k+1] <= values[k]` along the grid.
fn monotone_records(name: &str, t_grid: &[f64], values: &[f64], extra: &[(&str, Param)]) -> Vec<CheckRecord> {
    (1..values.len())
        .map(|k| {
            let mut r = CheckRecord::new(
                format!("{name}.monotone"),
                params([("t", t_grid[k].into()), ("t_prev", t_grid[k - 1].into())]),
                values[k],
                values[k - 1],
                MONOTONE_TOL,
                Exactness::Exact,
            );
            for (key, v) in extra {
                r = r.with_param(key, v.clone());
            }
            r
        })
        .collect()
}

/// `∫ E(P_t f, P_t g) dm <= ∫ E(f, g) dm` along `t_grid`, plus monotonicity in `t`.
pub fn check_convex_contraction(
    g: &Generator,
    e: &Integrand,
    f: &[f64],
    h: &[f64],
    t_grid: &[f64],
) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    check_len(g.len(), f.len())?;
    check_len(g.len(), h.len())?;
    if e.is_nonnegative() {
        check_nonnegative("f", f)?;
        check_nonnegative("g", h)?;
    }
    e.check_convex()?;
    let rhs = integral(g, e, f, h);
    let mut out = Vec::new();
    let mut values = Vec::new();
    for &t in t_grid {
        let (mut pf, mut ph) = (heat_apply(g, t, f)?, heat_apply(g, t, h)?);
        if e.is_nonnegative() {
            pf.iter_mut().chain(ph.iter_mut()).for_each(|v| *v = v.max(0.0));
        }
        let lhs = integral(g, e, &pf, &ph);
        values.push(lhs);
        out.push(CheckRecord::new(
            "convex_contraction",
            params([("t", t.into()), ("integrand", e.name().into())]),
            lhs,
            rhs,
            EXACT_TOL,
            Exactness::Exact,
        ));
    }
    out.extend(monotone_records("convex_contraction", t_grid, &values, &[("integrand", e.name().into())]));
    Ok(out)
}

/// `F(P_t f | P_t g) <= F(f | g)` for the measures `f m`, `g m`.
pub fn check_csiszar_contraction(
    g: &Generator,
    entropy: EntropyFunction,
    f: &[f64],
    h: &[f64],
    t_grid: &[f64],
) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    check_len(g.len(), f.len())?;
    check_len(g.len(), h.len())?;
    check_nonnegative("f", f)?;
    check_nonnegative("g", h)?;
    let (mu0, mu1) = (g.space().measure_from_density(f)?, g.space().measure_from_density(h)?);
    let rhs = csiszar(entropy, &mu0, &mu1)?;
    let mut out = Vec::new();
    for &t in t_grid {
        let lhs = csiszar(entropy, &heat_dual(g, t, &mu0)?, &heat_dual(g, t, &mu1)?)?;
        out.push(CheckRecord::new(
            "csiszar_contraction",
            params([("t", t.into()), ("entropy", entropy.name().into())]),
            lhs,
            rhs,
            EXACT_TOL,
            Exactness::Exact,
        ));
    }
    Ok(out)
}

/// `He_p(P_t* μ0, P_t* μ1) <= He_p(μ0, μ1)`, plus monotonicity in `t`.
pub fn check_hellinger_contraction(
    g: &Generator,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    p: f64,
    t_grid: &[f64],
) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    let rhs = hellinger(p, mu0, mu1)?;
    let mut out = Vec::new();
    let mut values = Vec::new();
    for &t in t_grid {
        let lhs = hellinger(p, &heat_dual(g, t, mu0)?, &heat_dual(g, t, mu1)?)?;
        values.push(lhs);
        out.push(CheckRecord::new(
            "hellinger_contraction",
            params([("t", t.into()), ("p", p.into())]),
            lhs,
            rhs,
            EXACT_TOL,
            Exactness::Exact,
        ));
    }
    out.extend(monotone_records("hellinger_contraction", t_grid, &values, &[("p", p.into())]));
    Ok(out)
}

/// Record for the point of `lhs <= rhs` with least slack.
fn worst_point(name: &str, t: f64, k: f64, lhs: &[f64], rhs: &[f64]) -> CheckRecord {
    let x = (0..lhs.len()).min_by(|&a, &b| (rhs[a] - lhs[a]).total_cmp(&(rhs[b] - lhs[b]))).unwrap_or(0);
    CheckRecord::new(
        name,
        params([("t", t.into()), ("K", k.into()), ("x", x.into())]),
        lhs[x],
        rhs[x],
        EXACT_TOL,
        Exactness::Exact,
    )
}

/// `Γ(P_t f) <= e^{-2Kt} P_t Γ(f)` pointwise; one record per `t` at the worst point.
pub fn check_be_gradient(g: &Generator, f: &[f64], k: f64, t_grid: &[f64]) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    check_len(g.len(), f.len())?;
    let gf = gamma(g, f, f);
    let mut out = Vec::new();
    for &t in t_grid {
        let pf = heat_apply_centred(g, t, f)?;
        let lhs = gamma(g, &pf, &pf);
        let c = decay(2.0 * k, t);
        let rhs: Vec<f64> = heat_apply(g, t, &gf)?.iter().map(|v| c * v).collect();
        out.push(worst_point("be_gradient", t, k, &lhs, &rhs));
    }
    Ok(out)
}

/// `R_K(t) Γ(P_t f) <= P_t(f²) - (P_t f)²` pointwise, and
/// `R_K(t) max Γ(P_t f) <= ‖f‖²_∞`.
pub fn check_variance_bound(g: &Generator, f: &[f64], k: f64, t_grid: &[f64]) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    check_len(g.len(), f.len())?;
    let sup2 = f.iter().map(|v| v * v).fold(0.0, f64::max);
    // Both sides are invariant under adding a constant to f; centring keeps the
    // variance free of cancellation.
    let mean = f.iter().zip(g.space().weights()).map(|(a, b)| a * b).sum::<f64>() / g.space().weights().iter().sum::<f64>();
    let fc: Vec<f64> = f.iter().map(|v| v - mean).collect();
    let fc2: Vec<f64> = fc.iter().map(|v| v * v).collect();
    let mut out = Vec::new();
    for &t in t_grid {
        let r = r_k(k, t)?;
        let pf = heat_apply_centred(g, t, &fc)?;
        let grad = gamma(g, &pf, &pf);
        let lhs: Vec<f64> = grad.iter().map(|v| r * v).collect();
        let pf2 = heat_apply(g, t, &fc2)?;
        let rhs: Vec<f64> = pf2.iter().zip(&pf).map(|(a, b)| a - b * b).collect();
        out.push(worst_point("variance_bound", t, k, &lhs, &rhs));
        let top = grad.iter().cloned().fold(0.0, f64::max);
        out.push(CheckRecord::new(
            "variance_bound.sup",
            params([("t", t.into()), ("K", k.into())]),
            r * top,
            sup2,
            EXACT_TOL,
            Exactness::Exact,
        ));
    }
    Ok(out)
}

/// `W_2(P_t* μ0, P_t* μ1) <= e^{-Kt} W_2(μ0, μ1)` on a discretized space.
pub fn check_w2_contraction(
    g: &Generator,
    k: f64,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    t_grid: &[f64],
    tolerance: f64,
) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    let w0 = wasserstein(g.space(), mu0, mu1, 2.0)?.distance;
    let mut out = Vec::new();
    for &t in t_grid {
        let lhs = wasserstein(g.space(), &heat_dual(g, t, mu0)?, &heat_dual(g, t, mu1)?, 2.0)?.distance;
        out.push(CheckRecord::new(
            "w2_contraction",
            params([("t", t.into()), ("K", k.into())]),
            lhs,
            decay(k, t) * w0,
            tolerance,
            Exactness::Discretization,
        ));
    }
    Ok(out)
}

/// `W_p / (p √R_K(t))`, with `0` when `W_p = 0`.
fn regularization_rhs(wp: f64, p: f64, k: f64, t: f64) -> Result<f64> {
    if wp == 0.0 {
        return Ok(0.0);
    }
    Ok(wp / (p * r_k(k, t)?.sqrt()))
}

/// `He_p(P_t* μ0, P_t* μ1) <= W_p(μ0, μ1) / (p √R_K(t))` for `p ∈ [1, 2]`.
pub fn check_regularization_he_wp(
    g: &Generator,
    k: f64,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    p: f64,
    t_grid: &[f64],
    tolerance: f64,
) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    check_p_range(p)?;
    check_probability(mu0)?;
    check_probability(mu1)?;
    let wp = wasserstein(g.space(), mu0, mu1, p)?.distance;
    let mut out = Vec::new();
    for &t in t_grid {
        let lhs = hellinger(p, &heat_dual(g, t, mu0)?, &heat_dual(g, t, mu1)?)?;
        out.push(CheckRecord::new(
            "regularization",
            params([("t", t.into()), ("K", k.into()), ("p", p.into())]),
            lhs,
            regularization_rhs(wp, p, k, t)?,
            tolerance,
            Exactness::Discretization,
        ));
    }
    Ok(out)
}

/// Regularization against the normalized reference measure, plus decay of the
/// left-hand side along the grid.
pub fn check_asymptotic(
    g: &Generator,
    k: f64,
    mu0: &DiscreteMeasure,
    p: f64,
    t_grid: &[f64],
    tolerance: f64,
) -> Result<Vec<CheckRecord>> {
    let m = g.space().reference_measure().normalized()?;
    let mut out: Vec<CheckRecord> = check_regularization_he_wp(g, k, mu0, &m, p, t_grid, tolerance)?
        .into_iter()
        .map(|mut r| {
            r.name = "asymptotic".into();
            r
        })
        .collect();
    let values: Vec<f64> = out.iter().map(|r| r.lhs).collect();
    out.extend(monotone_records("asymptotic", t_grid, &values, &[("p", p.into())]));
    Ok(out)
}

/// `He_2(P_t* μ0, P_t* μ1) <= HK_{α(t)}(μ0, μ1)` with `α(t) = 4 R_K(t)`, and
/// `HK_{α(t)}(μ0, μ1) <= He_2(μ0, μ1)`.
///
/// The solver gap widens the tolerance; a stage that did not converge makes
/// the record inconclusive.
pub fn check_he_hk(
    g: &Generator,
    k: f64,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    t_grid: &[f64],
    opts: &HkOptions,
    tolerance: f64,
) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    if t_grid[0] <= 0.0 {
        return Err(Error::InvalidParameter("HK comparison needs t > 0".into()));
    }
    let he0 = hellinger(2.0, mu0, mu1)?;
    let mut out = Vec::new();
    for &t in t_grid {
        let alpha = 4.0 * r_k(k, t)?;
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("α(t) = {alpha} is not positive at t = {t}, K = {k}")));
        }
        let lhs = hellinger(2.0, &heat_dual(g, t, mu0)?, &heat_dual(g, t, mu1)?)?;
        let sol = hk(g.space(), mu0, mu1, alpha, opts)?;
        let upper = sol.distance();
        let spread = upper - sol.lower_bound().sqrt();
        let ps = params([("t", t.into()), ("K", k.into()), ("alpha", alpha.into())]);
        let main = CheckRecord::new("he_hk", ps.clone(), lhs, upper, tolerance + spread, Exactness::Discretization);
        let chain = CheckRecord::new("he_hk.chain", ps, upper, he0, EXACT_TOL + spread, Exactness::Exact);
        if sol.converged {
            out.push(main);
            out.push(chain);
        } else {
            out.push(main.inconclusive());
            out.push(chain.inconclusive());
        }
    }
    Ok(out)
}

fn standard_normal() -> Gaussian1D {
    Gaussian1D::standard()
}

fn check_unit_mass(g: Gaussian1D) -> Result<()> {
    if (g.mass - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("expected a probability Gaussian, mass is {}", g.mass)));
    }
    Ok(())
}

/// `W_2` contraction at rate `e^{-t}` for the Ornstein-Uhlenbeck flow.
pub fn check_w2_contraction_gauss(g0: Gaussian1D, g1: Gaussian1D, t_grid: &[f64]) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    let w0 = w2_gauss(g0, g1)?;
    let mut out = Vec::new();
    for &t in t_grid {
        let lhs = w2_gauss(ou_flow(g0, t)?, ou_flow(g1, t)?)?;
        out.push(CheckRecord::new(
            "w2_contraction",
            params([("t", t.into()), ("K", 1.0.into())]),
            lhs,
            decay(1.0, t) * w0,
            EXACT_TOL,
            Exactness::Oracle,
        ));
    }
    Ok(out)
}

/// `He_2(P_t* g0, P_t* g1) <= W_2(g0, g1) / (2 √R_1(t))` for the Ornstein-Uhlenbeck flow.
pub fn check_regularization_gauss(g0: Gaussian1D, g1: Gaussian1D, t_grid: &[f64]) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    check_unit_mass(g0)?;
    check_unit_mass(g1)?;
    let w0 = w2_gauss(g0, g1)?;
    let mut out = Vec::new();
    for &t in t_grid {
        let lhs = he2_gauss(ou_flow(g0, t)?, ou_flow(g1, t)?);
        out.push(CheckRecord::new(
            "regularization",
            params([("t", t.into()), ("K", 1.0.into()), ("p", 2.0.into())]),
            lhs,
            regularization_rhs(w0, 2.0, 1.0, t)?,
            EXACT_TOL,
            Exactness::Oracle,
        ));
    }
    Ok(out)
}

/// Regularization against `N(0, 1)`, plus decay of the left-hand side.
pub fn check_asymptotic_gauss(g0: Gaussian1D, t_grid: &[f64]) -> Result<Vec<CheckRecord>> {
    let mut out: Vec<CheckRecord> = check_regularization_gauss(g0, standard_normal(), t_grid)?
        .into_iter()
        .map(|mut r| {
            r.name = "asymptotic".into();
            r
        })
        .collect();
    let values: Vec<f64> = out.iter().map(|r| r.lhs).collect();
    out.extend(monotone_records("asymptotic", t_grid, &values, &[("p", 2.0.into())]));
    Ok(out)
}

/// `KL(P_t* g | m) <= e^{-2t} KL(g | m)` and `W_2(P_t* g, m) <= e^{-t} W_2(g, m)`, `m = N(0, 1)`.
pub fn check_entropy_decay_gauss(g0: Gaussian1D, t_grid: &[f64]) -> Result<Vec<CheckRecord>> {
    check_grid(t_grid)?;
    check_unit_mass(g0)?;
    let m = standard_normal();
    let (kl0, w0) = (kl_gauss(g0, m), w2_gauss(g0, m)?);
    let mut out = Vec::new();
    for &t in t_grid {
        let gt = ou_flow(g0, t)?;
        let ps = params([("t", t.into()), ("K", 1.0.into())]);
        out.push(CheckRecord::new("kl_decay", ps.clone(), kl_gauss(gt, m), decay(2.0, t) * kl0, EXACT_TOL, Exactness::Oracle));
        out.push(CheckRecord::new("w2_decay", ps, w2_gauss(gt, m)?, decay(1.0, t) * w0, EXACT_TOL, Exactness::Oracle));
    }
    Ok(out)
}
