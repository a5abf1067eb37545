use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::*;
use super::record::{ext_f64, params, CheckRecord, Exactness, Verdict};
use crate::divergences::EntropyFunction;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian1D;
use crate::heat::{curvature_lower_bound, cycle_generator, ou_generator, Generator};
use crate::hk::HkOptions;
use crate::space::{DiscreteMeasure, MetricMeasureSpace};

pub const DEFAULT_SEED: u64 = 20_240_611;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn one() -> usize {
    1
}

fn unit_mass() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Solver options for every HK comparison.
    #[serde(default)]
    pub hk: HkOptions,
    #[serde(default)]
    pub instances: Vec<InstanceConfig>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: DEFAULT_SEED, hk: HkOptions::default(), instances: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub id: String,
    pub setting: SettingSpec,
    /// Curvature for the Γ-side checks; computed from the generator when absent.
    #[serde(default)]
    pub k: Option<f64>,
    /// Curvature for the metric-side checks; defaults to the continuum value
    /// of the setting (0 on the circle, 1 for Ornstein-Uhlenbeck).
    #[serde(default)]
    pub metric_k: Option<f64>,
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SettingSpec {
    /// Second-difference generator on a circle.
    Cycle { n: usize, length: f64 },
    /// Ornstein-Uhlenbeck chain on `[-radius, radius]` with spacing `h`.
    Ou { h: f64, radius: f64 },
    /// `L = [[-a, a], [b, -b]]` on two points at the given distance.
    TwoPoint { a: f64, b: f64, distance: f64 },
    /// Random reversible chain on `n` points with the discrete metric.
    RandomChain { n: usize },
    /// One-dimensional Gaussians under the Ornstein-Uhlenbeck flow.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Weights {
        weights: Vec<f64>,
    },
    /// A Gaussian; on a grid its density is sampled at the grid points
    /// (periodically on a circle) and rescaled to the given mass.
    Gaussian {
        mean: f64,
        var: f64,
        #[serde(default = "unit_mass")]
        mass: f64,
    },
    /// The reference measure of the space, rescaled to the given mass.
    Stationary {
        #[serde(default = "unit_mass")]
        mass: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    ConvexContraction {
        integrand: String,
        #[serde(default = "one")]
        samples: usize,
        t_grid: Vec<f64>,
    },
    CsiszarContraction {
        entropy: String,
        #[serde(default = "one")]
        samples: usize,
        t_grid: Vec<f64>,
    },
    HellingerContraction {
        p: f64,
        #[serde(default = "one")]
        samples: usize,
        t_grid: Vec<f64>,
    },
    BeGradient {
        #[serde(default = "one")]
        samples: usize,
        t_grid: Vec<f64>,
    },
    VarianceBound {
        #[serde(default = "one")]
        samples: usize,
        t_grid: Vec<f64>,
    },
    W2Contraction {
        mu0: MeasureSpec,
        mu1: MeasureSpec,
        t_grid: Vec<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
        #[serde(default)]
        refine: bool,
    },
    Regularization {
        p: f64,
        mu0: MeasureSpec,
        mu1: MeasureSpec,
        t_grid: Vec<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
        #[serde(default)]
        refine: bool,
    },
    Asymptotic {
        p: f64,
        mu0: MeasureSpec,
        t_grid: Vec<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
        #[serde(default)]
        refine: bool,
    },
    HeHk {
        mu0: MeasureSpec,
        mu1: MeasureSpec,
        t_grid: Vec<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
        #[serde(default)]
        refine: bool,
    },
    /// Exponential decay of entropy and `W_2` towards `N(0, 1)`; Gaussian setting only.
    EntropyDecay { mu0: MeasureSpec, t_grid: Vec<f64> },
}

impl CheckSpec {
    fn refine(&self) -> bool {
        match self {
            CheckSpec::W2Contraction { refine, .. }
            | CheckSpec::Regularization { refine, .. }
            | CheckSpec::Asymptotic { refine, .. }
            | CheckSpec::HeHk { refine, .. } => *refine,
            _ => false,
        }
    }

    /// Record name whose worst violation drives the refinement rule.
    fn family(&self) -> &'static str {
        match self {
            CheckSpec::ConvexContraction { .. } => "convex_contraction",
            CheckSpec::CsiszarContraction { .. } => "csiszar_contraction",
            CheckSpec::HellingerContraction { .. } => "hellinger_contraction",
            CheckSpec::BeGradient { .. } => "be_gradient",
            CheckSpec::VarianceBound { .. } => "variance_bound",
            CheckSpec::W2Contraction { .. } => "w2_contraction",
            CheckSpec::Regularization { .. } => "regularization",
            CheckSpec::Asymptotic { .. } => "asymptotic",
            CheckSpec::HeHk { .. } => "he_hk",
            CheckSpec::EntropyDecay { .. } => "kl_decay",
        }
    }
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: SuiteConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Static checks that do not need any numerics.
    pub fn validate(&self) -> Result<()> {
        self.hk.validate()?;
        let mut ids = std::collections::BTreeSet::new();
        for inst in &self.instances {
            let ctx = |msg: String| Error::Config(format!("instance {:?}: {msg}", inst.id));
            if !ids.insert(inst.id.as_str()) {
                return Err(ctx("duplicate id".into()));
            }
            let gaussian = inst.setting == SettingSpec::Gaussian;
            let refinable = matches!(inst.setting, SettingSpec::Cycle { .. } | SettingSpec::Ou { .. });
            for check in &inst.checks {
                match check {
                    CheckSpec::ConvexContraction { integrand, .. } => {
                        Integrand::parse(integrand).map_err(|e| ctx(e.to_string()))?;
                    }
                    CheckSpec::CsiszarContraction { entropy, .. } => {
                        EntropyFunction::parse(entropy).map_err(|e| ctx(e.to_string()))?;
                    }
                    _ => {}
                }
                let gamma_side = matches!(
                    check,
                    CheckSpec::ConvexContraction { .. }
                        | CheckSpec::CsiszarContraction { .. }
                        | CheckSpec::HellingerContraction { .. }
                        | CheckSpec::BeGradient { .. }
                        | CheckSpec::VarianceBound { .. }
                        | CheckSpec::HeHk { .. }
                );
                if gaussian && gamma_side {
                    return Err(ctx(format!("{} needs a finite generator, not the Gaussian setting", check.family())));
                }
                if !gaussian && matches!(check, CheckSpec::EntropyDecay { .. }) {
                    return Err(ctx("entropy_decay is available only in the Gaussian setting".into()));
                }
                if check.refine() && !refinable {
                    return Err(ctx(format!("{} asks for refinement, which needs a cycle or ou setting", check.family())));
                }
            }
        }
        Ok(())
    }
}

/// Aggregated outcome of a suite run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub inconclusive: usize,
    /// Smallest slack per record name.
    pub worst_slack: BTreeMap<String, WorstSlack>,
    pub records: Vec<CheckRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstSlack(#[serde(with = "ext_f64")] pub f64);

impl SuiteReport {
    pub fn from_records(seed: u64, mut records: Vec<CheckRecord>) -> Self {
        records.sort_by(|a, b| a.sort_key_cmp(b));
        let count = |v: Verdict| records.iter().filter(|r| r.verdict == v).count();
        let mut worst_slack: BTreeMap<String, WorstSlack> = BTreeMap::new();
        for r in &records {
            let e = worst_slack.entry(r.name.clone()).or_insert(WorstSlack(f64::INFINITY));
            if r.slack < e.0 || r.slack.is_nan() {
                e.0 = r.slack;
            }
        }
        SuiteReport {
            seed,
            total: records.len(),
            passed: count(Verdict::Pass),
            failed: count(Verdict::Fail),
            inconclusive: count(Verdict::Inconclusive),
            worst_slack,
            records,
        }
    }

    /// No failures, and with `strict` no inconclusive records either.
    pub fn is_success(&self, strict: bool) -> bool {
        self.failed == 0 && (!strict || self.inconclusive == 0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Columns `name, params, lhs, rhs, slack, tolerance, exactness, verdict`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["name", "params", "lhs", "rhs", "slack", "tolerance", "exactness", "verdict"])
            .expect("in-memory csv");
        for r in &self.records {
            w.write_record([
                r.name.clone(),
                r.flat_params(),
                format!("{:.16e}", r.lhs),
                format!("{:.16e}", r.rhs),
                format!("{:.16e}", r.slack),
                format!("{:.16e}", r.tolerance),
                r.exactness.to_string(),
                r.verdict.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

/// A built setting: a generator with its point positions, or the Gaussian testbed.
enum Built {
    Finite { gen: Generator, positions: Option<Positions>, continuum_k: Option<f64>, k: OnceLock<f64> },
    Gaussian,
}

#[derive(Clone, Copy)]
enum Positions {
    Circle { n: usize, length: f64 },
    Line { h: f64, radius: f64 },
}

impl Positions {
    fn coords(&self) -> Vec<f64> {
        match *self {
            Positions::Circle { n, length } => (0..n).map(|i| i as f64 * length / n as f64).collect(),
            Positions::Line { h, radius } => {
                let k = (radius / h).round() as i64;
                (-k..=k).map(|i| i as f64 * h).collect()
            }
        }
    }

    /// Distance used to sample densities.
    fn offset(&self, x: f64, mean: f64) -> f64 {
        match *self {
            Positions::Circle { length, .. } => {
                let d = (x - mean).rem_euclid(length);
                d.min(length - d)
            }
            Positions::Line { .. } => x - mean,
        }
    }
}

fn fnv(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn job_rng(seed: u64, id: &str, check: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv(id.as_bytes()) ^ (check as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn build(setting: &SettingSpec, seed: u64, id: &str) -> Result<Built> {
    let finite = |gen, positions, continuum_k| Built::Finite { gen, positions, continuum_k, k: OnceLock::new() };
    Ok(match *setting {
        SettingSpec::Cycle { n, length } => {
            finite(cycle_generator(n, length)?, Some(Positions::Circle { n, length }), Some(0.0))
        }
        SettingSpec::Ou { h, radius } => finite(ou_generator(h, radius)?, Some(Positions::Line { h, radius }), Some(1.0)),
        SettingSpec::TwoPoint { a, b, distance } => {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidParameter(format!("two-point rates must be positive, got {a}, {b}")));
            }
            let space = MetricMeasureSpace::from_rows(
                &[vec![0.0, distance], vec![distance, 0.0]],
                vec![b / (a + b), a / (a + b)],
            )?;
            finite(Generator::from_rows(&[vec![-a, a], vec![b, -b]], space)?, None, None)
        }
        SettingSpec::RandomChain { n } => finite(random_chain(n, &mut job_rng(seed, id, usize::MAX))?, None, None),
        SettingSpec::Gaussian => Built::Gaussian,
    })
}

fn refined(setting: &SettingSpec) -> SettingSpec {
    match *setting {
        SettingSpec::Cycle { n, length } => SettingSpec::Cycle { n: 2 * n, length },
        SettingSpec::Ou { h, radius } => SettingSpec::Ou { h: 0.5 * h, radius },
        ref other => other.clone(),
    }
}

/// Random conductances on a connected graph over `n` points, random weights.
fn random_chain(n: usize, rng: &mut ChaCha8Rng) -> Result<Generator> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("random chain needs n >= 2, got {n}")));
    }
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let m: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.gen_bool(0.4) {
                let c = rng.gen_range(0.1..2.0);
                rows[i][j] = c / m[i];
                rows[j][i] = c / m[j];
            }
        }
    }
    for (i, row) in rows.iter_mut().enumerate() {
        row[i] = -row.iter().sum::<f64>();
    }
    let dist: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
    Generator::from_rows(&rows, MetricMeasureSpace::from_rows(&dist, m)?)
}

fn discrete_measure(spec: &MeasureSpec, gen: &Generator, positions: Option<Positions>) -> Result<DiscreteMeasure> {
    match spec {
        MeasureSpec::Weights { weights } => {
            if weights.len() != gen.len() {
                return Err(Error::LengthMismatch { expected: gen.len(), found: weights.len() });
            }
            DiscreteMeasure::new(weights.clone())
        }
        MeasureSpec::Gaussian { mean, var, mass } => {
            let pos = positions.ok_or_else(|| {
                Error::Config("Gaussian measure specs need a cycle or ou setting".into())
            })?;
            let g = Gaussian1D::new(*mean, *var, 1.0)?;
            let raw: Vec<f64> = pos.coords().iter().map(|&x| g.density(g.mean + pos.offset(x, g.mean))).collect();
            let total: f64 = raw.iter().sum();
            if !(total > 0.0) {
                return Err(Error::ZeroMass);
            }
            DiscreteMeasure::new(raw.iter().map(|w| mass * w / total).collect())
        }
        MeasureSpec::Stationary { mass } => gen.space().reference_measure().normalized()?.scaled(*mass),
    }
}

fn gaussian_measure(spec: &MeasureSpec) -> Result<Gaussian1D> {
    match spec {
        MeasureSpec::Gaussian { mean, var, mass } => Gaussian1D::new(*mean, *var, *mass),
        MeasureSpec::Stationary { mass } => Gaussian1D::new(0.0, 1.0, *mass),
        MeasureSpec::Weights { .. } => Err(Error::Config("the Gaussian setting needs gaussian or stationary measures".into())),
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Random weights in `[0, 1)`, about a fifth of them zero.
fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> DiscreteMeasure {
    let w = (0..n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) }).collect();
    DiscreteMeasure::new(w).expect("nonnegative weights")
}

struct Ctx<'a> {
    built: &'a Built,
    inst: &'a InstanceConfig,
    hk: &'a HkOptions,
}

impl Ctx<'_> {
    fn gen(&self) -> &Generator {
        match self.built {
            Built::Finite { gen, .. } => gen,
            Built::Gaussian => unreachable!("validated: finite checks never reach the Gaussian setting"),
        }
    }

    fn gamma_k(&self) -> f64 {
        match (self.inst.k, self.built) {
            (Some(k), _) => k,
            (None, Built::Finite { gen, k, .. }) => *k.get_or_init(|| curvature_lower_bound(gen)),
            (None, Built::Gaussian) => 1.0,
        }
    }

    fn metric_k(&self) -> f64 {
        match (self.inst.metric_k, self.built) {
            (Some(k), _) => k,
            (None, Built::Finite { continuum_k: Some(k), .. }) => *k,
            _ => self.gamma_k(),
        }
    }

    fn measure(&self, spec: &MeasureSpec) -> Result<DiscreteMeasure> {
        match self.built {
            Built::Finite { gen, positions, .. } => discrete_measure(spec, gen, *positions),
            Built::Gaussian => unreachable!("validated: discrete measures are built on finite settings"),
        }
    }
}

/// Runs one check at one resolution. Sample-based checks tag each record with its sample index.
fn run_check(ctx: &Ctx, check: &CheckSpec, rng: &mut ChaCha8Rng, tol_scale: f64) -> Result<Vec<CheckRecord>> {
    let tol = |t: &Option<f64>| t.unwrap_or(DISCRETIZATION_TOL) * tol_scale;
    let tag = |recs: Vec<CheckRecord>, s: usize| recs.into_iter().map(move |r| r.with_param("sample", s));
    let mut out = Vec::new();
    if let Built::Gaussian = ctx.built {
        match check {
            CheckSpec::W2Contraction { mu0, mu1, t_grid, .. } => {
                out = check_w2_contraction_gauss(gaussian_measure(mu0)?, gaussian_measure(mu1)?, t_grid)?
            }
            CheckSpec::Regularization { p, mu0, mu1, t_grid, .. } => {
                if *p != 2.0 {
                    return Err(Error::Config(format!("the Gaussian setting supports p = 2 only, got {p}")));
                }
                out = check_regularization_gauss(gaussian_measure(mu0)?, gaussian_measure(mu1)?, t_grid)?
            }
            CheckSpec::Asymptotic { p, mu0, t_grid, .. } => {
                if *p != 2.0 {
                    return Err(Error::Config(format!("the Gaussian setting supports p = 2 only, got {p}")));
                }
                out = check_asymptotic_gauss(gaussian_measure(mu0)?, t_grid)?
            }
            CheckSpec::EntropyDecay { mu0, t_grid } => out = check_entropy_decay_gauss(gaussian_measure(mu0)?, t_grid)?,
            _ => unreachable!("validated: only metric checks reach the Gaussian setting"),
        }
        return Ok(out);
    }
    let g = ctx.gen();
    let n = g.len();
    match check {
        CheckSpec::ConvexContraction { integrand, samples, t_grid } => {
            let e = Integrand::parse(integrand)?;
            let (lo, hi) = if e.is_nonnegative() { (0.05, 1.05) } else { (-1.0, 1.0) };
            for s in 0..*samples {
                let (f, h) = (uniform_vec(rng, n, lo, hi), uniform_vec(rng, n, lo, hi));
                out.extend(tag(check_convex_contraction(g, &e, &f, &h, t_grid)?, s));
            }
        }
        CheckSpec::CsiszarContraction { entropy, samples, t_grid } => {
            let e = EntropyFunction::parse(entropy)?;
            for s in 0..*samples {
                let (f, h) = (uniform_vec(rng, n, 0.05, 1.05), uniform_vec(rng, n, 0.05, 1.05));
                out.extend(tag(check_csiszar_contraction(g, e, &f, &h, t_grid)?, s));
            }
        }
        CheckSpec::HellingerContraction { p, samples, t_grid } => {
            for s in 0..*samples {
                let (mu0, mu1) = (random_measure(rng, n), random_measure(rng, n));
                out.extend(tag(check_hellinger_contraction(g, &mu0, &mu1, *p, t_grid)?, s));
            }
        }
        CheckSpec::BeGradient { samples, t_grid } => {
            for s in 0..*samples {
                let f = uniform_vec(rng, n, -1.0, 1.0);
                out.extend(tag(check_be_gradient(g, &f, ctx.gamma_k(), t_grid)?, s));
            }
        }
        CheckSpec::VarianceBound { samples, t_grid } => {
            for s in 0..*samples {
                let f = uniform_vec(rng, n, -1.0, 1.0);
                out.extend(tag(check_variance_bound(g, &f, ctx.gamma_k(), t_grid)?, s));
            }
        }
        CheckSpec::W2Contraction { mu0, mu1, t_grid, tolerance, .. } => {
            out = check_w2_contraction(g, ctx.metric_k(), &ctx.measure(mu0)?, &ctx.measure(mu1)?, t_grid, tol(tolerance))?
        }
        CheckSpec::Regularization { p, mu0, mu1, t_grid, tolerance, .. } => {
            out = check_regularization_he_wp(
                g,
                ctx.metric_k(),
                &ctx.measure(mu0)?,
                &ctx.measure(mu1)?,
                *p,
                t_grid,
                tol(tolerance),
            )?
        }
        CheckSpec::Asymptotic { p, mu0, t_grid, tolerance, .. } => {
            out = check_asymptotic(g, ctx.metric_k(), &ctx.measure(mu0)?, *p, t_grid, tol(tolerance))?
        }
        CheckSpec::HeHk { mu0, mu1, t_grid, tolerance, .. } => {
            out = check_he_hk(g, ctx.metric_k(), &ctx.measure(mu0)?, &ctx.measure(mu1)?, t_grid, ctx.hk, tol(tolerance))?
        }
        CheckSpec::EntropyDecay { .. } => unreachable!("validated: entropy decay is Gaussian only"),
    }
    Ok(out)
}

/// `max(0, -min slack)` over the records of one family.
fn worst_violation(records: &[CheckRecord], family: &str) -> f64 {
    records.iter().filter(|r| r.name == family).map(|r| -r.slack).fold(0.0, f64::max)
}

fn run_job(config: &SuiteConfig, built: &[Built], refined_built: &[OnceLock<Result<Built>>], i: usize, c: usize) -> Result<Vec<CheckRecord>> {
    let inst = &config.instances[i];
    let check = &inst.checks[c];
    let ctx = Ctx { built: &built[i], inst, hk: &config.hk };
    let mut rng = job_rng(config.seed, &inst.id, c);
    let mut records: Vec<CheckRecord> =
        run_check(&ctx, check, &mut rng, 1.0)?.into_iter().map(|r| r.with_param("check", c)).collect();
    if check.refine() {
        let fine_built = refined_built[i]
            .get_or_init(|| build(&refined(&inst.setting), config.seed, &inst.id))
            .as_ref()
            .map_err(|e| Error::Config(format!("instance {:?}: refined setting: {e}", inst.id)))?;
        let fine_ctx = Ctx { built: fine_built, inst, hk: &config.hk };
        let fine = run_check(&fine_ctx, check, &mut job_rng(config.seed, &inst.id, c), 0.5)?;
        let family = check.family();
        let (coarse_v, fine_v) = (worst_violation(&records, family), worst_violation(&fine, family));
        for r in &mut records {
            r.params.insert("level".into(), 0usize.into());
        }
        records.extend(fine.into_iter().map(|r| r.with_param("check", c).with_param("level", 1usize)));
        records.push(CheckRecord::new(
            format!("{family}.refinement"),
            params([("check", c.into())]),
            fine_v,
            coarse_v,
            EXACT_TOL,
            Exactness::Discretization,
        ));
    }
    Ok(records.into_iter().map(|r| r.with_param("instance", inst.id.as_str())).collect())
}

/// Runs every check of `config` on the global rayon pool.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    config.validate()?;
    let built: Vec<Built> =
        config.instances.par_iter().map(|inst| build(&inst.setting, config.seed, &inst.id)).collect::<Result<_>>()?;
    let refined_built: Vec<OnceLock<Result<Built>>> = config.instances.iter().map(|_| OnceLock::new()).collect();
    let jobs: Vec<(usize, usize)> =
        config.instances.iter().enumerate().flat_map(|(i, inst)| (0..inst.checks.len()).map(move |c| (i, c))).collect();
    let chunks: Vec<Vec<CheckRecord>> = jobs
        .par_iter()
        .map(|&(i, c)| run_job(config, &built, &refined_built, i, c))
        .collect::<Result<_>>()?;
    Ok(SuiteReport::from_records(config.seed, chunks.into_iter().flatten().collect()))
}

/// Runs the suite on a dedicated pool of `threads` workers (`0` picks the number of cores).
pub fn run_suite_with_threads(config: &SuiteConfig, threads: usize) -> Result<SuiteReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_suite(config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_empty_report() {
        let report = run_suite(&SuiteConfig::from_json("{}").unwrap()).unwrap();
        assert_eq!(report.total, 0);
        assert_eq!(report.seed, DEFAULT_SEED);
        assert!(report.is_success(true));
        assert_eq!(report.to_csv().lines().count(), 1);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        let bad = [
            r#"{"instances": [{"id": "a", "setting": {"kind": "moon"}, "checks": []}]}"#,
            r#"{"seed": 1, "extra": true}"#,
            r#"{"instances": [{"id": "a", "setting": {"kind": "gaussian"}, "checks": [{"check": "be_gradient", "t_grid": [1]}]}]}"#,
            r#"{"instances": [{"id": "a", "setting": {"kind": "two_point", "a": 1, "b": 1, "distance": 1},
                "checks": [{"check": "convex_contraction", "integrand": "cubic", "t_grid": [1]}]}]}"#,
            r#"{"instances": [{"id": "a", "setting": {"kind": "two_point", "a": 1, "b": 1, "distance": 1},
                "checks": [{"check": "w2_contraction", "mu0": {"kind": "stationary"}, "mu1": {"kind": "stationary"},
                            "t_grid": [1], "refine": true}]}]}"#,
            r#"{"instances": [{"id": "a", "setting": {"kind": "gaussian"}, "checks": []},
                              {"id": "a", "setting": {"kind": "gaussian"}, "checks": []}]}"#,
        ];
        for text in bad {
            assert!(matches!(SuiteConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn single_check_config() {
        let text = r#"{"seed": 7, "instances": [{"id": "chain", "setting": {"kind": "two_point", "a": 1, "b": 1, "distance": 1},
            "checks": [{"check": "convex_contraction", "integrand": "quadratic", "samples": 2, "t_grid": [0, 0.5, 1]}]}]}"#;
        let report = run_suite(&SuiteConfig::from_json(text).unwrap()).unwrap();
        assert_eq!(report.total, 2 * (3 + 2));
        assert_eq!(report.passed, report.total);
        assert!(report.records.iter().all(|r| r.params["instance"] == "chain".into() && r.is_consistent()));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let text = r#"{"instances": [
            {"id": "rc", "setting": {"kind": "random_chain", "n": 6},
             "checks": [{"check": "be_gradient", "samples": 3, "t_grid": [0.1, 1]},
                        {"check": "hellinger_contraction", "p": 1.5, "samples": 2, "t_grid": [0.2, 0.4]}]},
            {"id": "g", "setting": {"kind": "gaussian"},
             "checks": [{"check": "entropy_decay", "mu0": {"kind": "gaussian", "mean": 1, "var": 0.5}, "t_grid": [0.5]}]}]}"#;
        let config = SuiteConfig::from_json(text).unwrap();
        let a = run_suite_with_threads(&config, 1).unwrap();
        let b = run_suite_with_threads(&config, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.is_success(true));
    }

    #[test]
    fn report_round_trips_through_json() {
        let text = r#"{"instances": [{"id": "g", "setting": {"kind": "gaussian"},
            "checks": [{"check": "regularization", "p": 2, "mu0": {"kind": "gaussian", "mean": 0, "var": 1},
                        "mu1": {"kind": "gaussian", "mean": 1, "var": 1}, "t_grid": [0, 0.5]}]}]}"#;
        let report = run_suite(&SuiteConfig::from_json(text).unwrap()).unwrap();
        let back: SuiteReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
        assert_eq!(report.worst_slack["regularization"].0, report.records[1].slack);
    }

    #[test]
    fn refinement_adds_fine_records() {
        let text = r#"{"instances": [{"id": "c", "setting": {"kind": "cycle", "n": 12, "length": 6.283185307179586},
            "checks": [{"check": "w2_contraction", "mu0": {"kind": "gaussian", "mean": 1, "var": 0.3},
                        "mu1": {"kind": "gaussian", "mean": 3, "var": 0.3}, "t_grid": [0.1, 0.3], "refine": true}]}]}"#;
        let report = run_suite(&SuiteConfig::from_json(text).unwrap()).unwrap();
        assert_eq!(report.total, 2 + 2 + 1);
        let fine: Vec<_> = report.records.iter().filter(|r| r.params.get("level") == Some(&1usize.into())).collect();
        assert_eq!(fine.len(), 2);
        assert!(fine.iter().all(|r| r.tolerance == 0.5 * DISCRETIZATION_TOL));
        assert!(report.records.iter().any(|r| r.name == "w2_contraction.refinement"));
    }
}
