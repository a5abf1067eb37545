//! Reversible Markov generators, the heat semigroup and Γ-calculus.
//!
//! `P_t = exp(tL)` is evaluated through the eigendecomposition of the
//! symmetrized generator `S = D^{1/2} L D^{-1/2}`, `D = diag(m)`, which is
//! computed once per generator and cached.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_time, Error, Result};
use crate::space::{DiscreteMeasure, MetricMeasureSpace};

const GENERATOR_RTOL: f64 = 1e-12;
const RANK_CUTOFF: f64 = 1e-10;

/// Eigenbasis of `L` that is orthonormal in `L²(m)`.
#[derive(Debug, Clone)]
pub struct SemigroupCache {
    /// Eigenvalues of `L`, all `<= 0`, ascending.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors of the symmetrized generator, as columns.
    pub vectors: DMatrix<f64>,
}

/// Generator `L` of a continuous-time Markov chain, reversible with respect to
/// the reference weights of its space.
#[derive(Debug, Clone)]
pub struct Generator {
    l: DMatrix<f64>,
    space: MetricMeasureSpace,
    sqrt_m: Vec<f64>,
    cache: OnceLock<SemigroupCache>,
}

impl PartialEq for Generator {
    fn eq(&self, other: &Self) -> bool {
        self.l == other.l && self.space == other.space
    }
}

impl Generator {
    /// Checks nonnegative off-diagonal rates, zero row sums and detailed balance.
    pub fn new(l: DMatrix<f64>, space: MetricMeasureSpace) -> Result<Self> {
        let n = space.len();
        if l.nrows() != n || l.ncols() != n {
            return Err(Error::InvalidGenerator(format!("L is {}x{}, space has {n} points", l.nrows(), l.ncols())));
        }
        if let Some(v) = l.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGenerator(format!("non-finite entry {v}")));
        }
        let scale = l.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
        let m = space.weights();
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let v = l[(i, j)];
                row += v;
                if i != j {
                    if v < 0.0 {
                        return Err(Error::InvalidGenerator(format!("negative rate L[{i}][{j}] = {v}")));
                    }
                    let (fwd, bwd) = (m[i] * v, m[j] * l[(j, i)]);
                    if (fwd - bwd).abs() > GENERATOR_RTOL * fwd.abs().max(bwd.abs()).max(scale * m[i].min(m[j])) {
                        return Err(Error::InvalidGenerator(format!(
                            "detailed balance fails at ({i}, {j}): m_i L_ij = {fwd}, m_j L_ji = {bwd}"
                        )));
                    }
                }
            }
            if row.abs() > GENERATOR_RTOL * scale * n as f64 {
                return Err(Error::InvalidGenerator(format!("row {i} sums to {row}, expected 0")));
            }
        }
        let sqrt_m = m.iter().map(|w| w.sqrt()).collect();
        Ok(Generator { l, space, sqrt_m, cache: OnceLock::new() })
    }

    pub fn from_rows(rows: &[Vec<f64>], space: MetricMeasureSpace) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            check_len(n, r.len())?;
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]), space)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn space(&self) -> &MetricMeasureSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.l[(i, j)]).collect()).collect()
    }

    pub fn semigroup(&self) -> &SemigroupCache {
        self.cache.get_or_init(|| {
            let n = self.len();
            let s = DMatrix::from_fn(n, n, |i, j| {
                let a = self.sqrt_m[i] / self.sqrt_m[j] * self.l[(i, j)];
                let b = self.sqrt_m[j] / self.sqrt_m[i] * self.l[(j, i)];
                0.5 * (a + b)
            });
            let eig = SymmetricEigen::new(s);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k].min(0.0)));
            let vectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
            SemigroupCache { eigenvalues, vectors }
        })
    }

    /// `L f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.l[(i, j)] * f[j]).sum()).collect()
    }

    fn mean(&self, f: &[f64]) -> f64 {
        let m = self.space.weights();
        f.iter().zip(m).map(|(a, b)| a * b).sum::<f64>() / m.iter().sum::<f64>()
    }
}

/// Second-difference generator on the cycle of `n` points and given length.
pub fn cycle_generator(n: usize, length: f64) -> Result<Generator> {
    let space = MetricMeasureSpace::cycle(n, length)?;
    let h = length / n as f64;
    let c = 1.0 / (h * h);
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        l[(i, (i + 1) % n)] += c;
        l[(i, (i + n - 1) % n)] += c;
        l[(i, i)] -= 2.0 * c;
    }
    Generator::new(l, space)
}

/// Ornstein-Uhlenbeck chain on the uniform grid `-radius, -radius + h, ..., radius`.
pub fn ou_generator(h: f64, radius: f64) -> Result<Generator> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {h}")));
    }
    let k = (radius / h).round();
    if (k * h - radius).abs() > 1e-9 * radius.max(1.0) {
        return Err(Error::NonuniformGrid(format!("radius {radius} is not a multiple of h = {h}")));
    }
    let k = k as i64;
    let grid: Vec<f64> = (-k..=k).map(|i| i as f64 * h).collect();
    ou_generator_on_grid(&grid)
}

/// Ornstein-Uhlenbeck chain on a given uniform grid covering `[-3, 3]`.
///
/// Birth-death rates `L(i, i±1) = sqrt(m_{i±1}/m_i)/h²` with Gaussian weights
/// `m_i ∝ exp(-x_i²/2) h` satisfy detailed balance exactly and approximate
/// `f'' - x f'` to second order in the interior.
pub fn ou_generator_on_grid(grid: &[f64]) -> Result<Generator> {
    if grid.len() < 3 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::UnsortedPositions);
    }
    let n = grid.len();
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    for (i, w) in grid.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(Error::NonuniformGrid(format!("step {i} is {} but mean spacing is {h}", w[1] - w[0])));
        }
    }
    let radius = (-grid[0]).min(grid[n - 1]);
    if radius < 3.0 - 1e-9 {
        return Err(Error::InvalidParameter(format!("grid must cover [-3, 3], truncation radius is {radius}")));
    }
    let raw: Vec<f64> = grid.iter().map(|x| (-0.5 * x * x).exp() * h).collect();
    let total: f64 = raw.iter().sum();
    let m: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let space = MetricMeasureSpace::line(grid, m)?;
    let mut l = DMatrix::zeros(n, n);
    let c = 1.0 / (h * h);
    for i in 0..n - 1 {
        // sqrt(m_{i+1}/m_i) = exp(-(x_{i+1}² - x_i²)/4).
        let r = (-(grid[i + 1] * grid[i + 1] - grid[i] * grid[i]) / 4.0).exp();
        l[(i, i + 1)] = c * r;
        l[(i + 1, i)] = c / r;
    }
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
        l[(i, i)] = -s;
    }
    Generator::new(l, space)
}

/// `P_t f = exp(tL) f`.
pub fn heat_apply(g: &Generator, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    check_time(t)?;
    check_len(g.len(), f.len())?;
    if t == 0.0 {
        return Ok(f.to_vec());
    }
    let c = g.mean(f);
    Ok(centred_flow(g, t, f, c).into_iter().map(|y| c + y).collect())
}

/// `P_t f - mean(f)`, never rounded against the mean; differences keep full
/// relative precision when `P_t f` is nearly constant.
pub fn heat_apply_centred(g: &Generator, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    check_time(t)?;
    check_len(g.len(), f.len())?;
    let c = g.mean(f);
    if t == 0.0 {
        return Ok(f.iter().map(|v| v - c).collect());
    }
    Ok(centred_flow(g, t, f, c))
}

// The constant part is invariant; only the centred part goes through the eigenbasis.
fn centred_flow(g: &Generator, t: f64, f: &[f64], c: f64) -> Vec<f64> {
    let cache = g.semigroup();
    let n = g.len();
    let x = DVector::from_iterator(n, (0..n).map(|i| (f[i] - c) * g.sqrt_m[i]));
    let mut w = cache.vectors.tr_mul(&x);
    for k in 0..n {
        w[k] *= (cache.eigenvalues[k] * t).exp();
    }
    let y = &cache.vectors * w;
    (0..n).map(|i| y[i] / g.sqrt_m[i]).collect()
}

/// Adjoint flow `P_t* μ = m · P_t(μ/m)`; tiny negative round-off is clamped to zero.
pub fn heat_dual(g: &Generator, t: f64, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    check_time(t)?;
    check_len(g.len(), mu.len())?;
    if t == 0.0 {
        return Ok(mu.clone());
    }
    let m = g.space.weights();
    let rho: Vec<f64> = mu.weights().iter().zip(m).map(|(a, b)| a / b).collect();
    let evolved = heat_apply(g, t, &rho)?;
    DiscreteMeasure::new(evolved.iter().zip(m).map(|(r, w)| (r * w).max(0.0)).collect())
}

/// Carré du champ `Γ(f, g)(x) = ½ Σ_y L(x,y)(f_y - f_x)(g_y - g_x)`.
pub fn gamma(g: &Generator, f: &[f64], h: &[f64]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|x| 0.5 * (0..n).filter(|&y| y != x).map(|y| g.l[(x, y)] * (f[y] - f[x]) * (h[y] - h[x])).sum::<f64>())
        .collect()
}

/// `Γ₂(f) = ½ L Γ(f, f) - Γ(f, L f)`.
pub fn gamma2(g: &Generator, f: &[f64]) -> Vec<f64> {
    let gf = gamma(g, f, f);
    let lgf = g.apply(&gf);
    let lf = g.apply(f);
    let cross = gamma(g, f, &lf);
    lgf.iter().zip(&cross).map(|(a, b)| 0.5 * a - b).collect()
}

/// Dirichlet energy `½ <-L f, f>_m = ½ Σ_x m_x Γ(f)(x)`.
pub fn dirichlet_energy(g: &Generator, f: &[f64]) -> f64 {
    0.5 * gamma(g, f, f).iter().zip(g.space.weights()).map(|(a, b)| a * b).sum::<f64>()
}

/// `R_K(t) = (e^{2Kt} - 1)/K`, `2t` at `K = 0`.
pub fn r_k(k: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    if k == 0.0 {
        Ok(2.0 * t)
    } else if k == f64::NEG_INFINITY {
        Ok(0.0)
    } else {
        Ok((2.0 * k * t).exp_m1() / k)
    }
}

/// Largest `K` with `Γ₂(f) >= K Γ(f)` at every point for every `f`.
///
/// Returns `-∞` when some point admits no finite `K`.
pub fn curvature_lower_bound(g: &Generator) -> f64 {
    curvature_profile(g).into_iter().fold(f64::INFINITY, f64::min)
}

/// Pointwise optimal constants `K(x)`.
pub fn curvature_profile(g: &Generator) -> Vec<f64> {
    let n = g.len();
    let l = &g.l;
    let neighbours: Vec<Vec<usize>> =
        (0..n).map(|x| (0..n).filter(|&y| y != x && l[(x, y)] != 0.0).collect()).collect();
    (0..n).map(|x| point_curvature(l, &neighbours, x)).collect()
}

fn sym_eigen(a: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let a = 0.5 * (&a + a.transpose());
    let e = SymmetricEigen::new(a);
    (e.eigenvalues, e.eigenvectors)
}

fn point_curvature(l: &DMatrix<f64>, nb: &[Vec<usize>], x: usize) -> f64 {
    // Local coordinates on the 2-ball around x, where Γ₂(f)(x) lives.
    let mut ball = vec![x];
    for &y in &nb[x] {
        ball.push(y);
    }
    for &y in &nb[x] {
        for &z in &nb[y] {
            if !ball.contains(&z) {
                ball.push(z);
            }
        }
    }
    let k = ball.len();
    if nb[x].is_empty() {
        return f64::INFINITY;
    }
    let pos = |v: usize| ball.iter().position(|&b| b == v).unwrap();

    // A_z as a local matrix: ½ Σ_y L(z,y) (e_y - e_z)(e_y - e_z)ᵀ.
    let a_of = |z: usize| {
        let mut a = DMatrix::zeros(k, k);
        let pz = pos(z);
        for &y in &nb[z] {
            let py = pos(y);
            let w = 0.5 * l[(z, y)];
            a[(py, py)] += w;
            a[(pz, pz)] += w;
            a[(py, pz)] -= w;
            a[(pz, py)] -= w;
        }
        a
    };
    let row = |y: usize| DVector::from_iterator(k, ball.iter().map(|&c| l[(y, c)]));

    let ax = a_of(x);
    let mut b = 0.5 * l[(x, x)] * &ax;
    for &z in &nb[x] {
        b += 0.5 * l[(x, z)] * a_of(z);
    }
    let lx = row(x);
    let mut c = DMatrix::zeros(k, k);
    let px = pos(x);
    for &y in &nb[x] {
        let mut d = DVector::zeros(k);
        d[pos(y)] += 1.0;
        d[px] -= 1.0;
        c += 0.5 * l[(x, y)] * &d * (row(y) - &lx).transpose();
    }
    let c = 0.5 * (&c + c.transpose());
    let b = b - c;

    let (wa, ua) = sym_eigen(ax);
    let amax = wa.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let range: Vec<usize> = (0..k).filter(|&i| wa[i] > RANK_CUTOFF * amax).collect();
    let kernel: Vec<usize> = (0..k).filter(|&i| wa[i] <= RANK_CUTOFF * amax).collect();
    let ur = ua.select_columns(&range);
    let uk = ua.select_columns(&kernel);
    let brr = ur.transpose() * &b * &ur;
    let mut schur = brr;
    let bscale = b.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    if !kernel.is_empty() {
        let bkk = uk.transpose() * &b * &uk;
        let brk = ur.transpose() * &b * &uk;
        let (wk, vk) = sym_eigen(bkk);
        let cut = RANK_CUTOFF * bscale;
        if wk.iter().any(|&v| v < -cut) {
            return f64::NEG_INFINITY;
        }
        // Pseudo-inverse on the positive part of B_kk; B_rk must not reach its null space.
        let mut pinv = DMatrix::zeros(kernel.len(), kernel.len());
        for i in 0..kernel.len() {
            let col = vk.column(i);
            if wk[i] > cut {
                pinv += (1.0 / wk[i]) * col * col.transpose();
            } else {
                let leak = (&brk * col).norm();
                if leak > 1e-8 * bscale {
                    return f64::NEG_INFINITY;
                }
            }
        }
        schur -= &brk * pinv * brk.transpose();
    }
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(range.len(), range.iter().map(|&i| 1.0 / wa[i].sqrt())));
    let m = &scale * schur * &scale;
    let (w, _) = sym_eigen(m);
    w.iter().fold(f64::INFINITY, |s, &v| s.min(v))
}

/// Where the space of a generator file lives.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceRef {
    Path(String),
    Inline(MetricMeasureSpace),
}

/// On-disk layout `{"L": [[...]], "space": <path or inline space>}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorFile {
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub space: SpaceRef,
}

impl GeneratorFile {
    pub fn inline(g: &Generator) -> Self {
        GeneratorFile { l: g.rows(), space: SpaceRef::Inline(g.space.clone()) }
    }

    pub fn with_space_path(g: &Generator, path: impl Into<String>) -> Self {
        GeneratorFile { l: g.rows(), space: SpaceRef::Path(path.into()) }
    }

    /// Relative space paths are resolved against `base_dir`.
    pub fn resolve(self, base_dir: &Path) -> Result<Generator> {
        let space = match self.space {
            SpaceRef::Inline(s) => s,
            SpaceRef::Path(p) => {
                let path = base_dir.join(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read space file {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
        };
        Generator::from_rows(&self.l, space)
    }
}

/// Reads a generator file, resolving a referenced space relative to it.
pub fn load_generator(path: &Path) -> Result<Generator> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: GeneratorFile =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    file.resolve(path.parent().unwrap_or(Path::new(".")))
}
