//! Finite metric-measure spaces and nonnegative measures on them.
//!
//! Measures are stored as raw point masses. Densities (with respect to the
//! reference weights or to another measure) are computed when needed and
//! never cached on the measure itself.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, MetricViolation, Result};

/// Relative slack allowed when validating metric axioms on floating-point input.
const METRIC_RTOL: f64 = 1e-12;

/// A finite point set with a validated metric and strictly positive reference weights.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceFile", into = "SpaceFile")]
pub struct MetricMeasureSpace {
    dist: DMatrix<f64>,
    m: Vec<f64>,
}

/// On-disk layout: `{"n": int, "dist": [[...]], "m": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceFile {
    pub n: usize,
    pub dist: Vec<Vec<f64>>,
    pub m: Vec<f64>,
}

impl TryFrom<SpaceFile> for MetricMeasureSpace {
    type Error = Error;

    fn try_from(file: SpaceFile) -> Result<Self> {
        check_len(file.n, file.dist.len())?;
        check_len(file.n, file.m.len())?;
        MetricMeasureSpace::from_rows(&file.dist, file.m)
    }
}

impl From<MetricMeasureSpace> for SpaceFile {
    fn from(space: MetricMeasureSpace) -> Self {
        let n = space.len();
        SpaceFile {
            n,
            dist: (0..n).map(|i| (0..n).map(|j| space.dist[(i, j)]).collect()).collect(),
            m: space.m,
        }
    }
}

impl MetricMeasureSpace {
    /// Validates the metric axioms (O(n^3) triangle scan) and the reference weights.
    pub fn new(dist: DMatrix<f64>, m: Vec<f64>) -> Result<Self> {
        if dist.nrows() != dist.ncols() {
            return Err(MetricViolation::NotSquare { rows: dist.nrows(), cols: dist.ncols() }.into());
        }
        let n = dist.nrows();
        check_len(n, m.len())?;
        validate_metric(&dist)?;
        for (index, &value) in m.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonpositiveReference { index, value });
            }
        }
        Ok(Self { dist, m })
    }

    pub fn from_rows(rows: &[Vec<f64>], m: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(MetricViolation::NotSquare { rows: n, cols: row.len() }.into());
            }
        }
        let dist = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(dist, m)
    }

    /// `n` equispaced points on a circle of circumference `length`, arc-length
    /// distance and uniform probability weights.
    pub fn cycle(n: usize, length: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("cycle needs n >= 3, got {n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter(format!("cycle length must be positive, got {length}")));
        }
        let h = length / n as f64;
        let dist = DMatrix::from_fn(n, n, |i, j| {
            let k = i.abs_diff(j);
            k.min(n - k) as f64 * h
        });
        Self::new(dist, vec![1.0 / n as f64; n])
    }

    /// Points on the real line with `|x - y|` as distance.
    pub fn line(positions: &[f64], m: Vec<f64>) -> Result<Self> {
        if positions.windows(2).any(|w| !(w[1] > w[0])) || positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::UnsortedPositions);
        }
        let n = positions.len();
        let dist = DMatrix::from_fn(n, n, |i, j| (positions[i] - positions[j]).abs());
        Self::new(dist, m)
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[(i, j)]
    }

    pub fn distances(&self) -> &DMatrix<f64> {
        &self.dist
    }

    /// Reference weights `m`.
    pub fn weights(&self) -> &[f64] {
        &self.m
    }

    pub fn reference_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure { weights: self.m.clone() }
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    /// Measure with density `rho` with respect to the reference weights.
    pub fn measure_from_density(&self, rho: &[f64]) -> Result<DiscreteMeasure> {
        check_len(self.len(), rho.len())?;
        DiscreteMeasure::new(rho.iter().zip(&self.m).map(|(r, m)| r * m).collect())
    }

    /// Density of `mu` with respect to the reference weights.
    pub fn density_of(&self, mu: &DiscreteMeasure) -> Result<Vec<f64>> {
        check_len(self.len(), mu.len())?;
        Ok(mu.weights().iter().zip(&self.m).map(|(w, m)| w / m).collect())
    }
}

fn validate_metric(dist: &DMatrix<f64>) -> Result<()> {
    let n = dist.nrows();
    let scale = dist.iter().cloned().fold(0.0, |a: f64, b| a.max(b.abs())).max(1.0);
    let tol = METRIC_RTOL * scale;
    for i in 0..n {
        for j in 0..n {
            let value = dist[(i, j)];
            if !value.is_finite() {
                return Err(MetricViolation::NonFinite { i, j, value }.into());
            }
        }
    }
    for i in 0..n {
        let value = dist[(i, i)];
        if value != 0.0 {
            return Err(MetricViolation::NonzeroDiagonal { i, value }.into());
        }
        for j in (i + 1)..n {
            let (forward, backward) = (dist[(i, j)], dist[(j, i)]);
            if (forward - backward).abs() > tol {
                return Err(MetricViolation::Asymmetric { i, j, forward, backward }.into());
            }
            if forward <= 0.0 {
                return Err(MetricViolation::NonpositiveOffDiagonal { i, j, value: forward }.into());
            }
        }
    }
    for j in 0..n {
        for i in 0..n {
            let dij = dist[(i, j)];
            for k in 0..n {
                let detour = dij + dist[(j, k)];
                let direct = dist[(i, k)];
                if direct > detour + tol {
                    return Err(MetricViolation::Triangle { i, j, k, direct, detour }.into());
                }
            }
        }
    }
    Ok(())
}

/// Nonnegative point masses; total mass need not be one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureFile", into = "MeasureFile")]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

/// On-disk layout: `{"weights": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFile {
    pub weights: Vec<f64>,
}

impl TryFrom<MeasureFile> for DiscreteMeasure {
    type Error = Error;

    fn try_from(file: MeasureFile) -> Result<Self> {
        DiscreteMeasure::new(file.weights)
    }
}

impl From<DiscreteMeasure> for MeasureFile {
    fn from(mu: DiscreteMeasure) -> Self {
        MeasureFile { weights: mu.weights }
    }
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        for (index, &value) in weights.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidWeight { index, value });
            }
        }
        Ok(Self { weights })
    }

    pub fn zeros(n: usize) -> Self {
        Self { weights: vec![0.0; n] }
    }

    /// Unit mass at `index`.
    pub fn dirac(n: usize, index: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.weights.iter().map(|w| w * factor).collect())
    }

    /// Rescaled to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        let mass = self.mass();
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        self.scaled(1.0 / mass)
    }

    pub fn add(&self, other: &DiscreteMeasure) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Self::new(self.weights.iter().zip(&other.weights).map(|(a, b)| a + b).collect())
    }
}

/// `mu0 = density * mu1 + singular` with `singular` concentrated where `mu1` vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct LebesgueDecomposition {
    pub density: Vec<f64>,
    pub singular: DiscreteMeasure,
}

pub fn lebesgue_decompose(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<LebesgueDecomposition> {
    check_len(mu0.len(), mu1.len())?;
    let mut density = vec![0.0; mu0.len()];
    let mut singular = vec![0.0; mu0.len()];
    for (i, (&a, &b)) in mu0.weights().iter().zip(mu1.weights()).enumerate() {
        if b > 0.0 {
            density[i] = a / b;
        } else {
            singular[i] = a;
        }
    }
    Ok(LebesgueDecomposition { density, singular: DiscreteMeasure { weights: singular } })
}
