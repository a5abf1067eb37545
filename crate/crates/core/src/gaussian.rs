//! Closed forms for one-dimensional Gaussian measures under the
//! Ornstein-Uhlenbeck flow, and quadrature oracles certifying them.

use serde::{Deserialize, Serialize};

use crate::error::{check_time, Error, Result};
use crate::quad::adaptive_simpson;

const MASS_RTOL: f64 = 1e-12;
const QUAD_TOL: f64 = 1e-9;

/// `mass · N(mean, var)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D {
    pub mean: f64,
    pub var: f64,
    #[serde(default = "unit")]
    pub mass: f64,
}

fn unit() -> f64 {
    1.0
}

impl Gaussian1D {
    pub fn new(mean: f64, var: f64, mass: f64) -> Result<Self> {
        if !(var > 0.0 && var.is_finite()) || !(mass > 0.0 && mass.is_finite()) || !mean.is_finite() {
            return Err(Error::InvalidParameter(format!("Gaussian needs var > 0 and mass > 0, got var {var}, mass {mass}")));
        }
        Ok(Gaussian1D { mean, var, mass })
    }

    pub fn standard() -> Self {
        Gaussian1D { mean: 0.0, var: 1.0, mass: 1.0 }
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn density(&self, x: f64) -> f64 {
        let z = x - self.mean;
        self.mass * (-0.5 * z * z / self.var).exp() / (2.0 * std::f64::consts::PI * self.var).sqrt()
    }

    fn log_density(&self, x: f64) -> f64 {
        let z = x - self.mean;
        self.mass.ln() - 0.5 * z * z / self.var - 0.5 * (2.0 * std::f64::consts::PI * self.var).ln()
    }
}

/// Adjoint OU flow: mean `e^{-t} mean`, variance `1 - (1 - var) e^{-2t}`.
pub fn ou_flow(g: Gaussian1D, t: f64) -> Result<Gaussian1D> {
    check_time(t)?;
    Ok(Gaussian1D { mean: g.mean * (-t).exp(), var: 1.0 + (g.var - 1.0) * (-2.0 * t).exp(), mass: g.mass })
}

/// `W_2 = sqrt(mass) · sqrt((m0 - m1)² + (σ0 - σ1)²)` for equal masses.
pub fn w2_gauss(g0: Gaussian1D, g1: Gaussian1D) -> Result<f64> {
    if (g0.mass - g1.mass).abs() > MASS_RTOL * g0.mass.max(g1.mass) {
        return Err(Error::MassMismatch { mass0: g0.mass, mass1: g1.mass });
    }
    let dm = g0.mean - g1.mean;
    let ds = g0.sd() - g1.sd();
    Ok((g0.mass * (dm * dm + ds * ds)).sqrt())
}

/// `1 - BC` for the Bhattacharyya coefficient `BC` of the normalized densities.
fn bhattacharyya_defect(g0: Gaussian1D, g1: Gaussian1D) -> f64 {
    let s = g0.var + g1.var;
    let dm = g0.mean - g1.mean;
    let ds = g0.sd() - g1.sd();
    // ln BC = ½ ln(2 σ0 σ1 / s) - dm² / 4s, with 2 σ0 σ1 / s = 1 - ds² / s.
    let log_bc = 0.5 * (-ds * ds / s).ln_1p() - dm * dm / (4.0 * s);
    -log_bc.exp_m1()
}

/// `He_2` against Lebesgue reference.
pub fn he2_gauss(g0: Gaussian1D, g1: Gaussian1D) -> f64 {
    let dr = g0.mass.sqrt() - g1.mass.sqrt();
    let sq = dr * dr + 2.0 * (g0.mass * g1.mass).sqrt() * bhattacharyya_defect(g0, g1);
    sq.max(0.0).sqrt()
}

/// `KL(g0 | g1)` including the mass term `M0 log(M0/M1) - M0 + M1`.
pub fn kl_gauss(g0: Gaussian1D, g1: Gaussian1D) -> f64 {
    let dm = g0.mean - g1.mean;
    let normalized = 0.5 * (g1.var / g0.var).ln() + (g0.var + dm * dm) / (2.0 * g1.var) - 0.5;
    g0.mass * ((g0.mass / g1.mass).ln() + normalized) - g0.mass + g1.mass
}

fn window(g0: Gaussian1D, g1: Gaussian1D) -> (f64, f64) {
    let s = g0.sd().max(g1.sd());
    (g0.mean.min(g1.mean) - 10.0 * s, g0.mean.max(g1.mean) + 10.0 * s)
}

/// Quadrature oracle for `He_2`.
pub fn he2_quad(g0: Gaussian1D, g1: Gaussian1D) -> f64 {
    let (a, b) = window(g0, g1);
    adaptive_simpson(
        |x| {
            let d = g0.density(x).sqrt() - g1.density(x).sqrt();
            d * d
        },
        a,
        b,
        QUAD_TOL,
    )
    .sqrt()
}

/// Quadrature oracle for `KL`.
pub fn kl_quad(g0: Gaussian1D, g1: Gaussian1D) -> f64 {
    let (a, b) = window(g0, g1);
    adaptive_simpson(
        |x| {
            let (p, q) = (g0.density(x), g1.density(x));
            let lr = g0.log_density(x) - g1.log_density(x);
            if p == 0.0 {
                q
            } else {
                p * lr - p + q
            }
        },
        a,
        b,
        QUAD_TOL,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::{heat_dual, ou_generator};
    use crate::space::DiscreteMeasure;
    use crate::transport::wasserstein_1d;

    fn n(mean: f64, var: f64) -> Gaussian1D {
        Gaussian1D::new(mean, var, 1.0).unwrap()
    }

    #[test]
    fn flow_examples() {
        let g = n(0.3, 2.0);
        assert_eq!(ou_flow(g, 0.0).unwrap(), g);
        assert_eq!(ou_flow(Gaussian1D::standard(), 1.7).unwrap(), Gaussian1D::standard());
        let f = ou_flow(n(0.0, 0.25), 0.5).unwrap();
        assert!((f.var - (1.0 - 0.75 * (-1f64).exp())).abs() < 1e-15);
        assert!((f.var - 0.7240904).abs() < 1e-6);
        assert!(ou_flow(g, -1.0).is_err());
    }

    #[test]
    fn flow_matches_discrete_ou() {
        let h = 0.02;
        let gen = ou_generator(h, 6.0).unwrap();
        let x: Vec<f64> = (0..gen.len()).map(|i| -6.0 + h * i as f64).collect();
        let g0 = n(0.0, 0.25);
        let w: Vec<f64> = x.iter().map(|&v| g0.density(v) * h).collect();
        let total: f64 = w.iter().sum();
        let mu = DiscreteMeasure::new(w.iter().map(|v| v / total).collect()).unwrap();
        let out = heat_dual(&gen, 0.5, &mu).unwrap();
        let mean: f64 = out.weights().iter().zip(&x).map(|(p, v)| p * v).sum();
        let var: f64 = out.weights().iter().zip(&x).map(|(p, v)| p * (v - mean) * (v - mean)).sum();
        let want = ou_flow(g0, 0.5).unwrap();
        assert!(mean.abs() < 1e-3);
        assert!((var - want.var).abs() < 1e-3, "{var} vs {}", want.var);
    }

    #[test]
    fn w2_examples() {
        assert_eq!(w2_gauss(n(0.4, 2.0), n(0.4, 2.0)).unwrap(), 0.0);
        assert!((w2_gauss(n(0.0, 1.0), n(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((w2_gauss(n(0.0, 1.0), n(0.0, 4.0)).unwrap() - 1.0).abs() < 1e-15);
        let heavy = Gaussian1D::new(0.0, 1.0, 2.0).unwrap();
        assert!(matches!(w2_gauss(n(0.0, 1.0), heavy), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn w2_matches_fine_grid_quantile_coupling() {
        let h = 1e-3;
        let x: Vec<f64> = (0..=24000).map(|i| -12.0 + h * i as f64).collect();
        let discretize = |g: Gaussian1D| {
            let w: Vec<f64> = x.iter().map(|&v| g.density(v)).collect();
            let s: f64 = w.iter().sum();
            DiscreteMeasure::new(w.iter().map(|v| v / s).collect()).unwrap()
        };
        for (a, b) in [(n(0.0, 1.0), n(1.0, 1.0)), (n(0.0, 1.0), n(0.0, 4.0)), (n(-0.5, 0.3), n(0.7, 1.8))] {
            let grid = wasserstein_1d(&x, &discretize(a), &discretize(b), 2.0).unwrap();
            assert!((grid - w2_gauss(a, b).unwrap()).abs() < 1e-3, "{grid} vs {}", w2_gauss(a, b).unwrap());
        }
    }

    #[test]
    fn he2_examples() {
        assert!(he2_gauss(n(1.0, 0.5), n(1.0, 0.5)).abs() < 1e-7);
        let v = he2_gauss(n(0.0, 1.0), n(1.0, 1.0));
        assert!((v - (2.0 - 2.0 * (-0.125f64).exp()).sqrt()).abs() < 1e-15);
        assert!((v - he2_quad(n(0.0, 1.0), n(1.0, 1.0))).abs() < 1e-6);
        let four = Gaussian1D::new(0.0, 1.0, 4.0).unwrap();
        assert!((he2_gauss(four, n(0.0, 1.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_gauss(n(0.2, 0.7), n(0.2, 0.7)), 0.0);
        assert!((kl_gauss(n(1.0, 1.0), n(0.0, 1.0)) - 0.5).abs() < 1e-15);
        let v = kl_gauss(n(0.0, 0.25), n(0.0, 1.0));
        assert!((v - (2f64.ln() + 0.125 - 0.5)).abs() < 1e-15);
        assert!((v - kl_quad(n(0.0, 0.25), n(0.0, 1.0))).abs() < 1e-6);
    }

    #[test]
    fn closed_forms_match_quadrature_on_grid() {
        let gs: Vec<Gaussian1D> = [(-1.0, 0.25, 1.0), (0.0, 1.0, 1.0), (0.5, 2.0, 0.5), (2.0, 0.6, 3.0)]
            .iter()
            .map(|&(m, v, w)| Gaussian1D::new(m, v, w).unwrap())
            .collect();
        for &a in &gs {
            for &b in &gs {
                assert!((he2_gauss(a, b) - he2_quad(a, b)).abs() < 1e-6, "{a:?} {b:?}");
                assert!((kl_gauss(a, b) - kl_quad(a, b)).abs() < 1e-6, "{a:?} {b:?}");
                assert!(he2_gauss(a, b).powi(2) <= kl_gauss(a, b) + 1e-12);
            }
        }
    }

    #[test]
    fn worked_regularization_instance() {
        let t: f64 = 0.5;
        let (a, b) = (ou_flow(n(0.0, 1.0), t).unwrap(), ou_flow(n(1.0, 1.0), t).unwrap());
        let lhs = he2_gauss(a, b);
        assert!((lhs - he2_quad(a, b)).abs() < 1e-6);
        assert!((lhs - 0.2998121).abs() < 1e-6, "{lhs}");
        let rhs = w2_gauss(n(0.0, 1.0), n(1.0, 1.0)).unwrap() / (2.0 * (2.0 * t).exp_m1().sqrt());
        assert!((rhs - 0.381437).abs() < 1e-6);
    }
}
