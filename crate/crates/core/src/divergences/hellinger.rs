use super::entropy::{hellinger_conjugate_unchecked, signed_pow};
use crate::error::{check_len, Error, Result};
use crate::space::DiscreteMeasure;

fn require_p(p: f64, strict: bool) -> Result<()> {
    let ok = if strict { p > 1.0 } else { p >= 1.0 };
    if ok && p.is_finite() {
        Ok(())
    } else {
        let bound = if strict { "p > 1" } else { "p >= 1" };
        Err(Error::InvalidParameter(format!("Hellinger exponent needs {bound}, got {p}")))
    }
}

/// `He_p(μ0, μ1) = (Σ |μ0^{1/p} - μ1^{1/p}|^p)^{1/p}`.
pub fn hellinger(p: f64, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<f64> {
    require_p(p, false)?;
    check_len(mu0.len(), mu1.len())?;
    let s: f64 = mu0
        .weights()
        .iter()
        .zip(mu1.weights())
        .map(|(&a, &b)| if p == 1.0 { (a - b).abs() } else { (a.powf(1.0 / p) - b.powf(1.0 / p)).abs().powf(p) })
        .sum();
    Ok(s.powf(1.0 / p))
}

/// `He_2²` together with the minimizer `√(μ0 μ1)` of `KL(·|μ0) + KL(·|μ1)`.
pub fn he2_via_kl(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<(f64, DiscreteMeasure)> {
    check_len(mu0.len(), mu1.len())?;
    let mut value = 0.0;
    let mut arg = Vec::with_capacity(mu0.len());
    for (&a, &b) in mu0.weights().iter().zip(mu1.weights()) {
        let (ra, rb) = (a.sqrt(), b.sqrt());
        value += (ra - rb) * (ra - rb);
        arg.push(ra * rb);
    }
    Ok((value, DiscreteMeasure::new(arg)?))
}

/// `F_p*(ψ) = ψ / (1 - ψ^{q-1})^{p-1}` for `ψ < 1`, `+∞` otherwise (signed powers).
pub fn hellinger_conjugate(p: f64, psi: f64) -> Result<f64> {
    require_p(p, true)?;
    Ok(hellinger_conjugate_unchecked(p, psi))
}

/// Time-one solution map of `∂ζ + (p-1)|ζ|^q = 0`.
pub fn hellinger_dual_flow(p: f64, zeta0: &[f64]) -> Result<Vec<f64>> {
    require_p(p, true)?;
    if let Some(&z) = zeta0.iter().find(|&&z| !(z > -1.0)) {
        return Err(Error::InvalidParameter(format!("dual flow needs ζ0 > -1, got {z}")));
    }
    Ok(zeta0.iter().map(|&z| flow_point(p, z)).collect())
}

pub(crate) fn flow_point(p: f64, z: f64) -> f64 {
    let q = p / (p - 1.0);
    z / (1.0 + signed_pow(z, q - 1.0)).powf(p - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::kl;

    fn m(w: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(w.to_vec()).unwrap()
    }

    #[test]
    fn hellinger_examples() {
        let (a, b) = (m(&[1.0, 0.0]), m(&[0.0, 1.0]));
        assert!((hellinger(2.0, &a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let (a, b) = (m(&[0.5, 0.5]), m(&[0.25, 0.75]));
        let oracle = ((0.5f64.sqrt() - 0.5).powi(2) + (0.5f64.sqrt() - 0.75f64.sqrt()).powi(2)).sqrt();
        let got = hellinger(2.0, &a, &b).unwrap();
        assert!((got - oracle).abs() < 1e-15);
        assert!((got - 0.261052).abs() < 1e-6);
        assert!((hellinger(1.0, &a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!(hellinger(0.5, &a, &b).is_err());
    }

    #[test]
    fn he2_via_kl_examples() {
        let (v, arg) = he2_via_kl(&m(&[1.0, 1.0]), &m(&[1.0, 1.0])).unwrap();
        assert_eq!((v, arg.weights()), (0.0, &[1.0, 1.0][..]));
        let (v, arg) = he2_via_kl(&m(&[1.0, 0.0]), &m(&[0.0, 1.0])).unwrap();
        assert_eq!((v, arg.weights()), (2.0, &[0.0, 0.0][..]));
        let (a, b) = (m(&[4.0, 1.0]), m(&[1.0, 1.0]));
        let (v, arg) = he2_via_kl(&a, &b).unwrap();
        assert_eq!((v, arg.weights()), (1.0, &[2.0, 1.0][..]));
        let kl_sum = kl(&arg, &a).unwrap() + kl(&arg, &b).unwrap();
        assert!((kl_sum - v).abs() < 1e-14);
    }

    #[test]
    fn he2_argmin_beats_perturbations() {
        // Oracle: per-point 1-D minimization of KL(r|a) + KL(r|b) over a fine grid.
        for &(a, b) in &[(4.0f64, 1.0f64), (0.3, 2.0), (1.0, 1.0)] {
            let obj = |r: f64| r * (r / a).ln() - r + a + r * (r / b).ln() - r + b;
            let best = (1..20000).map(|k| obj(k as f64 * 5e-4)).fold(f64::INFINITY, f64::min);
            let star = (a * b).sqrt();
            assert!(obj(star) <= best + 1e-12);
            assert!((obj(star) - (a.sqrt() - b.sqrt()).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(hellinger_conjugate(2.0, 0.0).unwrap(), 0.0);
        assert!((hellinger_conjugate(2.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(hellinger_conjugate(2.0, 1.0).unwrap(), f64::INFINITY);
        assert!(hellinger_conjugate(1.0, 0.5).is_err());
    }

    #[test]
    fn flow_examples() {
        assert_eq!(hellinger_dual_flow(2.0, &[0.0]).unwrap(), vec![0.0]);
        assert!((hellinger_dual_flow(2.0, &[1.0]).unwrap()[0] - 0.5).abs() < 1e-15);
        assert!((hellinger_dual_flow(2.0, &[-0.5]).unwrap()[0] + 1.0).abs() < 1e-15);
        assert!(hellinger_dual_flow(2.0, &[-1.0]).is_err());
    }

    #[test]
    fn flow_matches_ode_integration() {
        // RK4 on ∂ζ = -(p-1)|ζ|^q over unit time.
        for &p in &[1.5, 2.0, 3.0] {
            let q = p / (p - 1.0);
            let rhs = |z: f64| -(p - 1.0) * z.abs().powf(q);
            for &z0 in &[-0.5, -0.2, 0.0, 0.7, 3.0] {
                let steps = 20000;
                let h = 1.0 / steps as f64;
                let mut z: f64 = z0;
                for _ in 0..steps {
                    let k1 = rhs(z);
                    let k2 = rhs(z + 0.5 * h * k1);
                    let k3 = rhs(z + 0.5 * h * k2);
                    let k4 = rhs(z + h * k3);
                    z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                }
                let closed = hellinger_dual_flow(p, &[z0]).unwrap()[0];
                assert!((z - closed).abs() < 1e-9, "p={p} z0={z0}: {z} vs {closed}");
            }
        }
    }

    #[test]
    fn nonnegative_flow_stays_in_range() {
        for &p in &[1.2, 2.0, 4.0] {
            for &z in &[0.0, 0.1, 1.0, 10.0, 1e6] {
                let out = hellinger_dual_flow(p, &[z]).unwrap()[0];
                assert!((0.0..=z).contains(&out));
            }
        }
    }
}
