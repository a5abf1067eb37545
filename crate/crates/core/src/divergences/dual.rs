use serde::Serialize;

use super::entropy::EntropyFunction;
use super::hellinger::flow_point;
use super::scalar::maximize_concave;
use crate::error::{check_len, Error, Result};
use crate::space::DiscreteMeasure;

const XTOL: f64 = 1e-10;

/// Static dual value with per-point potentials `(φ, ψ)`, `ψ = -F*(φ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticDual {
    pub value: f64,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// False when some pointwise supremum is only approached.
    pub attained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualValue {
    pub value: f64,
    pub attained: bool,
}

/// `sup Σ μ0 φ + μ1 ψ` over admissible pairs, solved point by point.
pub fn dual_static(f: EntropyFunction, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<StaticDual> {
    check_len(mu0.len(), mu1.len())?;
    let n = mu0.len();
    let (mut phi, mut psi) = (vec![0.0; n], vec![0.0; n]);
    let mut value = 0.0;
    let mut attained = true;
    let (lo, hi) = f.conjugate_domain();
    for i in 0..n {
        let (a, b) = (mu0.weights()[i], mu1.weights()[i]);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        if b == 0.0 {
            // Only φ is charged; the supremum is μ0 F'(∞), approached as φ ↑ F'(∞).
            let rec = f.recession();
            value += a * rec;
            phi[i] = rec;
            psi[i] = f64::NEG_INFINITY;
            attained &= rec.is_finite() && f.conjugate(rec).is_finite();
            continue;
        }
        if a == 0.0 {
            // Only ψ is charged; sup -F*(φ) = F(0), attained at φ = F'(0) when that is finite.
            let f0 = f.value_at_zero();
            let slope = f.derivative(0.0);
            value += b * f0;
            phi[i] = if slope.is_finite() { slope } else { lo };
            psi[i] = f0;
            attained &= slope.is_finite() && f0.is_finite();
            continue;
        }
        let r = maximize_concave(|x| a * x - b * f.conjugate(x), lo, hi, XTOL);
        value += r.value;
        phi[i] = r.arg;
        psi[i] = -f.conjugate(r.arg);
        attained &= r.attained;
    }
    Ok(StaticDual { value, phi, psi, attained })
}

/// `sup_{ζ > -1} Σ μ1 ζ/(1+ζ^{q-1})^{p-1} - μ0 ζ`, the dynamic dual of `He_p^p`.
pub fn hellinger_dual_value(p: f64, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<DualValue> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("dynamic Hellinger dual needs p > 1, got {p}")));
    }
    check_len(mu0.len(), mu1.len())?;
    let mut value = 0.0;
    let mut attained = true;
    for (&a, &b) in mu0.weights().iter().zip(mu1.weights()) {
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let r = maximize_concave(|z| b * flow_point(p, z) - a * z, -1.0, f64::INFINITY, XTOL);
        value += r.value;
        attained &= r.attained;
    }
    Ok(DualValue { value, attained })
}
