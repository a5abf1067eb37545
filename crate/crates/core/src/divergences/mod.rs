//! Csiszár divergences, p-Hellinger distances and their dual formulations.

mod dual;
mod entropy;
mod hellinger;
pub mod scalar;

pub use dual::{dual_static, hellinger_dual_value, DualValue, StaticDual};
pub use entropy::{signed_pow, EntropyFunction, PerspectiveFunction};
pub use hellinger::{he2_via_kl, hellinger, hellinger_conjugate, hellinger_dual_flow};

use crate::error::{check_len, Error, Result};
use crate::space::{lebesgue_decompose, DiscreteMeasure};

pub fn power_entropy(p: f64) -> EntropyFunction {
    EntropyFunction::power(p)
}

/// `∫ F(ϱ) dμ1 + F'(∞) μ0⊥(X)` for `μ0 = ϱ μ1 + μ0⊥`.
pub fn csiszar(f: EntropyFunction, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<f64> {
    let dec = lebesgue_decompose(mu0, mu1)?;
    let h = f.perspective();
    let mut total = 0.0;
    for (i, &b) in mu1.weights().iter().enumerate() {
        if b > 0.0 {
            total += h.value(mu0.weights()[i], b);
        }
    }
    let singular = dec.singular.mass();
    if singular > 0.0 {
        total += singular * f.recession();
    }
    Ok(total)
}

/// Kullback-Leibler divergence `KL(μ0 | μ1)`.
pub fn kl(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<f64> {
    csiszar(EntropyFunction::kl(), mu0, mu1)
}

/// `∫ H(ϱ0, ϱ1) dλ` with `ϱk` the densities of `μk` with respect to `λ`.
pub fn perspective_divergence(
    h: PerspectiveFunction,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    lambda: &DiscreteMeasure,
) -> Result<f64> {
    check_len(mu0.len(), mu1.len())?;
    check_len(mu0.len(), lambda.len())?;
    let mut total = 0.0;
    for i in 0..mu0.len() {
        let (a, b, l) = (mu0.weights()[i], mu1.weights()[i], lambda.weights()[i]);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        if l <= 0.0 {
            return Err(Error::NonDominating { index: i });
        }
        total += l * h.value(a / l, b / l);
    }
    Ok(total)
}
