use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign-preserving power `sign(x)|x|^a`, with `0^a = 0`.
pub fn signed_pow(x: f64, a: f64) -> f64 {
    if x > 0.0 {
        x.powf(a)
    } else if x < 0.0 {
        -(-x).powf(a)
    } else {
        0.0
    }
}

/// Convex density function `F: [0, inf) -> [0, inf]` with `F(1) = 0`, together
/// with its Legendre conjugate and recession constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "snake_case")]
pub enum EntropyFunction {
    /// Power-like family `E_p`; `Power(1.0)` generates Kullback-Leibler.
    Power(f64),
    /// `F_p(r) = |r^{1/p} - 1|^p`, generating the p-Hellinger distance (p >= 1).
    Hellinger(f64),
}

impl EntropyFunction {
    pub fn kl() -> Self {
        EntropyFunction::Power(1.0)
    }

    pub fn power(p: f64) -> Self {
        EntropyFunction::Power(p)
    }

    pub fn hellinger(p: f64) -> Result<Self> {
        if p >= 1.0 && p.is_finite() {
            Ok(EntropyFunction::Hellinger(p))
        } else {
            Err(Error::InvalidParameter(format!("Hellinger entropy needs p >= 1, got {p}")))
        }
    }

    pub fn name(&self) -> String {
        match self {
            EntropyFunction::Power(p) => format!("power:{p}"),
            EntropyFunction::Hellinger(p) => format!("hellinger:{p}"),
        }
    }

    /// Parses `power:<p>`, `hellinger:<p>` or `kl`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown entropy function '{text}'"));
        if text == "kl" {
            return Ok(Self::kl());
        }
        let (kind, p) = text.split_once(':').ok_or_else(bad)?;
        let p: f64 = p.trim().parse().map_err(|_| bad())?;
        match kind {
            "power" if p.is_finite() => Ok(Self::power(p)),
            "hellinger" => Self::hellinger(p),
            _ => Err(bad()),
        }
    }

    /// `F(r)`, using the lower semicontinuous extension at `r = 0`.
    pub fn value(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        match *self {
            EntropyFunction::Power(p) => {
                if p == 1.0 {
                    if r == 0.0 {
                        1.0
                    } else {
                        r * r.ln() - r + 1.0
                    }
                } else if p == 0.0 {
                    if r == 0.0 {
                        f64::INFINITY
                    } else {
                        r - 1.0 - r.ln()
                    }
                } else if r == 0.0 {
                    if p > 0.0 {
                        1.0 / p
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (r.powf(p) - p * (r - 1.0) - 1.0) / (p * (p - 1.0))
                }
            }
            EntropyFunction::Hellinger(p) => (r.powf(1.0 / p) - 1.0).abs().powf(p),
        }
    }

    /// `F'(r)` where finite; `r = 0` may return `-inf`.
    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            EntropyFunction::Power(p) => {
                if p == 1.0 {
                    r.ln()
                } else {
                    (r.powf(p - 1.0) - 1.0) / (p - 1.0)
                }
            }
            EntropyFunction::Hellinger(p) => {
                if p == 1.0 {
                    return (r - 1.0).signum() * if r == 1.0 { 0.0 } else { 1.0 };
                }
                let s = r.powf(1.0 / p);
                signed_pow(s - 1.0, p - 1.0) * r.powf(1.0 / p - 1.0)
            }
        }
    }

    /// Recession constant `F'(inf) = lim F(r)/r`.
    pub fn recession(&self) -> f64 {
        match *self {
            EntropyFunction::Power(p) if p >= 1.0 => f64::INFINITY,
            EntropyFunction::Power(p) => 1.0 / (1.0 - p),
            EntropyFunction::Hellinger(_) => 1.0,
        }
    }

    /// Legendre conjugate `F*(phi) = sup_{s >= 0} (s phi - F(s))`.
    pub fn conjugate(&self, phi: f64) -> f64 {
        match *self {
            EntropyFunction::Power(p) => {
                if p == 1.0 {
                    phi.exp_m1()
                } else if p == 0.0 {
                    if phi < 1.0 {
                        -(-phi).ln_1p()
                    } else {
                        f64::INFINITY
                    }
                } else {
                    let base = 1.0 + (p - 1.0) * phi;
                    if p > 1.0 {
                        (base.max(0.0).powf(p / (p - 1.0)) - 1.0) / p
                    } else if base > 0.0 {
                        (base.powf(p / (p - 1.0)) - 1.0) / p
                    } else {
                        f64::INFINITY
                    }
                }
            }
            EntropyFunction::Hellinger(p) => {
                if p == 1.0 {
                    if phi <= 1.0 {
                        phi.max(-1.0)
                    } else {
                        f64::INFINITY
                    }
                } else {
                    hellinger_conjugate_unchecked(p, phi)
                }
            }
        }
    }

    /// Effective domain of the conjugate as an open interval `(lo, hi)`.
    pub fn conjugate_domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, self.recession())
    }

    /// Lower bound `inf F* = -F(0)`.
    pub fn value_at_zero(&self) -> f64 {
        self.value(0.0)
    }

    pub fn perspective(self) -> PerspectiveFunction {
        PerspectiveFunction { entropy: self }
    }
}

pub(crate) fn hellinger_conjugate_unchecked(p: f64, psi: f64) -> f64 {
    if psi >= 1.0 {
        return f64::INFINITY;
    }
    let q = p / (p - 1.0);
    psi / (1.0 - signed_pow(psi, q - 1.0)).powf(p - 1.0)
}

/// One-homogeneous perspective `H(r, s) = s F(r/s)`, `H(r, 0) = r F'(inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerspectiveFunction {
    entropy: EntropyFunction,
}

impl PerspectiveFunction {
    pub fn entropy(&self) -> EntropyFunction {
        self.entropy
    }

    pub fn value(&self, r: f64, s: f64) -> f64 {
        if s > 0.0 {
            if let EntropyFunction::Hellinger(p) = self.entropy {
                // Symmetric closed form avoids the division.
                return (r.powf(1.0 / p) - s.powf(1.0 / p)).abs().powf(p);
            }
            if r == 0.0 {
                return s * self.entropy.value(0.0);
            }
            if let EntropyFunction::Power(p) = self.entropy {
                if p == 1.0 {
                    return r * (r.ln() - s.ln()) + s - r;
                }
            }
            s * self.entropy.value(r / s)
        } else if r > 0.0 {
            r * self.entropy.recession()
        } else {
            0.0
        }
    }
}
