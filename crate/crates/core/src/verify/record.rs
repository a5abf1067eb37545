use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// The numerical solver behind the right-hand side did not converge.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exactness {
    /// Holds exactly on the finite space up to round-off.
    Exact,
    /// Holds in a continuum limit; the tolerance absorbs grid effects.
    Discretization,
    /// Checked through certified closed forms.
    Oracle,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

impl fmt::Display for Exactness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exactness::Exact => "exact",
            Exactness::Discretization => "discretization",
            Exactness::Oracle => "oracle",
        })
    }
}

/// JSON has no infinities; non-finite values travel as the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod ext_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Num(#[serde(with = "ext_f64")] f64),
    Text(String),
}

impl Param {
    fn cmp_total(&self, other: &Param) -> Ordering {
        match (self, other) {
            (Param::Num(a), Param::Num(b)) => a.total_cmp(b),
            (Param::Text(a), Param::Text(b)) => a.cmp(b),
            (Param::Num(_), Param::Text(_)) => Ordering::Less,
            (Param::Text(_), Param::Num(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Num(v) => write!(f, "{v}"),
            Param::Text(t) => f.write_str(t),
        }
    }
}

impl From<f64> for Param {
    fn from(v: f64) -> Self {
        Param::Num(v)
    }
}

impl From<usize> for Param {
    fn from(v: usize) -> Self {
        Param::Num(v as f64)
    }
}

impl From<&str> for Param {
    fn from(v: &str) -> Self {
        Param::Text(v.to_string())
    }
}

impl From<String> for Param {
    fn from(v: String) -> Self {
        Param::Text(v)
    }
}

pub type Params = BTreeMap<String, Param>;

/// Builds a parameter map from `(key, value)` pairs.
pub fn params<const N: usize>(entries: [(&str, Param); N]) -> Params {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// `rhs - lhs`, with `∞ <= ∞` counted as zero slack.
pub fn slack_of(lhs: f64, rhs: f64) -> f64 {
    if lhs == f64::INFINITY && rhs == f64::INFINITY {
        0.0
    } else {
        rhs - lhs
    }
}

/// One evaluated instance of an inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub params: Params,
    #[serde(with = "ext_f64")]
    pub lhs: f64,
    #[serde(with = "ext_f64")]
    pub rhs: f64,
    #[serde(with = "ext_f64")]
    pub slack: f64,
    #[serde(with = "ext_f64")]
    pub tolerance: f64,
    pub exactness: Exactness,
    pub verdict: Verdict,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, params: Params, lhs: f64, rhs: f64, tolerance: f64, exactness: Exactness) -> Self {
        let slack = slack_of(lhs, rhs);
        let verdict = if slack >= -tolerance { Verdict::Pass } else { Verdict::Fail };
        CheckRecord { name: name.into(), params, lhs, rhs, slack, tolerance, exactness, verdict }
    }

    pub fn inconclusive(mut self) -> Self {
        self.verdict = Verdict::Inconclusive;
        self
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Param>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    /// `slack` agrees with `rhs - lhs` and the verdict with `slack >= -tolerance`.
    pub fn is_consistent(&self) -> bool {
        let s = slack_of(self.lhs, self.rhs);
        let slack_ok = s == self.slack || (s.is_nan() && self.slack.is_nan());
        let verdict_ok = match self.verdict {
            Verdict::Pass => self.slack >= -self.tolerance,
            Verdict::Fail => !(self.slack >= -self.tolerance),
            Verdict::Inconclusive => true,
        };
        slack_ok && verdict_ok
    }

    /// `key=value` pairs joined by `;`.
    pub fn flat_params(&self) -> String {
        self.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
    }

    /// Order by name, then parameters.
    pub fn sort_key_cmp(&self, other: &CheckRecord) -> Ordering {
        self.name.cmp(&other.name).then_with(|| {
            let mut a = self.params.iter();
            let mut b = other.params.iter();
            loop {
                match (a.next(), b.next()) {
                    (None, None) => return Ordering::Equal,
                    (None, Some(_)) => return Ordering::Less,
                    (Some(_), None) => return Ordering::Greater,
                    (Some((ka, va)), Some((kb, vb))) => {
                        let o = ka.cmp(kb).then_with(|| va.cmp_total(vb));
                        if o != Ordering::Equal {
                            return o;
                        }
                    }
                }
            }
        })
    }
}
