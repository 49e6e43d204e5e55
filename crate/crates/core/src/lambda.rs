//! The Λ_q family of metrics on the nonnegative reals and the (p,q) exponent pair.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Result};

/// Tolerance used to decide `a == b` inside Λ_∞, which is discontinuous on the diagonal.
pub const LAMBDA_INF_EQ_TOL: f64 = 1e-12;

/// Exponents of the (p,q)-distortion. `f64::INFINITY` encodes ∞ for either slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PqParams {
    #[serde(serialize_with = "ser_exponent", deserialize_with = "de_exponent")]
    pub p: f64,
    #[serde(serialize_with = "ser_exponent", deserialize_with = "de_exponent")]
    pub q: f64,
}

impl PqParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        check_exponent("p", p)?;
        check_exponent("q", q)?;
        Ok(Self { p, q })
    }

    /// The (4,2) pair for which the sphere closed forms hold.
    pub fn four_two() -> Self {
        Self { p: 4.0, q: 2.0 }
    }

    pub fn p_finite(&self) -> bool {
        self.p.is_finite()
    }

    /// True when p = 2q, where the loss |d_X^q - d_Y^q|^{p/q} is a squared difference.
    pub fn is_quadratic(&self) -> bool {
        self.q.is_finite() && self.p.is_finite() && (self.p - 2.0 * self.q).abs() <= 1e-12 * self.p
    }

    /// min(p, q).
    pub fn p_wedge_q(&self) -> f64 {
        self.p.min(self.q)
    }
}

pub(crate) fn check_exponent(name: &str, v: f64) -> Result<()> {
    if v.is_nan() || v < 1.0 {
        return Err(domain(format!("{name} must lie in [1, inf], got {v}")));
    }
    Ok(())
}

/// Λ_q(a, b) = |a^q - b^q|^{1/q}; Λ_∞(a, b) = max(a, b) when a ≠ b and 0 otherwise.
pub fn lambda_q(a: f64, b: f64, q: f64) -> Result<f64> {
    if !(a >= 0.0) || !(b >= 0.0) {
        return Err(domain(format!("Λ_q needs nonnegative arguments, got ({a}, {b})")));
    }
    check_exponent("q", q)?;
    Ok(lambda_unchecked(a, b, q))
}

#[inline]
pub(crate) fn lambda_unchecked(a: f64, b: f64, q: f64) -> f64 {
    if q == 1.0 {
        (a - b).abs()
    } else if q.is_infinite() {
        if (a - b).abs() <= LAMBDA_INF_EQ_TOL {
            0.0
        } else {
            a.max(b)
        }
    } else if q == 2.0 {
        (a * a - b * b).abs().sqrt()
    } else {
        (a.powf(q) - b.powf(q)).abs().powf(1.0 / q)
    }
}

/// Λ_q(a, b)^p for finite p, computed without the intermediate root.
#[inline]
pub(crate) fn lambda_pow(a: f64, b: f64, p: f64, q: f64) -> f64 {
    if q.is_infinite() {
        return lambda_unchecked(a, b, q).powf(p);
    }
    let diff = if q == 1.0 {
        (a - b).abs()
    } else if q == 2.0 {
        (a * a - b * b).abs()
    } else {
        (a.powf(q) - b.powf(q)).abs()
    };
    pow_ratio(diff, p / q)
}

/// x^e with fast paths for the small integer exponents the solvers hit constantly.
#[inline]
pub(crate) fn pow_ratio(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else {
        x.powf(e)
    }
}

fn ser_exponent<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_exponent<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) => parse_exponent(&t).map_err(serde::de::Error::custom),
    }
}

/// Parses an exponent from text; accepts `inf`, `infinity` and `∞`.
pub fn parse_exponent(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim().to_ascii_lowercase();
    match t.as_str() {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        _ => t.parse::<f64>().map_err(|e| format!("bad exponent {text:?}: {e}")),
    }
}
