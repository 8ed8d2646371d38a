//! Exact rationals and the float/rational bridge used at the solver boundary.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Arbitrary-precision rational, always in lowest terms with a positive denominator.
pub type Rational = num_rational::BigRational;

/// Default denominator cap when turning solver floats into rationals.
pub const DEFAULT_DENOMINATOR_CAP: u64 = 1_000_000;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Best rational approximation of `value` with denominator at most `max_den`,
/// found by walking the continued-fraction convergents and the final
/// semiconvergent.
pub fn rationalize(value: f64, max_den: u64) -> Rational {
    assert!(value.is_finite(), "cannot rationalize {value}");
    assert!(max_den >= 1);
    let negative = value < 0.0;
    let target = value.abs();

    // Convergents h/k.
    let (mut h_prev, mut h) = (0u128, 1u128);
    let (mut k_prev, mut k) = (1u128, 0u128);
    let mut rest = target;
    let cap = max_den as u128;
    loop {
        let a = rest.floor();
        if a > 1e18 {
            break;
        }
        let a_int = a as u128;
        let k_next = a_int * k + k_prev;
        if k_next > cap {
            // Largest semiconvergent that still fits under the cap.
            let steps = (cap - k_prev) / k;
            let (h_semi, k_semi) = (steps * h + h_prev, steps * k + k_prev);
            if k_semi > 0 {
                let semi = h_semi as f64 / k_semi as f64;
                let conv = h as f64 / k as f64;
                if (semi - target).abs() < (conv - target).abs() {
                    h = h_semi;
                    k = k_semi;
                }
            }
            break;
        }
        let h_next = a_int * h + h_prev;
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
        let frac = rest - a;
        if frac < 1e-15 {
            break;
        }
        rest = 1.0 / frac;
    }
    if k == 0 {
        // Only happens when the very first partial quotient overflowed.
        k = 1;
        h = target.round() as u128;
    }
    let r = Rational::new(BigInt::from(h), BigInt::from(k));
    if negative {
        -r
    } else {
        r
    }
}

/// Rationalize a vector of weights, clamp negatives to zero and renormalize so
/// the result sums to exactly one. Returns `None` when nothing positive remains.
pub fn rationalize_simplex(values: &[f64], max_den: u64) -> Option<Vec<Rational>> {
    let mut out: Vec<Rational> = values
        .iter()
        .map(|&v| {
            let r = rationalize(v, max_den);
            if r.is_negative() {
                Rational::zero()
            } else {
                r
            }
        })
        .collect();
    let total: Rational = out.iter().cloned().sum();
    if total.is_zero() {
        return None;
    }
    if !total.is_one() {
        for v in &mut out {
            *v = &*v / &total;
        }
    }
    Some(out)
}

/// Least common multiple of the denominators.
pub fn lcm_of_denominators<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// `{"num": "...", "den": "..."}` wire form; strings keep big integers exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalJson {
    pub num: String,
    pub den: String,
}

impl From<&Rational> for RationalJson {
    fn from(r: &Rational) -> Self {
        RationalJson {
            num: r.numer().to_string(),
            den: r.denom().to_string(),
        }
    }
}

impl RationalJson {
    pub fn to_rational(&self) -> Result<Rational> {
        parse_pair(&self.num, &self.den)
    }
}

pub fn parse_pair(num: &str, den: &str) -> Result<Rational> {
    let n: BigInt = num
        .trim()
        .parse()
        .map_err(|_| crate::Error::Parameter(format!("bad numerator {num:?}")))?;
    let d: BigInt = den
        .trim()
        .parse()
        .map_err(|_| crate::Error::Parameter(format!("bad denominator {den:?}")))?;
    if d.is_zero() {
        return param("zero denominator");
    }
    Ok(Rational::new(n, d))
}

/// Parses "p/q", "p", or a decimal like "0.25" exactly.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        return parse_pair(n, d);
    }
    if let Some((whole, frac)) = text.split_once('.') {
        let digits = format!("{whole}{frac}");
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let n: BigInt = digits
            .parse()
            .map_err(|_| crate::Error::Parameter(format!("bad decimal {text:?}")))?;
        return Ok(Rational::new(n, scale));
    }
    parse_pair(text, "1")
}

/// Serde adapter writing a rational as a `[num, den]` string pair.
pub mod pair {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        [r.numer().to_string(), r.denom().to_string()].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let [n, den] = <[String; 2]>::deserialize(d)?;
        parse_pair(&n, &den).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter writing a rational as `{"num": .., "den": ..}`.
pub mod object {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        RationalJson::from(r).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        RationalJson::deserialize(d)?
            .to_rational()
            .map_err(serde::de::Error::custom)
    }
}
