//! Scalar abstractions.
//!
//! Two layers: [`Field`] is anything with exact-or-rounded field arithmetic
//! (floats and rationals) and is enough to emit linear constraint rows.
//! [`Real`] adds the transcendental and ordering operations the numerical
//! solvers need, and is only implemented for `f32` and `f64`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, FromPrimitive, Num, NumAssign, ToPrimitive};

use crate::error::{Error, Result};

/// Exact decimal quantity used for tap-changer ratios.
pub type Exact = Ratio<i64>;

pub trait Field: Num + Clone + PartialOrd + Debug + Display + Neg<Output = Self> {
    /// Converts an exact rational, rounding when `Self` is a float.
    fn from_ratio(r: &Exact) -> Self;

    fn from_int(v: i64) -> Self {
        Self::from_ratio(&Exact::from_integer(v))
    }
}

pub trait Real:
    Field
    + Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Float literal conversion; every `f64` literal fits the implementors.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap()
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Field for f64 {
    fn from_ratio(r: &Exact) -> Self {
        *r.numer() as f64 / *r.denom() as f64
    }
}

impl Field for f32 {
    fn from_ratio(r: &Exact) -> Self {
        (*r.numer() as f64 / *r.denom() as f64) as f32
    }
}

impl Field for Exact {
    fn from_ratio(r: &Exact) -> Self {
        *r
    }
}

impl Field for BigRational {
    fn from_ratio(r: &Exact) -> Self {
        BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
    }
}

impl Real for f64 {}
impl Real for f32 {}

/// Parses a plain or scientific decimal literal into an exact rational.
///
/// `"0.95"` becomes `19/20`; binary floating point never enters.
pub fn parse_decimal(text: &str) -> Result<Exact> {
    let s = text.trim();
    let bad = || Error::Parse(format!("not a decimal number: {text:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Exact::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer: i64 = if all_digits.is_empty() {
        0
    } else {
        all_digits.parse().map_err(|_| bad())?
    };
    let scale = exponent - frac_part.len() as i32;
    let pow10 = |p: u32| 10i64.checked_pow(p).ok_or_else(bad);
    let mut value = if scale >= 0 {
        Exact::from_integer(numer.checked_mul(pow10(scale as u32)?).ok_or_else(bad)?)
    } else {
        Exact::new(numer, pow10((-scale) as u32)?)
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// Exact rational from a float that was itself read from a short decimal.
///
/// Uses the shortest round-trip representation, so `0.95_f64` maps to
/// `19/20` rather than the binary expansion of the nearest double.
pub fn exact_from_f64(v: f64) -> Result<Exact> {
    if !v.is_finite() {
        return Err(Error::Parse(format!("non-finite value {v}")));
    }
    parse_decimal(&format!("{v}"))
}
