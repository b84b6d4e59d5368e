//! Numeric backends shared by every engine.
//!
//! All computations are written once, generic over [`Scalar`], and run either
//! in double precision (`f64`) or in exact rational arithmetic ([`Rational`]).
//! The exact backend is what the small-N oracles and golden values use.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::indices::Index;
use crate::tables::ContingencyTable;

/// Exact rational number.
pub type Rational = BigRational;

/// Relative tolerance used in double precision to decide that a maximum
/// coincides with an expectation.
pub const DEGENERATE_REL_TOL: f64 = 1e-12;

pub trait Scalar: Num + Signed + Clone + Debug + PartialOrd + Send + Sync + 'static {
    /// True for the exact rational backend.
    const EXACT: bool;

    fn from_ratio(num: i128, den: i128) -> Self;

    fn from_int(v: i128) -> Self {
        Self::from_ratio(v, 1)
    }

    fn from_rational(r: &Rational) -> Self;

    fn from_f64(x: f64) -> Result<Self>;

    fn to_f64(&self) -> f64;

    /// Square root; the exact backend only accepts perfect squares.
    fn sqrt(&self) -> Result<Self>;

    fn evaluate(index: &dyn Index, t: &ContingencyTable) -> Result<Self>;

    /// Equality used for the zero-denominator convention.
    fn coincides(&self, other: &Self) -> bool;

    /// Human-readable rendering (`a/b` for rationals).
    fn render(&self) -> String;

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_ratio(num: i128, den: i128) -> Self {
        num as f64 / den as f64
    }

    fn from_rational(r: &Rational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    fn from_f64(x: f64) -> Result<Self> {
        Ok(x)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn sqrt(&self) -> Result<Self> {
        if *self < 0.0 {
            return Err(Error::domain(format!("square root of negative value {self}")));
        }
        Ok(num_traits::Float::sqrt(*self))
    }

    fn evaluate(index: &dyn Index, t: &ContingencyTable) -> Result<Self> {
        index.eval_f64(t)
    }

    fn coincides(&self, other: &Self) -> bool {
        let scale = self.abs().max(other.abs()).max(1.0);
        (self - other).abs() <= DEGENERATE_REL_TOL * scale
    }

    fn render(&self) -> String {
        format!("{self}")
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_ratio(num: i128, den: i128) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn from_f64(x: f64) -> Result<Self> {
        Rational::from_float(x)
            .ok_or_else(|| Error::input(format!("{x} has no exact rational representation")))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn sqrt(&self) -> Result<Self> {
        if self.is_negative() {
            return Err(Error::domain("square root of negative value"));
        }
        let num = Roots::sqrt(self.numer());
        let den = Roots::sqrt(self.denom());
        if &num * &num == *self.numer() && &den * &den == *self.denom() {
            Ok(Rational::new(num, den))
        } else {
            Err(Error::capability(format!(
                "square root of {} is irrational; use double precision",
                self.render()
            )))
        }
    }

    fn evaluate(index: &dyn Index, t: &ContingencyTable) -> Result<Self> {
        index.eval_exact(t)
    }

    fn coincides(&self, other: &Self) -> bool {
        self == other
    }

    fn render(&self) -> String {
        if self.denom().is_one() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
}

/// Parses `"3"`, `"-1/5"`, `"0.25"` or `"1e-3"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::input(format!("cannot parse '{s}' as a number"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::input(format!("zero denominator in '{s}'")));
        }
        return Ok(Rational::new(n, d));
    }
    if let Ok(i) = s.parse::<BigInt>() {
        return Ok(Rational::from_integer(i));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: BigInt = format!("0{int_part}{frac_part}").parse().map_err(|_| bad())?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(all * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(all, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Ok(value)
}
