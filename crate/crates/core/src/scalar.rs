//! Scalar abstraction shared by the mechanism layer.
//!
//! Stake arithmetic runs either exactly over [`BigRational`] or in floating
//! point. Comparisons go through [`Scalar::tolerance`], which is zero for the
//! exact type and a small absolute slack for floats.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

/// Number type the graph and slashing code is generic over.
pub trait Scalar: Clone + Debug + Display + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Absolute slack used by tolerant comparisons.
    fn tolerance() -> Self;

    /// Converts an exact rational into this type (rounding for floats).
    fn from_rational(value: &BigRational) -> Self;

    /// Lossy conversion used by the floating-point analysis layers.
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Human readable value: `p/q` for exact rationals, shortest decimal for floats.
    fn render(&self) -> String {
        self.to_string()
    }

    /// Whether values of this type are exact.
    fn is_exact() -> bool {
        false
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_rational(&BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// `self >= other` up to the tolerance.
    fn ge_tol(&self, other: &Self) -> bool {
        self.clone() + Self::tolerance() >= *other
    }

    /// `self > other` by more than the tolerance.
    fn gt_tol(&self, other: &Self) -> bool {
        self.clone() > other.clone() + Self::tolerance()
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self.clone() - other.clone()).abs() <= Self::tolerance()
    }

    fn is_negligible(&self) -> bool {
        self.abs() <= Self::tolerance()
    }

    /// `[self]_+`.
    fn positive_part(&self) -> Self {
        if *self > Self::zero() {
            self.clone()
        } else {
            Self::zero()
        }
    }
}

pub(crate) fn max_of<T: Scalar>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

pub(crate) fn min_of<T: Scalar>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-9
    }

    fn from_rational(value: &BigRational) -> Self {
        value.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }

    fn from_rational(value: &BigRational) -> Self {
        value.to_f32().unwrap_or(f32::NAN)
    }
}

impl Scalar for BigRational {
    fn tolerance() -> Self {
        BigRational::zero()
    }

    fn from_rational(value: &BigRational) -> Self {
        value.clone()
    }

    fn render(&self) -> String {
        if self.denom().is_one() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }

    fn is_exact() -> bool {
        true
    }

    fn ge_tol(&self, other: &Self) -> bool {
        self >= other
    }

    fn gt_tol(&self, other: &Self) -> bool {
        self > other
    }

    fn approx_eq(&self, other: &Self) -> bool {
        self == other
    }

    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
}

/// Parses a decimal literal (optionally with exponent) into an exact rational.
pub fn parse_decimal(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_decimal(num)?;
        let den = parse_decimal(den)?;
        if den.is_zero() {
            return None;
        }
        return Some(num / den);
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.as_bytes().first()? {
        b'-' => (true, &mantissa[1..]),
        b'+' => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut numer = BigInt::from_str_radix(if all_digits.is_empty() { "0" } else { &all_digits }, 10).ok()?;
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u8);
    let value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(value)
}
