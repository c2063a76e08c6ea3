//! Exact rational scalars used for clock values, rates and probabilities.

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number, always kept in lowest terms with a positive denominator.
pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RationalParseError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid rational literal {0:?}")]
    Invalid(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
    #[error("rational literal {0:?} is out of range")]
    Overflow(String),
}

/// Parses `"3"`, `"-2/7"`, `"1/3"` or a decimal such as `"0.125"`.
pub fn parse_rational(text: &str) -> Result<Rational, RationalParseError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(RationalParseError::Empty);
    }
    let invalid = || RationalParseError::Invalid(text.to_string());
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_int(num.trim()).ok_or_else(invalid)?;
        let d = parse_int(den.trim()).ok_or_else(invalid)?;
        if d == 0 {
            return Err(RationalParseError::ZeroDenominator(text.to_string()));
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let whole_digits = whole.trim_start_matches(['-', '+']);
        if (whole_digits.is_empty() && frac.is_empty())
            || !whole_digits.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
        {
            return Err(invalid());
        }
        if frac.len() > 30 {
            return Err(RationalParseError::Overflow(text.to_string()));
        }
        let overflow = || RationalParseError::Overflow(text.to_string());
        let w: i128 = if whole_digits.is_empty() {
            0
        } else {
            whole_digits.parse().map_err(|_| overflow())?
        };
        let f: i128 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| overflow())?
        };
        let scale = 10i128.pow(frac.len() as u32);
        let n = w
            .checked_mul(scale)
            .and_then(|v| v.checked_add(f))
            .ok_or_else(overflow)?;
        let value = Rational::new(n, scale);
        return Ok(if negative { -value } else { value });
    }
    parse_int(s).map(Rational::from_integer).ok_or_else(invalid)
}

fn parse_int(s: &str) -> Option<i128> {
    let digits = s.trim_start_matches(['-', '+']);
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Canonical text form: `"n"` for integers, `"n/d"` otherwise.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64()
        .unwrap_or_else(|| *r.numer() as f64 / *r.denom() as f64)
}

/// Integral part `int(r)` (floor) of a non-negative rational.
pub fn int_part(r: &Rational) -> i128 {
    r.floor().to_integer()
}

/// Fractional part `r - floor(r)`, in `[0, 1)`.
pub fn frac_part(r: &Rational) -> Rational {
    r - r.floor()
}

/// Rounds a non-negative float to the nearest multiple of `2^-bits`.
pub fn from_f64_dyadic(x: f64, bits: u32) -> Rational {
    debug_assert!(x.is_finite() && x >= 0.0);
    let scale = (1u64 << bits) as f64;
    let n = (x * scale).round();
    Rational::new(n as i128, 1i128 << bits)
}

pub fn is_positive(r: &Rational) -> bool {
    r.is_positive()
}

pub fn is_zero(r: &Rational) -> bool {
    r.is_zero()
}
