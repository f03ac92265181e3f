//! Exact probabilities.
//!
//! Every probability in the analyzer is an arbitrary-precision rational kept
//! in lowest terms; floating point only appears when a report converts a
//! probability into bits.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = num_rational::BigRational;

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

pub fn is_probability(r: &Rational) -> bool {
    !r.is_negative() && *r <= one()
}

/// `2^-k` as an exact rational.
pub fn pow2_neg(k: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << k)
}

/// Parses `num/den`, a decimal literal such as `0.81`, or an integer.
/// Decimals are converted exactly (`0.81` is `81/100`).
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    if let Some((int, frac)) = text.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let negative = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        if !int_digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let digits = format!("{int_digits}{frac}");
        let mut n: BigInt = if digits.is_empty() {
            BigInt::zero()
        } else {
            digits.parse().ok()?
        };
        if negative {
            n = -n;
        }
        let d = num_traits::pow(BigInt::from(10), frac.len());
        return Some(Rational::new(n, d));
    }
    let n: BigInt = text.parse().ok()?;
    Some(Rational::from_integer(n))
}

/// Renders `n` or `n/d`.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn log2_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().map(f64::log2).unwrap_or(f64::INFINITY);
    }
    // Keep the top 64 bits; the dropped tail cannot move the result by more
    // than 2^-60 relative.
    let shift = bits - 64;
    let top: BigUint = n >> shift;
    top.to_f64().unwrap().log2() + shift as f64
}

/// Base-2 logarithm of a positive rational, computed from the exact
/// numerator and denominator so that tiny probabilities do not underflow.
pub fn log2(r: &Rational) -> f64 {
    assert!(r.is_positive(), "log2 of a non-positive rational");
    let (sign, n) = r.numer().clone().into_parts();
    debug_assert_eq!(sign, Sign::Plus);
    let d = r.denom().magnitude();
    if n == *d {
        return 0.0;
    }
    log2_biguint(&n) - log2_biguint(d)
}

/// Self-information `-log2 p`; returns `0.0` (never `-0.0`) when `p = 1`.
pub fn self_information(p: &Rational) -> f64 {
    let bits = -log2(p);
    if bits == 0.0 {
        0.0
    } else {
        bits
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Largest multiple of `2^-bits` not exceeding `r` (for `r >= 0`).
pub fn floor_dyadic(r: &Rational, bits: u32) -> Rational {
    let scale = BigInt::one() << bits;
    let scaled = r * Rational::from_integer(scale.clone());
    Rational::new(scaled.floor().to_integer(), scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(parse_rational("0.81"), Some(ratio(81, 100)));
        assert_eq!(parse_rational("0.0625"), Some(ratio(1, 16)));
        assert_eq!(parse_rational("3/2"), Some(ratio(3, 2)));
        assert_eq!(parse_rational("1"), Some(one()));
        assert_eq!(parse_rational(".5"), Some(ratio(1, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("0.x"), None);
    }

    #[test]
    fn log2_matches_float_for_small_values() {
        assert!((log2(&ratio(241, 256)) - (241f64 / 256.0).log2()).abs() < 1e-15);
        assert_eq!(log2(&ratio(1, 8)), -3.0);
        assert_eq!(self_information(&one()).to_bits(), 0f64.to_bits());
    }

    #[test]
    fn log2_handles_huge_denominators() {
        let tiny = pow2_neg(5000);
        assert!((log2(&tiny) + 5000.0).abs() < 1e-9);
        let r = Rational::new(BigInt::from(3) << 2000u32, BigInt::one() << 2001u32);
        assert!((log2(&r) - 1.5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn floor_dyadic_rounds_down() {
        assert_eq!(floor_dyadic(&ratio(1, 3), 2), ratio(1, 4));
        assert_eq!(floor_dyadic(&ratio(1, 2), 4), ratio(1, 2));
    }
}
