//! Exact arithmetic on the unit circle R/Z.
//!
//! A [`Mod1Fixed`] stores a fraction in [0,1) as a 128-bit numerator over
//! 2^128. Wrapping addition of numerators realizes addition mod 1 exactly,
//! and multiplying the numerator by an integer (wrapping) realizes the
//! dilation x -> h·x mod 1 exactly. All phase arithmetic in this crate is
//! carried out on these numerators; rounding happens only when a value is
//! converted to `f64` for the unit-circle map or an interval comparison.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{config, Error, Result};

/// Fixed-point width in bits.
pub const WIDTH: u32 = 128;

/// A number in [0,1) represented as `frac / 2^128`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Mod1Fixed {
    frac: u128,
}

impl Mod1Fixed {
    pub const ZERO: Mod1Fixed = Mod1Fixed { frac: 0 };
    pub const HALF: Mod1Fixed = Mod1Fixed { frac: 1u128 << 127 };

    /// Raw numerator over 2^128.
    #[inline]
    pub fn raw(self) -> u128 {
        self.frac
    }

    #[inline]
    pub fn from_raw(frac: u128) -> Self {
        Mod1Fixed { frac }
    }

    /// Exact addition mod 1.
    #[inline]
    pub fn wrapping_add(self, rhs: Mod1Fixed) -> Self {
        Mod1Fixed {
            frac: self.frac.wrapping_add(rhs.frac),
        }
    }

    /// Exact subtraction mod 1.
    #[inline]
    pub fn wrapping_sub(self, rhs: Mod1Fixed) -> Self {
        Mod1Fixed {
            frac: self.frac.wrapping_sub(rhs.frac),
        }
    }

    /// Exact negation mod 1; maps 0 to 0.
    #[inline]
    pub fn wrapping_neg(self) -> Self {
        Mod1Fixed {
            frac: self.frac.wrapping_neg(),
        }
    }

    /// Exact dilation: `h·x mod 1`.
    #[inline]
    pub fn wrapping_mul_int(self, h: u128) -> Self {
        Mod1Fixed {
            frac: self.frac.wrapping_mul(h),
        }
    }

    /// Distance to the nearest integer, as an exact numerator over 2^128.
    /// This is min(frac, 2^128 - frac), which fits in a u128 because the
    /// minimum is at most 2^127.
    #[inline]
    pub fn dist_to_int_raw(self) -> u128 {
        self.frac.min(self.frac.wrapping_neg())
    }

    /// Distance to the nearest integer as a double.
    pub fn dist_to_int(self) -> f64 {
        raw_to_f64(self.dist_to_int_raw())
    }

    /// Convert to a double in [0,1). One rounding.
    #[inline]
    pub fn to_f64(self) -> f64 {
        raw_to_f64(self.frac)
    }

    /// Round a finite double to the nearest representable point of the
    /// 2^-128 grid, reducing mod 1 first. Exact for dyadic inputs such as
    /// 0.5 or 0.1357 rounded from a double.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(config(format!("coefficient must be finite, got {x}")));
        }
        let r = x - x.floor();
        if r <= 0.0 || r >= 1.0 {
            // r can round to exactly 1.0 for tiny negative x; both ends are 0 mod 1.
            return Ok(Mod1Fixed::ZERO);
        }
        // Decompose r = m * 2^e exactly.
        let bits = r.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let mant = bits & ((1u64 << 52) - 1);
        let (m, e) = if raw_exp == 0 {
            (mant, -1074i64)
        } else {
            (mant | (1u64 << 52), raw_exp - 1075)
        };
        let shift = e + WIDTH as i64;
        let frac = if shift >= 0 {
            // r < 1 guarantees this does not overflow 128 bits.
            (m as u128) << shift
        } else {
            let s = (-shift) as u32;
            if s >= 64 {
                // Rounds to zero for anything below 2^-129 or so.
                0
            } else {
                let half = 1u128 << (s - 1);
                ((m as u128) + half) >> s
            }
        };
        Ok(Mod1Fixed { frac })
    }

    /// Parse a coefficient given as a decimal string (`0.1357`, `.5`, `2.25`)
    /// or a rational `p/q`. The value is reduced mod 1 and rounded once to
    /// the nearest grid point; downstream arithmetic treats the rounded
    /// value as exact.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(config("empty coefficient"));
        }
        let (negate, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let v = if let Some((p, q)) = body.split_once('/') {
            Self::from_ratio_str(p.trim(), q.trim())?
        } else {
            Self::from_decimal_str(body)?
        };
        Ok(if negate { v.wrapping_neg() } else { v })
    }

    fn from_ratio_str(p: &str, q: &str) -> Result<Self> {
        let p = BigUint::from_str(p).map_err(|_| config(format!("bad numerator `{p}`")))?;
        let q = BigUint::from_str(q).map_err(|_| config(format!("bad denominator `{q}`")))?;
        if q.is_zero() {
            return Err(config("zero denominator"));
        }
        let rem = p % &q;
        Ok(Mod1Fixed {
            frac: round_div_shifted(&rem, &q),
        })
    }

    fn from_decimal_str(body: &str) -> Result<Self> {
        let (_, frac_digits) = match body.split_once('.') {
            Some((int, frac)) => (int, frac),
            None => (body, ""),
        };
        let int_part = body.split('.').next().unwrap_or("");
        if !int_part.is_empty() && BigUint::from_str(int_part).is_err() {
            return Err(config(format!("bad coefficient `{body}`")));
        }
        if frac_digits.is_empty() {
            // Integers are 0 mod 1.
            if int_part.is_empty() {
                return Err(config(format!("bad coefficient `{body}`")));
            }
            return Ok(Mod1Fixed::ZERO);
        }
        let num =
            BigUint::from_str(frac_digits).map_err(|_| config(format!("bad coefficient `{body}`")))?;
        let den = BigUint::from(10u32).pow(frac_digits.len() as u32);
        Ok(Mod1Fixed {
            frac: round_div_shifted(&num, &den),
        })
    }

    /// Decimal rendering with enough digits (40) that parsing the string
    /// recovers the value exactly.
    pub fn to_decimal_string(self) -> String {
        if self.frac == 0 {
            return "0".to_string();
        }
        const DIGITS: usize = 40;
        let scaled = BigUint::from(self.frac) * BigUint::from(10u32).pow(DIGITS as u32);
        // Round-to-nearest division by 2^128.
        let rounded = (scaled + (BigUint::one() << (WIDTH - 1))) >> WIDTH;
        let mut digits = rounded.to_string();
        while digits.len() < DIGITS {
            digits.insert(0, '0');
        }
        let trimmed = digits.trim_end_matches('0');
        format!("0.{}", if trimmed.is_empty() { "0" } else { trimmed })
    }
}

/// Round-to-nearest of (num/den) * 2^128, for num < den.
fn round_div_shifted(num: &BigUint, den: &BigUint) -> u128 {
    let shifted = (num << WIDTH) + (den >> 1);
    let q: BigUint = shifted / den;
    // num < den so q ≤ 2^128; a carry to exactly 2^128 wraps to 0 mod 1.
    if q.bits() > WIDTH as u64 {
        0
    } else {
        q.to_u128().expect("quotient fits in 128 bits")
    }
}

#[inline]
fn raw_to_f64(frac: u128) -> f64 {
    // One rounding in the integer-to-float cast; the scale is an exact
    // power of two.
    (frac as f64) * 2.0f64.powi(-(WIDTH as i32))
}

impl fmt::Display for Mod1Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal_string())
    }
}

impl fmt::Debug for Mod1Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mod1Fixed({:#034x})", self.frac)
    }
}

impl FromStr for Mod1Fixed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mod1Fixed::parse(s)
    }
}

impl serde::Serialize for Mod1Fixed {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal_string())
    }
}

impl<'de> serde::Deserialize<'de> for Mod1Fixed {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Mod1Fixed::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_simple_rationals() {
        assert_eq!(Mod1Fixed::parse("1/2").unwrap(), Mod1Fixed::HALF);
        assert_eq!(Mod1Fixed::parse("0.5").unwrap(), Mod1Fixed::HALF);
        assert_eq!(Mod1Fixed::parse("3/2").unwrap(), Mod1Fixed::HALF);
        assert_eq!(Mod1Fixed::parse("1/4").unwrap().raw(), 1u128 << 126);
        assert_eq!(Mod1Fixed::parse("1").unwrap(), Mod1Fixed::ZERO);
        assert_eq!(Mod1Fixed::parse("7").unwrap(), Mod1Fixed::ZERO);
        assert_eq!(Mod1Fixed::parse("2.25").unwrap().raw(), 1u128 << 126);
        assert_eq!(Mod1Fixed::parse("0").unwrap(), Mod1Fixed::ZERO);
    }

    #[test]
    fn negative_input_wraps() {
        let quarter = Mod1Fixed::parse("1/4").unwrap();
        let neg = Mod1Fixed::parse("-1/4").unwrap();
        assert_eq!(neg, quarter.wrapping_neg());
        assert_eq!(neg.wrapping_add(quarter), Mod1Fixed::ZERO);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Mod1Fixed::parse("").is_err());
        assert!(Mod1Fixed::parse("x").is_err());
        assert!(Mod1Fixed::parse("1/0").is_err());
        assert!(Mod1Fixed::parse("0.12a").is_err());
    }

    #[test]
    fn dilation_is_exact() {
        let third = Mod1Fixed::parse("1/3").unwrap();
        // 2^128 ≡ 1 (mod 3), so 1/3 rounds down to (2^128-1)/3 and tripling
        // the rounded value lands exactly one grid step below 0.
        let tripled = third.wrapping_mul_int(3);
        assert_eq!(tripled.raw(), u128::MAX);
        assert_eq!(tripled.dist_to_int_raw(), 1);
        let quarter = Mod1Fixed::parse("1/4").unwrap();
        assert_eq!(quarter.wrapping_mul_int(2), Mod1Fixed::HALF);
        assert_eq!(quarter.wrapping_mul_int(4), Mod1Fixed::ZERO);
    }

    #[test]
    fn f64_round_trips_dyadics() {
        for &v in &[0.5, 0.25, 0.75, 0.0625, 0.0] {
            let m = Mod1Fixed::from_f64(v).unwrap();
            assert_eq!(m.to_f64(), v);
        }
        // Values ≥ 1 and negative values reduce mod 1.
        assert_eq!(Mod1Fixed::from_f64(2.5).unwrap(), Mod1Fixed::HALF);
        assert_eq!(
            Mod1Fixed::from_f64(-0.25).unwrap(),
            Mod1Fixed::parse("3/4").unwrap()
        );
    }

    #[test]
    fn dist_to_int_both_sides() {
        assert_eq!(Mod1Fixed::ZERO.dist_to_int(), 0.0);
        assert_eq!(Mod1Fixed::HALF.dist_to_int(), 0.5);
        let eighth = Mod1Fixed::parse("1/8").unwrap();
        let seven_eighths = Mod1Fixed::parse("7/8").unwrap();
        assert_eq!(eighth.dist_to_int(), 0.125);
        assert_eq!(seven_eighths.dist_to_int(), 0.125);
    }

    proptest! {
        // Decimal rendering must round-trip exactly (stronger than the
        // 2^-127 relative-error contract).
        #[test]
        fn decimal_string_round_trips(frac in any::<u128>()) {
            let m = Mod1Fixed::from_raw(frac);
            let s = m.to_decimal_string();
            let back = Mod1Fixed::parse(&s).unwrap();
            prop_assert_eq!(m, back);
        }

        #[test]
        fn f64_round_trip_error_small(frac in any::<u128>()) {
            let m = Mod1Fixed::from_raw(frac);
            let back = Mod1Fixed::from_f64(m.to_f64()).unwrap();
            // One f64 rounding: at most 2^-54 absolute error, allow a wrap.
            let diff = back.wrapping_sub(m).dist_to_int();
            prop_assert!(diff <= 2.0f64.powi(-53));
        }

        #[test]
        fn addition_wraps(a in any::<u128>(), b in any::<u128>()) {
            let m = Mod1Fixed::from_raw(a).wrapping_add(Mod1Fixed::from_raw(b));
            prop_assert_eq!(m.raw(), a.wrapping_add(b));
        }
    }
}
