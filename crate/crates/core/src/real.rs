//! Scalar abstraction over the two supported working precisions.
//!
//! All numerics in this crate are generic over [`Real`]. Two implementations
//! exist: plain `f64` (the default, ~16 significant digits) and [`DDouble`],
//! an unevaluated sum of two `f64` values giving ~32 significant digits.
//! The extended type is used for final root polishing so that rule tables can
//! be emitted with 20 trustworthy digits and residual norms below 1e-24.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseRealError {
    #[error("empty numeric literal")]
    Empty,
    #[error("invalid numeric literal: {0:?}")]
    Invalid(String),
}

/// Floating point scalar with enough surface for the quadrature numerics.
pub trait Real:
    Copy
    + PartialOrd
    + PartialEq
    + fmt::Debug
    + fmt::Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    const NAME: &'static str;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn from_usize(n: usize) -> Self;
    fn from_i64(n: i64) -> Self;
    /// Exact rational constructor, e.g. `from_ratio(1, 7)`.
    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn is_finite(self) -> bool;
    /// Unit roundoff of the representation.
    fn epsilon() -> Self;
    fn max_of(self, other: Self) -> Self {
        if self > other {
            self
        } else {
            other
        }
    }
    fn min_of(self, other: Self) -> Self {
        if self < other {
            self
        } else {
            other
        }
    }
    fn parse_str(s: &str) -> Result<Self, ParseRealError>;
    /// Decimal rendering with `sig` significant digits, positional when the
    /// exponent is moderate, scientific otherwise.
    fn to_decimal_string(self, sig: usize) -> String;
    /// Canonical two-term representation, used to convert between precisions
    /// without losing information where the target can hold it.
    fn to_parts(self) -> (f64, f64);
    fn from_parts(hi: f64, lo: f64) -> Self;
}

/// Lossless-where-possible conversion between the working precisions.
pub fn convert<R: Real, S: Real>(x: R) -> S {
    let (hi, lo) = x.to_parts();
    S::from_parts(hi, lo)
}

impl Real for f64 {
    const NAME: &'static str = "double";

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_usize(n: usize) -> Self {
        n as f64
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn epsilon() -> Self {
        f64::EPSILON
    }
    fn parse_str(s: &str) -> Result<Self, ParseRealError> {
        // Parse through DDouble so that >17-digit literals round correctly.
        DDouble::parse_str(s).map(|d| d.to_f64())
    }
    fn to_decimal_string(self, sig: usize) -> String {
        DDouble::from(self).to_decimal_string(sig)
    }
    fn to_parts(self) -> (f64, f64) {
        (self, 0.0)
    }
    fn from_parts(hi: f64, lo: f64) -> Self {
        hi + lo
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`; ~106 bits of precision.
#[derive(Clone, Copy, Default)]
pub struct DDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = f64::mul_add(a, b, -p);
    (p, e)
}

impl DDouble {
    pub const ZERO: DDouble = DDouble { hi: 0.0, lo: 0.0 };
    pub const ONE: DDouble = DDouble { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn new(hi: f64, lo: f64) -> Self {
        let (s, e) = quick_two_sum(hi, lo);
        DDouble { hi: s, lo: e }
    }

    pub fn from_i64(n: i64) -> Self {
        // |n| in this crate stays far below 2^53, so the cast is exact.
        DDouble {
            hi: n as f64,
            lo: 0.0,
        }
    }

    pub fn recip(self) -> Self {
        DDouble::ONE / self
    }

    fn add_f64(self, b: f64) -> Self {
        let (s1, s2) = two_sum(self.hi, b);
        DDouble::new(s1, s2 + self.lo)
    }

    fn mul_f64(self, b: f64) -> Self {
        let (p1, p2) = two_prod(self.hi, b);
        DDouble::new(p1, p2 + self.lo * b)
    }

    /// 10^k with double-double accuracy (exact for |k| <= 22 digits of 5^k room).
    fn pow10(k: i32) -> Self {
        let mut result = DDouble::ONE;
        let mut base = DDouble::from_i64(10);
        let mut n = k.unsigned_abs();
        while n > 0 {
            if n & 1 == 1 {
                result = result * base;
            }
            base = base * base;
            n >>= 1;
        }
        if k < 0 {
            DDouble::ONE / result
        } else {
            result
        }
    }

    /// Digits of `|self|` in base 10 plus the decimal exponent of the leading
    /// digit. Rounds to `sig` digits. `self` must be finite and nonzero.
    fn digits(self, sig: usize) -> (Vec<u8>, i32) {
        let mut r = self.abs();
        let mut exp = r.hi.abs().log10().floor() as i32;
        r = r * DDouble::pow10(-exp);
        if r.hi >= 10.0 {
            r = r * DDouble::pow10(-1);
            exp += 1;
        } else if r.hi < 1.0 {
            r = r.mul_f64(10.0);
            exp -= 1;
        }
        let n = sig + 2;
        let mut digits = vec![0i32; n];
        for d in digits.iter_mut() {
            *d = r.hi.floor() as i32;
            r = (r - DDouble::from_i64(*d as i64)).mul_f64(10.0);
        }
        // Borrow/carry pass: truncation of `hi` can leave a digit at -1 or 10.
        for i in (1..n).rev() {
            if digits[i] < 0 {
                digits[i] += 10;
                digits[i - 1] -= 1;
            } else if digits[i] > 9 {
                digits[i] -= 10;
                digits[i - 1] += 1;
            }
        }
        if digits[0] == 0 {
            digits.remove(0);
            exp -= 1;
        } else {
            digits.truncate(sig + 1);
        }
        // Round on the guard digit.
        let n = digits.len();
        if digits[n - 1] >= 5 {
            digits[n - 2] += 1;
            for i in (1..n - 1).rev() {
                if digits[i] > 9 {
                    digits[i] -= 10;
                    digits[i - 1] += 1;
                }
            }
        }
        digits.truncate(sig);
        if digits[0] > 9 {
            // 9.99... rounded up to 10.0...
            digits[0] = 1;
            digits.insert(1, 0);
            digits.truncate(sig);
            exp += 1;
        }
        (digits.into_iter().map(|d| d as u8).collect(), exp)
    }
}

impl From<f64> for DDouble {
    fn from(x: f64) -> Self {
        DDouble { hi: x, lo: 0.0 }
    }
}

impl Add for DDouble {
    type Output = DDouble;
    fn add(self, other: DDouble) -> DDouble {
        let (s1, s2) = two_sum(self.hi, other.hi);
        let (t1, t2) = two_sum(self.lo, other.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        DDouble::new(s1, s2 + t2)
    }
}

impl Sub for DDouble {
    type Output = DDouble;
    fn sub(self, other: DDouble) -> DDouble {
        self + (-other)
    }
}

impl Mul for DDouble {
    type Output = DDouble;
    fn mul(self, other: DDouble) -> DDouble {
        let (p1, p2) = two_prod(self.hi, other.hi);
        DDouble::new(p1, p2 + self.hi * other.lo + self.lo * other.hi)
    }
}

impl Div for DDouble {
    type Output = DDouble;
    fn div(self, other: DDouble) -> DDouble {
        let q1 = self.hi / other.hi;
        let r = self - other.mul_f64(q1);
        let q2 = r.hi / other.hi;
        let r = r - other.mul_f64(q2);
        let q3 = r.hi / other.hi;
        let (s, e) = quick_two_sum(q1, q2);
        DDouble::new(s, e).add_f64(q3)
    }
}

impl Neg for DDouble {
    type Output = DDouble;
    fn neg(self) -> DDouble {
        DDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl AddAssign for DDouble {
    fn add_assign(&mut self, other: Self) {
        *self = *self + other;
    }
}
impl SubAssign for DDouble {
    fn sub_assign(&mut self, other: Self) {
        *self = *self - other;
    }
}
impl MulAssign for DDouble {
    fn mul_assign(&mut self, other: Self) {
        *self = *self * other;
    }
}
impl DivAssign for DDouble {
    fn div_assign(&mut self, other: Self) {
        *self = *self / other;
    }
}

impl PartialEq for DDouble {
    fn eq(&self, other: &Self) -> bool {
        self.hi == other.hi && self.lo == other.lo
    }
}

impl PartialOrd for DDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

impl fmt::Debug for DDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dd({:e}, {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for DDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal_string(32))
    }
}

impl Real for DDouble {
    const NAME: &'static str = "extended";

    fn zero() -> Self {
        DDouble::ZERO
    }
    fn one() -> Self {
        DDouble::ONE
    }
    fn from_f64(x: f64) -> Self {
        DDouble::from(x)
    }
    fn from_usize(n: usize) -> Self {
        DDouble::from_i64(n as i64)
    }
    fn from_i64(n: i64) -> Self {
        DDouble::from_i64(n)
    }
    fn to_f64(self) -> f64 {
        self.hi
    }
    fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    fn sqrt(self) -> Self {
        if self.hi == 0.0 && self.lo == 0.0 {
            return DDouble::ZERO;
        }
        assert!(self.hi > 0.0, "sqrt of negative double-double");
        // Karp/Markstein: one correction step on the f64 estimate.
        let x = 1.0 / self.hi.sqrt();
        let ax = self.hi * x;
        let axd = DDouble::from(ax);
        let err = self - axd * axd;
        axd.add_f64(err.hi * (x * 0.5))
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return DDouble::ONE;
        }
        let mut base = self;
        let mut m = n.unsigned_abs();
        let mut acc = DDouble::ONE;
        while m > 0 {
            if m & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            m >>= 1;
        }
        if n < 0 {
            DDouble::ONE / acc
        } else {
            acc
        }
    }

    fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    fn epsilon() -> Self {
        // 2^-104
        DDouble::from(4.930380657631324e-32)
    }

    fn parse_str(s: &str) -> Result<Self, ParseRealError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseRealError::Empty);
        }
        let bytes = s.as_bytes();
        let mut i = 0;
        let mut sign = 1.0;
        if bytes[i] == b'+' || bytes[i] == b'-' {
            if bytes[i] == b'-' {
                sign = -1.0;
            }
            i += 1;
        }
        let mut mantissa = DDouble::ZERO;
        let mut seen_digit = false;
        let mut frac_digits: i32 = 0;
        let mut in_frac = false;
        while i < bytes.len() {
            let c = bytes[i];
            match c {
                b'0'..=b'9' => {
                    mantissa = mantissa.mul_f64(10.0).add_f64((c - b'0') as f64);
                    if in_frac {
                        frac_digits += 1;
                    }
                    seen_digit = true;
                }
                b'.' => {
                    if in_frac {
                        return Err(ParseRealError::Invalid(s.to_string()));
                    }
                    in_frac = true;
                }
                b'e' | b'E' => break,
                _ => return Err(ParseRealError::Invalid(s.to_string())),
            }
            i += 1;
        }
        if !seen_digit {
            return Err(ParseRealError::Invalid(s.to_string()));
        }
        let mut exp: i32 = 0;
        if i < bytes.len() {
            // exponent part after 'e'/'E'
            let e: i32 = s[i + 1..]
                .parse()
                .map_err(|_| ParseRealError::Invalid(s.to_string()))?;
            exp = e;
        }
        let total_exp = exp - frac_digits;
        let mut value = mantissa;
        if total_exp != 0 {
            value = value * DDouble::pow10(total_exp);
        }
        if sign < 0.0 {
            value = -value;
        }
        Ok(value)
    }

    fn to_parts(self) -> (f64, f64) {
        (self.hi, self.lo)
    }

    fn from_parts(hi: f64, lo: f64) -> Self {
        DDouble::new(hi, lo)
    }

    fn to_decimal_string(self, sig: usize) -> String {
        assert!(sig >= 1);
        if !self.is_finite() {
            return format!("{}", self.hi);
        }
        if self.hi == 0.0 {
            return format!("0.{}", "0".repeat(sig.saturating_sub(1)));
        }
        let (digits, exp) = self.digits(sig);
        let neg = self.hi < 0.0;
        let mut out = String::new();
        if neg {
            out.push('-');
        }
        if exp >= -3 && exp < sig as i32 + 6 {
            // positional
            if exp < 0 {
                out.push_str("0.");
                for _ in 0..(-exp - 1) {
                    out.push('0');
                }
                for d in &digits {
                    out.push((b'0' + d) as char);
                }
            } else {
                let int_len = exp as usize + 1;
                for (k, d) in digits.iter().enumerate() {
                    if k == int_len {
                        out.push('.');
                    }
                    out.push((b'0' + d) as char);
                }
                if int_len >= digits.len() {
                    for _ in digits.len()..int_len {
                        out.push('0');
                    }
                }
            }
        } else {
            out.push((b'0' + digits[0]) as char);
            out.push('.');
            for d in &digits[1..] {
                out.push((b'0' + d) as char);
            }
            out.push('e');
            out.push_str(&exp.to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(s: &str) -> DDouble {
        DDouble::parse_str(s).unwrap()
    }

    #[test]
    fn arithmetic_hits_double_double_precision() {
        let third = DDouble::from_ratio(1, 3);
        let one = third * DDouble::from_i64(3);
        assert!((one - DDouble::ONE).abs().to_f64() < 1e-31);

        let two = DDouble::from_i64(2);
        let r = two.sqrt();
        assert!((r * r - two).abs().to_f64() < 1e-31);

        let x = dd("0.38693556354866909100");
        let y = dd("0.81587550281258499773");
        let p = x * y - y * x;
        assert_eq!(p.to_f64(), 0.0);
    }

    #[test]
    fn parse_and_format_roundtrip_20_digits() {
        for s in [
            "0.21132486540518711775",
            "0.23004836288935413032",
            "15.09400351265623143607",
            "0.34885887187990802985",
            "4.00000000036580449734",
        ] {
            let v = dd(s);
            assert_eq!(v.to_decimal_string(s.replace(['.', '-'], "").trim_start_matches('0').len()), s,
                "roundtrip failed for {s}");
        }
    }

    #[test]
    fn format_handles_integers_and_rounding() {
        assert_eq!(DDouble::from_i64(6).to_decimal_string(5), "6.0000");
        assert_eq!(dd("0.99999999").to_decimal_string(4), "1.000");
        assert_eq!(dd("-2.5e-7").to_decimal_string(3), "-2.50e-7");
        assert_eq!(dd("1.25e-9").to_decimal_string(3), "1.25e-9");
        assert_eq!(DDouble::ZERO.to_decimal_string(4), "0.000");
    }

    #[test]
    fn ratio_and_sqrt_constants_match_published_digits() {
        // sqrt(2)/6 and 4/45 appear in the closed forms; pin them here.
        let w = DDouble::from_i64(2).sqrt() / DDouble::from_i64(6);
        assert_eq!(w.to_decimal_string(20), "0.23570226039551584147");
        let rho = DDouble::from_ratio(4, 45);
        assert!((rho.to_f64() - 0.08888888888888889).abs() < 1e-16);
    }

    #[test]
    fn f64_parse_uses_extended_path() {
        let x = f64::parse_str("0.21132486540518711775").unwrap();
        assert!((x - 0.211324865405187_f64).abs() < 1e-15);
    }

    #[test]
    fn comparisons_are_lexicographic() {
        let a = DDouble::new(1.0, 1e-20);
        let b = DDouble::new(1.0, 2e-20);
        assert!(a < b);
        assert!(a == a);
        assert!(-a > -b);
    }
}
