//! Extended-precision binary floating point.
//!
//! A [`WideReal`] is `±mantissa · 2^exponent` with the mantissa normalized to
//! exactly `precision` bits. Every operation rounds its exact result to the
//! larger precision of its operands (round half away from zero), so results
//! are deterministic for a fixed precision setting.
//!
//! The binary exponent range is `±MAX_BINARY_EXPONENT`, the same default
//! range as MPFR. Values that leave this range are reported by
//! [`WideReal::in_range`] and by the fallible transcendental functions.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;
use std::sync::Mutex;

use num_bigint::{BigInt, BigUint, Sign};
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Mantissa width used by the exact solver and the criticality analysis.
pub const DEFAULT_PRECISION: u32 = 256;

/// Mantissa width of an IEEE double; used by the Monte Carlo harness.
pub const DOUBLE_PRECISION: u32 = 53;

/// Largest admissible binary exponent magnitude.
pub const MAX_BINARY_EXPONENT: i64 = (1 << 30) - 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WideError {
    #[error("result exceeds the binary exponent range (2^{0})")]
    Overflow(i64),
    #[error("result is below the binary exponent range (2^{0})")]
    Underflow(i64),
    #[error("logarithm of a non-positive value")]
    NonPositiveLog,
    #[error("cannot parse `{0}` as a decimal number")]
    Parse(String),
}

#[derive(Clone, Debug)]
pub struct WideReal {
    negative: bool,
    mantissa: BigUint,
    exponent: i64,
    precision: u32,
}

impl WideReal {
    pub fn zero(precision: u32) -> Self {
        assert!(precision >= 2, "precision must be at least 2 bits");
        WideReal {
            negative: false,
            mantissa: BigUint::zero(),
            exponent: 0,
            precision,
        }
    }

    pub fn one(precision: u32) -> Self {
        Self::from_parts(false, BigUint::one(), 0, precision)
    }

    /// Rounds `±m · 2^e` to `precision` bits.
    fn from_parts(negative: bool, mut m: BigUint, mut e: i64, precision: u32) -> Self {
        if m.is_zero() {
            return Self::zero(precision);
        }
        let p = precision as u64;
        let bits = m.bits();
        if bits > p {
            let drop = bits - p;
            let round_up = m.bit(drop - 1);
            m >>= drop;
            e += drop as i64;
            if round_up {
                m += 1u32;
                if m.bits() > p {
                    m >>= 1;
                    e += 1;
                }
            }
        } else if bits < p {
            let lift = p - bits;
            m <<= lift;
            e -= lift as i64;
        }
        WideReal {
            negative,
            mantissa: m,
            exponent: e,
            precision,
        }
    }

    /// Exact conversion from a finite double (rounded if `precision < 53`).
    ///
    /// Panics on NaN or infinity.
    pub fn from_f64(x: f64, precision: u32) -> Self {
        assert!(x.is_finite(), "WideReal::from_f64 on non-finite value {x}");
        if x == 0.0 {
            return Self::zero(precision);
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        Self::from_parts(negative, BigUint::from(m), e, precision)
    }

    pub fn from_i64(v: i64, precision: u32) -> Self {
        Self::from_parts(v < 0, BigUint::from(v.unsigned_abs()), 0, precision)
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Same value rounded (or exactly widened) to another precision.
    pub fn with_precision(&self, precision: u32) -> Self {
        Self::from_parts(
            self.negative,
            self.mantissa.clone(),
            self.exponent,
            precision,
        )
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.negative && !self.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        !self.negative && !self.is_zero()
    }

    pub fn abs(&self) -> Self {
        let mut r = self.clone();
        r.negative = false;
        r
    }

    /// `e` such that `2^(e-1) <= |x| < 2^e`; `None` for zero.
    pub fn binary_magnitude(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.exponent + self.mantissa.bits() as i64)
        }
    }

    /// Whether the value lies inside the admissible exponent range.
    pub fn in_range(&self) -> bool {
        match self.binary_magnitude() {
            None => true,
            Some(m) => m.abs() <= MAX_BINARY_EXPONENT,
        }
    }

    pub(crate) fn check_range(self) -> Result<Self, WideError> {
        match self.binary_magnitude() {
            Some(m) if m > MAX_BINARY_EXPONENT => Err(WideError::Overflow(m)),
            Some(m) if m < -MAX_BINARY_EXPONENT => Err(WideError::Underflow(m)),
            _ => Ok(self),
        }
    }

    /// Multiplies by `2^k` exactly.
    pub fn mul_pow2(&self, k: i64) -> Self {
        let mut r = self.clone();
        if !r.is_zero() {
            r.exponent += k;
        }
        r
    }

    /// Nearest double; saturates to `±f64::MAX` above the double range and
    /// flushes to `±0` below it.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let p = self.precision as i64;
        let (mut m, mut e) = if p > 53 {
            let drop = (p - 53) as u64;
            let round_up = self.mantissa.bit(drop - 1);
            let mut m = (&self.mantissa >> drop).to_u64().expect("53-bit mantissa");
            if round_up {
                m += 1;
            }
            (m, self.exponent + drop as i64)
        } else {
            let lift = (53 - p) as u32;
            let m = self.mantissa.to_u64().expect("short mantissa") << lift;
            (m, self.exponent - lift as i64)
        };
        if m == 1u64 << 53 {
            m >>= 1;
            e += 1;
        }
        let sign = if self.negative { -1.0 } else { 1.0 };
        if e + 53 > 1024 {
            return sign * f64::MAX;
        }
        if e + 53 < -1074 {
            return sign * 0.0;
        }
        sign * libm::scalbn(m as f64, e as i32)
    }

    fn add_impl(a: &WideReal, b: &WideReal, negate_b: bool) -> WideReal {
        let p = a.precision.max(b.precision);
        let b_negative = b.negative ^ negate_b;
        if b.is_zero() {
            return a.with_precision(p);
        }
        if a.is_zero() {
            let mut r = b.with_precision(p);
            r.negative = b_negative;
            return r;
        }
        let ta = a.exponent + a.mantissa.bits() as i64;
        let tb = b.exponent + b.mantissa.bits() as i64;
        let gap = p as i64 + 3;
        if ta - tb > gap {
            return a.with_precision(p);
        }
        if tb - ta > gap {
            let mut r = b.with_precision(p);
            r.negative = b_negative;
            return r;
        }
        let e = a.exponent.min(b.exponent);
        let ma = &a.mantissa << (a.exponent - e) as u64;
        let mb = &b.mantissa << (b.exponent - e) as u64;
        if a.negative == b_negative {
            Self::from_parts(a.negative, ma + mb, e, p)
        } else {
            match ma.cmp(&mb) {
                Ordering::Greater => Self::from_parts(a.negative, ma - mb, e, p),
                Ordering::Less => Self::from_parts(b_negative, mb - ma, e, p),
                Ordering::Equal => Self::zero(p),
            }
        }
    }

    fn mul_impl(a: &WideReal, b: &WideReal) -> WideReal {
        let p = a.precision.max(b.precision);
        if a.is_zero() || b.is_zero() {
            return Self::zero(p);
        }
        Self::from_parts(
            a.negative ^ b.negative,
            &a.mantissa * &b.mantissa,
            a.exponent + b.exponent,
            p,
        )
    }

    fn div_impl(a: &WideReal, b: &WideReal) -> WideReal {
        assert!(!b.is_zero(), "WideReal division by zero");
        let p = a.precision.max(b.precision);
        if a.is_zero() {
            return Self::zero(p);
        }
        let shift = (p as i64 + 2 + b.mantissa.bits() as i64 - a.mantissa.bits() as i64).max(0);
        let num = &a.mantissa << shift as u64;
        let (q, r) = num.div_rem(&b.mantissa);
        // one sticky bit below the quotient keeps the final rounding honest
        let q = (q << 1u32) + if r.is_zero() { 0u32 } else { 1u32 };
        Self::from_parts(
            a.negative ^ b.negative,
            q,
            a.exponent - b.exponent - shift - 1,
            p,
        )
    }

    pub fn recip(&self) -> Self {
        Self::div_impl(&Self::one(self.precision), self)
    }

    pub fn square(&self) -> Self {
        Self::mul_impl(self, self)
    }

    pub fn powi(&self, mut n: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one(self.precision);
        while n > 0 {
            if n & 1 == 1 {
                acc = &acc * &base;
            }
            n >>= 1;
            if n > 0 {
                base = base.square();
            }
        }
        acc
    }

    pub fn mul_f64(&self, x: f64) -> Self {
        self * &Self::from_f64(x, self.precision)
    }

    /// Square root via the integer square root of the widened mantissa.
    /// Panics on negative input.
    pub fn sqrt(&self) -> Self {
        assert!(!self.negative, "square root of a negative WideReal");
        if self.is_zero() {
            return self.clone();
        }
        let p = self.precision as i64;
        let bits = self.mantissa.bits() as i64;
        let mut shift = (2 * p + 4 - bits).max(0);
        if (self.exponent - shift) % 2 != 0 {
            shift += 1;
        }
        let root = (&self.mantissa << shift as u64).sqrt();
        Self::from_parts(false, root, (self.exponent - shift) / 2, self.precision)
    }

    /// `round(x · 2^frac_bits)` as a signed integer (floor for the dropped bits).
    fn to_fixed(&self, frac_bits: u64) -> BigInt {
        let shift = self.exponent + frac_bits as i64;
        let mag = if shift >= 0 {
            &self.mantissa << shift as u64
        } else {
            &self.mantissa >> (-shift) as u64
        };
        let sign = if self.negative {
            Sign::Minus
        } else {
            Sign::Plus
        };
        BigInt::from_biguint(sign, mag)
    }

    /// Natural exponential, rounded to the operand's precision.
    pub fn exp(&self) -> Result<Self, WideError> {
        let p = self.precision;
        if self.is_zero() {
            return Ok(Self::one(p));
        }
        let xf = self.to_f64();
        let limit = MAX_BINARY_EXPONENT as f64 * std::f64::consts::LN_2;
        if xf > limit {
            return Err(WideError::Overflow(
                (xf / std::f64::consts::LN_2).min(i64::MAX as f64) as i64,
            ));
        }
        if xf < -limit {
            return Err(WideError::Underflow(
                (xf / std::f64::consts::LN_2).max(i64::MIN as f64) as i64,
            ));
        }
        let k = (xf / std::f64::consts::LN_2).round() as i64;
        let halvings = ((p as f64).sqrt() as u64).max(4);
        let w = p as u64 + 40 + halvings;
        let k_bits = 64 - k.unsigned_abs().leading_zeros() as u64;
        let ln2_bits = w + k_bits + 4;
        let ln2 = BigInt::from(ln2_fixed(ln2_bits));
        let reduced = self.to_fixed(w) - ((BigInt::from(k) * ln2) >> (ln2_bits - w));
        let r = reduced >> halvings;

        let unit = BigInt::one() << w;
        let mut sum = unit.clone();
        let mut term = unit;
        let mut n = 1u64;
        loop {
            term = (&term * &r) >> w;
            term /= n;
            if term.is_zero() {
                break;
            }
            sum += &term;
            n += 1;
        }
        for _ in 0..halvings {
            sum = (&sum * &sum) >> w;
        }
        let (_, mag) = sum.into_parts();
        Self::from_parts(false, mag, k - w as i64, p).check_range()
    }

    /// Natural logarithm (Halley iteration on [`WideReal::exp`]).
    pub fn ln(&self) -> Result<Self, WideError> {
        if !self.is_positive() {
            return Err(WideError::NonPositiveLog);
        }
        let p = self.precision;
        let wp = p + 32;
        let x = self.with_precision(wp);
        let magnitude = self.binary_magnitude().expect("positive");
        let frac = self.mul_pow2(-magnitude).to_f64();
        let guess = frac.ln() + magnitude as f64 * std::f64::consts::LN_2;
        let mut y = Self::from_f64(guess, wp);
        let tiny = Self::one(wp).mul_pow2(-(wp as i64) - 8);
        for _ in 0..12 {
            let ey = y.exp()?;
            let delta = (&x - &ey).mul_pow2(1) / (&x + &ey);
            y = &y + &delta;
            let scale = if y.abs() > tiny {
                y.abs()
            } else {
                tiny.clone()
            };
            if delta.abs() <= scale.mul_pow2(-(wp as i64) + 6) {
                break;
            }
        }
        Ok(y.with_precision(p))
    }

    /// Decimal digits that let a value at `precision` bits round-trip exactly.
    pub fn round_trip_digits(precision: u32) -> usize {
        (precision as f64 * std::f64::consts::LOG10_2).ceil() as usize + 2
    }

    /// Scientific notation with `digits` significant digits, e.g. `5.03e-2`.
    pub fn to_sci_string(&self, digits: usize) -> String {
        assert!(digits >= 1);
        if self.is_zero() {
            return "0".to_string();
        }
        let magnitude = self.binary_magnitude().expect("nonzero");
        let mut dec_exp = ((magnitude - 1) as f64 * std::f64::consts::LOG10_2).floor() as i64;
        let lower = BigUint::from(10u32).pow(digits as u32 - 1);
        let upper = &lower * 10u32;
        let mut n = self.scaled_decimal(dec_exp - (digits as i64 - 1));
        for _ in 0..4 {
            if n >= upper {
                dec_exp += 1;
            } else if n < lower {
                dec_exp -= 1;
            } else {
                break;
            }
            n = self.scaled_decimal(dec_exp - (digits as i64 - 1));
        }
        if n >= upper {
            // 9.99..5 rounded up to 10.00..0
            n /= 10u32;
            dec_exp += 1;
        }
        let s = n.to_str_radix(10);
        let mut out = String::with_capacity(digits + 8);
        if self.negative {
            out.push('-');
        }
        out.push_str(&s[..1]);
        if s.len() > 1 {
            out.push('.');
            out.push_str(&s[1..]);
        }
        out.push('e');
        out.push_str(&dec_exp.to_string());
        out
    }

    /// `round(|x| / 10^q)` as an integer.
    fn scaled_decimal(&self, q: i64) -> BigUint {
        let ten = BigUint::from(10u32);
        let mut num = self.mantissa.clone();
        let mut den = BigUint::one();
        if q >= 0 {
            den *= ten.pow(q as u32);
        } else {
            num *= ten.pow((-q) as u32);
        }
        if self.exponent >= 0 {
            num <<= self.exponent as u64;
        } else {
            den <<= (-self.exponent) as u64;
        }
        ((num << 1u32) + &den) / (den << 1u32)
    }

    /// Parses `[+-]digits[.digits][e[+-]digits]`, rounding to `precision` bits.
    pub fn parse_decimal(s: &str, precision: u32) -> Result<Self, WideError> {
        let err = || WideError::Parse(s.to_string());
        let t = s.trim();
        let (negative, body) = match t.as_bytes().first() {
            Some(b'-') => (true, &t[1..]),
            Some(b'+') => (false, &t[1..]),
            _ => (false, t),
        };
        let (significand, exp10) = match body.find(['e', 'E']) {
            Some(pos) => (
                &body[..pos],
                body[pos + 1..].parse::<i64>().map_err(|_| err())?,
            ),
            None => (body, 0),
        };
        let (int_part, frac_part) = match significand.find('.') {
            Some(pos) => (&significand[..pos], &significand[pos + 1..]),
            None => (significand, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part
            .bytes()
            .chain(frac_part.bytes())
            .all(|c| c.is_ascii_digit())
        {
            return Err(err());
        }
        let digits = format!("{int_part}{frac_part}");
        let d = BigUint::parse_bytes(digits.as_bytes(), 10).ok_or_else(err)?;
        let q = exp10 - frac_part.len() as i64;
        if d.is_zero() {
            return Ok(Self::zero(precision));
        }
        if q.unsigned_abs() > 400_000_000 {
            return Err(err());
        }
        let ten = BigUint::from(10u32);
        if q >= 0 {
            return Ok(Self::from_parts(
                negative,
                d * ten.pow(q as u32),
                0,
                precision,
            ));
        }
        let den = ten.pow((-q) as u32);
        let shift = (precision as i64 + 3 + den.bits() as i64 - d.bits() as i64).max(0);
        let (quot, rem) = (d << shift as u64).div_rem(&den);
        let quot = (quot << 1u32) + if rem.is_zero() { 0u32 } else { 1u32 };
        Ok(Self::from_parts(negative, quot, -shift - 1, precision))
    }
}

/// `round(ln 2 · 2^bits)`, cached at the widest width seen so far.
fn ln2_fixed(bits: u64) -> BigUint {
    static CACHE: Mutex<Option<(u64, BigUint)>> = Mutex::new(None);
    let mut guard = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    if let Some((cached_bits, value)) = guard.as_ref() {
        if *cached_bits >= bits {
            return value >> (cached_bits - bits);
        }
    }
    // ln 2 = 2 atanh(1/3) = 2 Σ 3^-(2k+1) / (2k+1)
    let guard_bits = 32;
    let mut power = (BigUint::one() << (bits + guard_bits)) / 3u32;
    let mut sum = BigUint::zero();
    let mut k = 0u32;
    while !power.is_zero() {
        sum += &power / (2 * k + 1);
        power /= 9u32;
        k += 1;
    }
    let value = ((sum << 1u32) + (BigUint::one() << (guard_bits - 1))) >> guard_bits;
    *guard = Some((bits, value.clone()));
    value
}

impl PartialEq for WideReal {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for WideReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let d = Self::add_impl(self, other, true);
        Some(if d.is_zero() {
            Ordering::Equal
        } else if d.negative {
            Ordering::Less
        } else {
            Ordering::Greater
        })
    }
}

impl fmt::Display for WideReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = f
            .precision()
            .unwrap_or_else(|| Self::round_trip_digits(self.precision));
        f.write_str(&self.to_sci_string(digits.max(1)))
    }
}

impl FromStr for WideReal {
    type Err = WideError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_decimal(s, DEFAULT_PRECISION)
    }
}

impl Neg for WideReal {
    type Output = WideReal;
    fn neg(mut self) -> WideReal {
        if !self.is_zero() {
            self.negative = !self.negative;
        }
        self
    }
}

impl Neg for &WideReal {
    type Output = WideReal;
    fn neg(self) -> WideReal {
        -self.clone()
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<&WideReal> for &WideReal {
            type Output = WideReal;
            fn $method(self, rhs: &WideReal) -> WideReal {
                $body(self, rhs)
            }
        }
        impl $trait<WideReal> for WideReal {
            type Output = WideReal;
            fn $method(self, rhs: WideReal) -> WideReal {
                $body(&self, &rhs)
            }
        }
        impl $trait<&WideReal> for WideReal {
            type Output = WideReal;
            fn $method(self, rhs: &WideReal) -> WideReal {
                $body(&self, rhs)
            }
        }
        impl $trait<WideReal> for &WideReal {
            type Output = WideReal;
            fn $method(self, rhs: WideReal) -> WideReal {
                $body(self, &rhs)
            }
        }
    };
}

forward_binop!(Add, add, |a, b| WideReal::add_impl(a, b, false));
forward_binop!(Sub, sub, |a, b| WideReal::add_impl(a, b, true));
forward_binop!(Mul, mul, WideReal::mul_impl);
forward_binop!(Div, div, WideReal::div_impl);

impl std::iter::Sum for WideReal {
    /// Panics on an empty iterator: the precision of the sum is unknown.
    fn sum<I: Iterator<Item = WideReal>>(mut iter: I) -> WideReal {
        let first = iter.next().expect("sum of an empty WideReal iterator");
        iter.fold(first, |acc, x| &acc + &x)
    }
}

/// Complex number over [`WideReal`] parts.
#[derive(Clone, Debug, PartialEq)]
pub struct WideComplex {
    pub re: WideReal,
    pub im: WideReal,
}

impl WideComplex {
    pub fn new(re: WideReal, im: WideReal) -> Self {
        WideComplex { re, im }
    }

    pub fn from_real(re: WideReal) -> Self {
        let p = re.precision();
        WideComplex {
            re,
            im: WideReal::zero(p),
        }
    }

    pub fn zero(precision: u32) -> Self {
        Self::from_real(WideReal::zero(precision))
    }

    pub fn one(precision: u32) -> Self {
        Self::from_real(WideReal::one(precision))
    }

    pub fn from_c64(z: Complex64, precision: u32) -> Self {
        WideComplex {
            re: WideReal::from_f64(z.re, precision),
            im: WideReal::from_f64(z.im, precision),
        }
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn precision(&self) -> u32 {
        self.re.precision().max(self.im.precision())
    }

    pub fn conj(&self) -> Self {
        WideComplex {
            re: self.re.clone(),
            im: -&self.im,
        }
    }

    pub fn norm_sqr(&self) -> WideReal {
        &self.re.square() + &self.im.square()
    }

    pub fn abs(&self) -> WideReal {
        self.norm_sqr().sqrt()
    }

    /// Argument in `(-pi, pi]`, computed in double after rescaling both
    /// parts so that neither saturates.
    pub fn arg(&self) -> f64 {
        let mag = [&self.re, &self.im]
            .iter()
            .filter_map(|v| v.binary_magnitude())
            .max();
        match mag {
            None => 0.0,
            Some(m) => self
                .im
                .mul_pow2(-m)
                .to_f64()
                .atan2(self.re.mul_pow2(-m).to_f64()),
        }
    }

    pub fn scale(&self, k: &WideReal) -> Self {
        WideComplex {
            re: &self.re * k,
            im: &self.im * k,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

impl Add<&WideComplex> for &WideComplex {
    type Output = WideComplex;
    fn add(self, rhs: &WideComplex) -> WideComplex {
        WideComplex {
            re: &self.re + &rhs.re,
            im: &self.im + &rhs.im,
        }
    }
}

impl Sub<&WideComplex> for &WideComplex {
    type Output = WideComplex;
    fn sub(self, rhs: &WideComplex) -> WideComplex {
        WideComplex {
            re: &self.re - &rhs.re,
            im: &self.im - &rhs.im,
        }
    }
}

impl Mul<&WideComplex> for &WideComplex {
    type Output = WideComplex;
    fn mul(self, rhs: &WideComplex) -> WideComplex {
        WideComplex {
            re: &(&self.re * &rhs.re) - &(&self.im * &rhs.im),
            im: &(&self.re * &rhs.im) + &(&self.im * &rhs.re),
        }
    }
}

impl Div<&WideComplex> for &WideComplex {
    type Output = WideComplex;
    fn div(self, rhs: &WideComplex) -> WideComplex {
        let den = rhs.norm_sqr();
        let num = self * &rhs.conj();
        WideComplex {
            re: &num.re / &den,
            im: &num.im / &den,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(x: f64) -> WideReal {
        WideReal::from_f64(x, DEFAULT_PRECISION)
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn sqrt_and_modulus() {
        let two = w(2.0);
        let r = two.sqrt();
        assert!(((&r.square() - &two) / &two).abs().to_f64() < 1e-75);
        assert_eq!(w(0.25).sqrt(), w(0.5));
        let big = WideReal::one(256).mul_pow2(1001);
        let rb = big.sqrt();
        assert!(((&rb.square() - &big) / &big).abs().to_f64() < 1e-75);
        let z = WideComplex::new(w(3.0), w(-4.0));
        assert_eq!(z.abs(), w(5.0));
        assert!((z.arg() - (-4.0f64).atan2(3.0)).abs() < 1e-15);
        let huge = WideComplex::new(
            WideReal::one(256).mul_pow2(5000),
            WideReal::one(256).mul_pow2(5000),
        );
        assert!((huge.arg() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn f64_round_trip_is_exact() {
        for x in [1.0, -0.1, 5e-324, 1.7976931348623157e308, 3.25, -2.5e-300] {
            assert_eq!(WideReal::from_f64(x, 256).to_f64(), x);
            assert_eq!(WideReal::from_f64(x, 53).to_f64(), x);
        }
    }

    #[test]
    fn to_f64_saturates() {
        let huge = w(1e300).square();
        assert_eq!(huge.to_f64(), f64::MAX);
        assert_eq!((-huge).to_f64(), -f64::MAX);
        let tiny = w(1e-300).square();
        assert_eq!(tiny.to_f64(), 0.0);
    }

    #[test]
    fn exp_and_ln_known_values() {
        let e = WideReal::one(256).exp().unwrap();
        let expected =
            "2.718281828459045235360287471352662497757247093699959574966967627724076630353547594571";
        let reference = WideReal::parse_decimal(expected, 256).unwrap();
        let diff = (&e - &reference).abs() / &reference;
        assert!(diff.to_f64() < 1e-75, "{}", diff);

        let ln2 = w(2.0).ln().unwrap();
        let reference = WideReal::parse_decimal(
            "0.6931471805599453094172321214581765680755001343602552541206800094933936219696947156",
            256,
        )
        .unwrap();
        assert!(((&ln2 - &reference).abs() / &reference).to_f64() < 1e-75);
        assert!(WideReal::one(256).ln().unwrap().is_zero());
    }

    #[test]
    fn exp_ln_inverse_at_extreme_arguments() {
        for x in [-700.5, -1e-40, 1e-30, 0.375, 45.0, 1.0e4] {
            let y = w(x).exp().unwrap().ln().unwrap();
            let err = (&y - &w(x)).abs().to_f64();
            assert!(err <= x.abs().max(1.0) * 1e-70, "x = {x}: error {err}");
        }
    }

    #[test]
    fn exp_respects_exponent_range() {
        assert!(matches!(w(1e9).exp(), Err(WideError::Overflow(_))));
        assert!(matches!(w(-1e9).exp(), Err(WideError::Underflow(_))));
        assert!(w(7e8).exp().is_ok());
        assert!(matches!(w(0.0).ln(), Err(WideError::NonPositiveLog)));
        assert!(matches!(w(-1.0).ln(), Err(WideError::NonPositiveLog)));
    }

    #[test]
    fn decimal_round_trip_at_full_precision() {
        let x = w(1.0) / w(3.0);
        let s = x.to_string();
        let back = WideReal::parse_decimal(&s, 256).unwrap();
        assert_eq!(back, x);
        assert_eq!(w(0.0503).to_sci_string(3), "5.03e-2");
        assert_eq!(w(-1234.5).to_sci_string(2), "-1.2e3");
        assert_eq!(w(9.9996).to_sci_string(4), "1.000e1");
        assert_eq!(format!("{:.5}", w(1.0)), "1.0000e0");
    }

    #[test]
    fn parse_rejects_garbage() {
        for s in ["", "abc", "1.2.3", "--1", "1e", "e5", "."] {
            assert!(WideReal::parse_decimal(s, 64).is_err(), "{s}");
        }
        assert_eq!(
            WideReal::parse_decimal("-0.25e1", 64).unwrap().to_f64(),
            -2.5
        );
    }

    #[test]
    fn cancellation_is_exact() {
        let a = w(1.0) + w(1e-60);
        let d = &a - &w(1.0);
        assert!(rel(d.to_f64(), 1e-60) < 1e-15);
        assert!((&a - &a).is_zero());
    }

    #[test]
    fn ordering() {
        assert!(w(1.0) < w(2.0));
        assert!(w(-3.0) < w(-2.0));
        assert!(w(0.0) == WideReal::zero(64));
        assert!(w(1e-200) > w(0.0));
    }

    #[test]
    fn complex_division_inverts_multiplication() {
        let a = WideComplex::from_c64(Complex64::new(1.5, -2.0), 256);
        let b = WideComplex::from_c64(Complex64::new(-0.25, 3.0), 256);
        let back = &(&a * &b) / &b;
        let err = (&back - &a).norm_sqr().to_f64();
        assert!(err < 1e-150);
    }

    proptest! {
        #[test]
        fn double_arithmetic_matches_f64(a in -1e100f64..1e100, b in -1e100f64..1e100) {
            prop_assume!(b != 0.0 && a != 0.0);
            let (wa, wb) = (WideReal::from_f64(a, 53), WideReal::from_f64(b, 53));
            for (got, want) in [
                ((&wa + &wb).to_f64(), a + b),
                ((&wa - &wb).to_f64(), a - b),
                ((&wa * &wb).to_f64(), a * b),
                ((&wa / &wb).to_f64(), a / b),
            ] {
                if want != 0.0 {
                    prop_assert!(((got - want) / want).abs() <= 1e-15, "{got} vs {want}");
                }
            }
        }

        #[test]
        fn exp_matches_f64(x in -700.0f64..700.0) {
            let got = WideReal::from_f64(x, 256).exp().unwrap().to_f64();
            prop_assert!(((got - x.exp()) / x.exp()).abs() < 4e-16);
        }

        #[test]
        fn decimal_round_trip(x in -1e30f64..1e30, p in 53u32..400) {
            let v = WideReal::from_f64(x, p) / WideReal::from_f64(7.0, p);
            let back = WideReal::parse_decimal(&v.to_string(), p).unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
