//! Exact dyadic rationals `mant * 2^exp` with an unbounded mantissa.
//!
//! Every fixed-point and minifloat value decodes to one of these, so they
//! serve as the common exact currency between the two number systems.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};

/// An exact value `mant * 2^exp`, kept normalized (odd mantissa, or zero
/// with exponent 0) so that structural equality is value equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mant: BigInt,
    exp: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Self { mant: BigInt::zero(), exp: 0 }
    }

    pub fn new(mant: impl Into<BigInt>, exp: i64) -> Self {
        let mut d = Self { mant: mant.into(), exp };
        d.normalize();
        d
    }

    pub fn from_int(v: i128) -> Self {
        Self::new(v, 0)
    }

    /// Exact conversion; `None` for NaN and infinities.
    pub fn from_f64(x: f64) -> Option<Self> {
        let (m, e) = decompose_f64(x)?;
        Some(Self::new(m, e as i64))
    }

    fn normalize(&mut self) {
        match self.mant.trailing_zeros() {
            None => self.exp = 0,
            Some(0) => {}
            Some(tz) => {
                self.mant >>= tz;
                self.exp += tz as i64;
            }
        }
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mant
    }

    pub fn exponent(&self) -> i64 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mant.sign() == Sign::Minus
    }

    pub fn abs(&self) -> Self {
        Self { mant: self.mant.abs(), exp: self.exp }
    }

    /// Multiplies by `2^k` exactly.
    pub fn mul_pow2(&self, k: i64) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        Self { mant: self.mant.clone(), exp: self.exp + k }
    }

    /// Largest integer not greater than the value.
    pub fn floor(&self) -> BigInt {
        if self.exp >= 0 {
            &self.mant << self.exp as u64
        } else {
            // BigInt right shift rounds toward negative infinity.
            &self.mant >> (-self.exp) as u64
        }
    }

    /// Exponent `p` with `2^p <= |x| < 2^(p+1)`; `None` for zero.
    pub fn leading_exponent(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.exp + self.mant.bits() as i64 - 1)
        }
    }

    /// Nearest `f64` (ties to even outside the subnormal range).
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let neg = self.is_negative();
        let mag = self.mant.magnitude();
        let bits = mag.bits() as i64;
        let (top, e) = if bits > 64 {
            let shift = (bits - 64) as u64;
            let mut top = (mag >> shift).to_u64().unwrap_or(u64::MAX);
            // sticky bit: anything shifted out makes the tie inexact
            if mag.trailing_zeros().unwrap_or(0) < shift {
                top |= 1;
            }
            (top, self.exp + shift as i64)
        } else {
            (mag.to_u64().unwrap_or(0), self.exp)
        };
        let v = ldexp(top as f64, e);
        if neg {
            -v
        } else {
            v
        }
    }
}

/// `x = m * 2^e` with an integer `m`; `None` for non-finite input.
pub(crate) fn decompose_f64(x: f64) -> Option<(i64, i32)> {
    if !x.is_finite() {
        return None;
    }
    let bits = x.to_bits();
    let neg = bits >> 63 != 0;
    let exp_field = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    let (m, e) = if exp_field == 0 { (frac, -1074) } else { (frac | (1i64 << 52), exp_field - 1075) };
    Some((if neg { -m } else { m }, e))
}

fn ldexp(mut v: f64, mut e: i64) -> f64 {
    let big = 2f64.powi(1000);
    let small = 2f64.powi(-1000);
    while e > 1000 {
        v *= big;
        e -= 1000;
        if v.is_infinite() {
            return v;
        }
    }
    while e < -1000 {
        v *= small;
        e += 1000;
        if v == 0.0 {
            return v;
        }
    }
    v * 2f64.powi(e as i32)
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.mant.sign(), other.mant.sign());
        if a != b {
            return sign_rank(a).cmp(&sign_rank(b));
        }
        sign_rank((self - other).mant.sign()).cmp(&0)
    }
}

fn sign_rank(s: Sign) -> i8 {
    match s {
        Sign::Minus => -1,
        Sign::NoSign => 0,
        Sign::Plus => 1,
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> Add<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &'a Dyadic) -> Dyadic {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let e = self.exp.min(rhs.exp);
        let a = &self.mant << (self.exp - e) as u64;
        let b = &rhs.mant << (rhs.exp - e) as u64;
        Dyadic::new(a + b, e)
    }
}

impl<'a> Sub<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &'a Dyadic) -> Dyadic {
        self + &(-rhs)
    }
}

impl<'a> Mul<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: &'a Dyadic) -> Dyadic {
        Dyadic::new(&self.mant * &rhs.mant, self.exp + rhs.exp)
    }
}

impl Neg for &Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic { mant: -&self.mant, exp: self.exp }
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        &self + &rhs
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: Dyadic) -> Dyadic {
        &self - &rhs
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: Dyadic) -> Dyadic {
        &self * &rhs
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        -&self
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp >= 0 {
            write!(f, "{}", &self.mant << self.exp as u64)
        } else {
            write!(f, "{}*2^{}", self.mant, self.exp)
        }
    }
}

impl From<i64> for Dyadic {
    fn from(v: i64) -> Self {
        Self::new(v, 0)
    }
}

pub(crate) fn pow2(k: u64) -> BigInt {
    BigInt::one() << k
}
