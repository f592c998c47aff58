//! IEEE-like custom floating-point encodings up to 16 bits.
//!
//! Layout is sign, `E` exponent bits, `M` mantissa bits. The all-ones
//! exponent holds infinities (zero mantissa) and NaNs. Arithmetic decodes
//! both operands exactly, computes the exact result and re-encodes it with
//! round-to-nearest-even, so every operation is correctly rounded.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dyadic::{pow2, Dyadic};
use crate::format::FormatError;

const MAX_WIDTH: u32 = 16;
const MAX_ABS_BIAS: i64 = 1 << 20;

/// `float<E,M,bias>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MfFormat {
    exp_bits: u32,
    man_bits: u32,
    bias: i32,
}

impl MfFormat {
    /// Format with the IEEE default bias `2^(E-1) - 1`.
    pub fn new(exp_bits: u32, man_bits: u32) -> Result<Self, FormatError> {
        let bias = if (2..16).contains(&exp_bits) { (1i64 << (exp_bits - 1)) - 1 } else { 0 };
        Self::with_bias(exp_bits, man_bits, bias)
    }

    pub fn with_bias(exp_bits: u32, man_bits: u32, bias: i64) -> Result<Self, FormatError> {
        if exp_bits < 2 || man_bits < 1 || 1 + exp_bits + man_bits > MAX_WIDTH {
            return Err(FormatError::FloatShape { exp_bits, man_bits });
        }
        if bias.abs() > MAX_ABS_BIAS {
            return Err(FormatError::FloatBias { bias });
        }
        Ok(Self { exp_bits, man_bits, bias: bias as i32 })
    }

    pub fn exp_bits(&self) -> u32 {
        self.exp_bits
    }

    pub fn man_bits(&self) -> u32 {
        self.man_bits
    }

    pub fn bias(&self) -> i32 {
        self.bias
    }

    pub fn width(&self) -> u32 {
        1 + self.exp_bits + self.man_bits
    }

    fn default_bias(&self) -> i32 {
        (1 << (self.exp_bits - 1)) - 1
    }

    fn exp_all_ones(&self) -> u16 {
        ((1u32 << self.exp_bits) - 1) as u16
    }

    /// Unbiased exponent of the smallest normal.
    fn min_exp(&self) -> i64 {
        1 - self.bias as i64
    }

    /// Unbiased exponent of the largest finite value.
    fn max_exp(&self) -> i64 {
        self.exp_all_ones() as i64 - 1 - self.bias as i64
    }

    pub fn zero(&self, negative: bool) -> MfValue {
        MfValue { format: *self, sign: negative, exp_field: 0, man_field: 0 }
    }

    pub fn infinity(&self, negative: bool) -> MfValue {
        MfValue { format: *self, sign: negative, exp_field: self.exp_all_ones(), man_field: 0 }
    }

    /// Canonical quiet NaN.
    pub fn nan(&self) -> MfValue {
        MfValue { format: *self, sign: false, exp_field: self.exp_all_ones(), man_field: 1 << (self.man_bits - 1) }
    }

    pub fn max_finite(&self) -> MfValue {
        MfValue {
            format: *self,
            sign: false,
            exp_field: self.exp_all_ones() - 1,
            man_field: ((1u32 << self.man_bits) - 1) as u16,
        }
    }

    /// Every bit pattern of the format, in increasing bit order.
    pub fn all_values(&self) -> impl Iterator<Item = MfValue> + '_ {
        (0..(1u32 << self.width())).map(move |b| MfValue::from_bits(b as u16, *self))
    }

    /// Nearest representable value, ties to even; overflow goes to infinity.
    pub fn encode(&self, x: f64) -> MfValue {
        if x.is_nan() {
            return self.nan();
        }
        if x.is_infinite() {
            return self.infinity(x < 0.0);
        }
        if x == 0.0 {
            return self.zero(x.is_sign_negative());
        }
        self.encode_exact(&Dyadic::from_f64(x).expect("finite"))
    }

    /// Exact zero encodes as `+0`; nonzero values that round to zero keep
    /// their sign.
    pub fn encode_exact(&self, x: &Dyadic) -> MfValue {
        let Some(p) = x.leading_exponent() else {
            return self.zero(false);
        };
        let neg = x.is_negative();
        let m = self.man_bits as i64;
        let emin = self.min_exp();
        if p > self.max_exp() {
            return self.infinity(neg);
        }
        // below half the smallest subnormal
        if p < emin - m - 1 {
            return self.zero(neg);
        }
        let mut q = if p < emin { emin - m } else { p - m };
        let mag = x.mantissa().magnitude().clone();
        let shift = x.exponent() - q;
        let mut n: BigInt = if shift >= 0 {
            BigInt::from(mag) << shift as u64
        } else {
            round_half_even(BigInt::from(mag), (-shift) as u64)
        };
        let hidden = pow2(self.man_bits as u64);
        if n == &hidden << 1u32 {
            n >>= 1u32;
            q += 1;
        }
        let n = n.to_u32().expect("mantissa fits");
        if n == 0 {
            return self.zero(neg);
        }
        let hidden = 1u32 << self.man_bits;
        if q == emin - m && n < hidden {
            return MfValue { format: *self, sign: neg, exp_field: 0, man_field: n as u16 };
        }
        let exp_field = q + m + self.bias as i64;
        if exp_field >= self.exp_all_ones() as i64 {
            return self.infinity(neg);
        }
        MfValue { format: *self, sign: neg, exp_field: exp_field as u16, man_field: (n - hidden) as u16 }
    }
}

/// `n * 2^-k` rounded to nearest, ties to even, for `n >= 0`, `k >= 1`.
fn round_half_even(n: BigInt, k: u64) -> BigInt {
    let floor = &n >> k;
    let rem = n - (&floor << k);
    let half = pow2(k - 1);
    if rem > half || (rem == half && floor.is_odd()) {
        floor + BigInt::one()
    } else {
        floor
    }
}

impl fmt::Display for MfFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.bias == self.default_bias() {
            write!(f, "float<{},{}>", self.exp_bits, self.man_bits)
        } else {
            write!(f, "float<{},{},{}>", self.exp_bits, self.man_bits, self.bias)
        }
    }
}

impl FromStr for MfFormat {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FormatError::Syntax(s.to_string());
        let body = s.trim().strip_prefix("float<").and_then(|r| r.strip_suffix('>')).ok_or_else(bad)?;
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        match parts.as_slice() {
            [e, m] => MfFormat::new(e.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?),
            [e, m, b] => MfFormat::with_bias(
                e.parse().map_err(|_| bad())?,
                m.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
            ),
            _ => Err(bad()),
        }
    }
}

impl Serialize for MfFormat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MfFormat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Result of decoding a minifloat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decoded {
    Finite(Dyadic),
    Infinity { negative: bool },
    NaN,
}

impl Decoded {
    pub fn finite(self) -> Option<Dyadic> {
        match self {
            Decoded::Finite(d) => Some(d),
            _ => None,
        }
    }
}

/// An encoded minifloat: sign, exponent field and mantissa field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MfValue {
    format: MfFormat,
    sign: bool,
    exp_field: u16,
    man_field: u16,
}

impl MfValue {
    pub fn from_bits(bits: u16, format: MfFormat) -> Self {
        let m = format.man_bits;
        let e = format.exp_bits;
        Self {
            format,
            sign: (bits >> (e + m)) & 1 == 1,
            exp_field: (bits >> m) & ((1 << e) - 1),
            man_field: bits & ((1 << m) - 1),
        }
    }

    pub fn from_fields(format: MfFormat, sign: bool, exp_field: u16, man_field: u16) -> Option<Self> {
        if exp_field > format.exp_all_ones() || man_field >= (1 << format.man_bits) {
            return None;
        }
        Some(Self { format, sign, exp_field, man_field })
    }

    pub fn to_bits(&self) -> u16 {
        let m = self.format.man_bits;
        let e = self.format.exp_bits;
        ((self.sign as u16) << (e + m)) | (self.exp_field << m) | self.man_field
    }

    pub fn format(&self) -> MfFormat {
        self.format
    }

    pub fn sign(&self) -> bool {
        self.sign
    }

    pub fn exp_field(&self) -> u16 {
        self.exp_field
    }

    pub fn man_field(&self) -> u16 {
        self.man_field
    }

    pub fn is_nan(&self) -> bool {
        self.exp_field == self.format.exp_all_ones() && self.man_field != 0
    }

    pub fn is_infinite(&self) -> bool {
        self.exp_field == self.format.exp_all_ones() && self.man_field == 0
    }

    pub fn is_zero(&self) -> bool {
        self.exp_field == 0 && self.man_field == 0
    }

    pub fn decode(&self) -> Decoded {
        if self.is_nan() {
            return Decoded::NaN;
        }
        if self.is_infinite() {
            return Decoded::Infinity { negative: self.sign };
        }
        let m = self.format.man_bits as i64;
        let (sig, exp) = if self.exp_field == 0 {
            (self.man_field as i64, self.format.min_exp() - m)
        } else {
            ((1i64 << m) + self.man_field as i64, self.exp_field as i64 - self.format.bias as i64 - m)
        };
        let sig = if self.sign { -sig } else { sig };
        Decoded::Finite(Dyadic::new(sig, exp))
    }

    pub fn to_f64(&self) -> f64 {
        match self.decode() {
            Decoded::NaN => f64::NAN,
            Decoded::Infinity { negative: true } => f64::NEG_INFINITY,
            Decoded::Infinity { negative: false } => f64::INFINITY,
            Decoded::Finite(d) if d.is_zero() && self.sign => -0.0,
            Decoded::Finite(d) => d.to_f64(),
        }
    }

    /// Correctly rounded sum.
    ///
    /// # Panics
    /// If the operands have different formats.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.format, other.format, "mf add needs matching formats");
        let f = self.format;
        match (self.decode(), other.decode()) {
            (Decoded::NaN, _) | (_, Decoded::NaN) => f.nan(),
            (Decoded::Infinity { negative: a }, Decoded::Infinity { negative: b }) => {
                if a == b {
                    f.infinity(a)
                } else {
                    f.nan()
                }
            }
            (Decoded::Infinity { negative }, _) | (_, Decoded::Infinity { negative }) => f.infinity(negative),
            (Decoded::Finite(a), Decoded::Finite(b)) => {
                let s = &a + &b;
                if s.is_zero() {
                    f.zero(self.sign && other.sign && self.is_zero() && other.is_zero())
                } else {
                    f.encode_exact(&s)
                }
            }
        }
    }

    /// Correctly rounded product.
    ///
    /// # Panics
    /// If the operands have different formats.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.format, other.format, "mf mul needs matching formats");
        let f = self.format;
        let sign = self.sign ^ other.sign;
        match (self.decode(), other.decode()) {
            (Decoded::NaN, _) | (_, Decoded::NaN) => f.nan(),
            (Decoded::Infinity { .. }, Decoded::Finite(d)) | (Decoded::Finite(d), Decoded::Infinity { .. }) => {
                if d.is_zero() {
                    f.nan()
                } else {
                    f.infinity(sign)
                }
            }
            (Decoded::Infinity { .. }, Decoded::Infinity { .. }) => f.infinity(sign),
            (Decoded::Finite(a), Decoded::Finite(b)) => {
                let p = &a * &b;
                if p.is_zero() {
                    f.zero(sign)
                } else {
                    f.encode_exact(&p)
                }
            }
        }
    }

    /// `max(x, 0)`; negative values (including `-0` and `-inf`) become `+0`.
    pub fn relu(&self) -> Self {
        if self.is_nan() || !self.sign {
            *self
        } else {
            self.format.zero(false)
        }
    }
}

impl fmt::Display for MfValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} bits {:#06x})", self.to_f64(), self.format, self.to_bits())
    }
}
