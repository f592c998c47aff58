//! Bit-accurate signed fixed-point arithmetic.
//!
//! A format `<W,I>` has `W` total bits of which `I` are integer bits (sign
//! included), leaving `F = W - I` fractional bits. A value is its raw two's
//! complement integer; the real value is `raw * 2^-F`.
//!
//! Precision is only ever lost at [`FxValue::quantize`] and [`FxValue::cast`].
//! [`FxValue::add_exact`] and [`FxValue::mul_exact`] widen the result format
//! so that the exact result always fits.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::dyadic::{decompose_f64, pow2, Dyadic};
use crate::format::FormatError;

/// Widest format accepted from users and configuration files.
pub const MAX_USER_WIDTH: u32 = 64;
/// Widest format the raw `i128` storage can hold (exact products of two
/// user formats reach this).
pub const MAX_STORAGE_WIDTH: u32 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rounding {
    /// Truncate toward negative infinity.
    Truncate,
    /// Round to nearest, ties away from zero.
    Nearest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Overflow {
    Saturate,
    /// Keep the low `W` bits, two's complement.
    Wrap,
}

impl Rounding {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Rounding::Truncate => "trn",
            Rounding::Nearest => "rnd",
        }
    }
}

impl Overflow {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Overflow::Saturate => "sat",
            Overflow::Wrap => "wrap",
        }
    }
}

/// Signed fixed-point format `fixed<W,I,rounding,overflow>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FxFormat {
    width: u32,
    int_bits: u32,
    rounding: Rounding,
    overflow: Overflow,
}

impl FxFormat {
    /// Validates the user envelope `1 <= W <= 64`, `0 <= I <= W`.
    pub fn new(width: u32, int_bits: i64, rounding: Rounding, overflow: Overflow) -> Result<Self, FormatError> {
        if width == 0 || width > MAX_USER_WIDTH {
            return Err(FormatError::FixedWidth { width });
        }
        Self::storage(width, int_bits, rounding, overflow)
    }

    /// Like [`FxFormat::new`] but admits the full 128-bit storage envelope.
    pub fn storage(width: u32, int_bits: i64, rounding: Rounding, overflow: Overflow) -> Result<Self, FormatError> {
        if width == 0 || width > MAX_STORAGE_WIDTH {
            return Err(FormatError::FixedWidth { width });
        }
        if int_bits < 0 || int_bits > width as i64 {
            return Err(FormatError::FixedIntBits { width, int_bits });
        }
        Ok(Self { width, int_bits: int_bits as u32, rounding, overflow })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.width - self.int_bits
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    pub fn overflow(&self) -> Overflow {
        self.overflow
    }

    pub fn with_modes(self, rounding: Rounding, overflow: Overflow) -> Self {
        Self { rounding, overflow, ..self }
    }

    pub fn min_raw(&self) -> i128 {
        if self.width == 128 {
            i128::MIN
        } else {
            -(1i128 << (self.width - 1))
        }
    }

    pub fn max_raw(&self) -> i128 {
        if self.width == 128 {
            i128::MAX
        } else {
            (1i128 << (self.width - 1)) - 1
        }
    }

    /// Weight of one LSB, `2^-F`.
    pub fn step(&self) -> f64 {
        2f64.powi(-(self.frac_bits() as i32))
    }

    /// Worst-case error of a single in-range rounding into this format.
    pub fn rounding_bound(&self) -> f64 {
        match self.rounding {
            Rounding::Nearest => self.step() / 2.0,
            Rounding::Truncate => self.step(),
        }
    }

    /// Handles out-of-range raw values per the overflow mode.
    fn fit(&self, v: i128) -> i128 {
        match self.overflow {
            Overflow::Saturate => v.clamp(self.min_raw(), self.max_raw()),
            Overflow::Wrap => wrap_bits(v, self.width),
        }
    }

    /// Rounds `m * 2^shift` to an integer, then fits it to this format.
    fn requantize(&self, m: i128, shift: i64) -> i128 {
        if m == 0 {
            return 0;
        }
        if shift >= 0 {
            let bitlen = 128 - m.unsigned_abs().leading_zeros() as i64;
            if bitlen + shift <= 126 {
                return self.fit(m << shift);
            }
            // |m * 2^shift| >= 2^126: outside every format but the widest
            return match self.overflow {
                Overflow::Saturate => {
                    if m > 0 {
                        self.max_raw()
                    } else {
                        self.min_raw()
                    }
                }
                Overflow::Wrap => {
                    let low = if shift >= 128 { 0 } else { (m as u128) << shift };
                    wrap_bits(low as i128, self.width)
                }
            };
        }
        let k = -shift;
        let rounded = if k >= 128 {
            // |m * 2^-k| <= 1/2, with equality only for i128::MIN at k = 128
            match self.rounding {
                Rounding::Truncate => {
                    if m < 0 {
                        -1
                    } else {
                        0
                    }
                }
                Rounding::Nearest => {
                    if m == i128::MIN && k == 128 {
                        -1
                    } else {
                        0
                    }
                }
            }
        } else {
            round_shift_right(m, k as u32, self.rounding)
        };
        self.fit(rounded)
    }

    /// Same as `requantize` for an unbounded mantissa.
    fn requantize_big(&self, m: &BigInt, shift: i64) -> i128 {
        if let Some(small) = m.to_i128() {
            return self.requantize(small, shift);
        }
        let v = if shift >= 0 {
            m << shift as u64
        } else {
            let k = (-shift) as u64;
            let floor = m >> k;
            let rem = m - (&floor << k);
            match self.rounding {
                Rounding::Truncate => floor,
                Rounding::Nearest => {
                    let half = pow2(k - 1);
                    let up = rem > half || (rem == half && m > &BigInt::zero());
                    if up {
                        floor + BigInt::one()
                    } else {
                        floor
                    }
                }
            }
        };
        match self.overflow {
            Overflow::Saturate => {
                let lo = BigInt::from(self.min_raw());
                let hi = BigInt::from(self.max_raw());
                if v < lo {
                    self.min_raw()
                } else if v > hi {
                    self.max_raw()
                } else {
                    v.to_i128().expect("in range")
                }
            }
            Overflow::Wrap => {
                let mask = pow2(128) - BigInt::one();
                let low = (v & mask).to_u128().expect("masked to 128 bits");
                wrap_bits(low as i128, self.width)
            }
        }
    }
}

/// Sign-extends the low `width` bits of `v`.
fn wrap_bits(v: i128, width: u32) -> i128 {
    if width >= 128 {
        v
    } else {
        let s = 128 - width;
        (v << s) >> s
    }
}

/// `m * 2^-k` rounded to an integer, `1 <= k <= 127`.
fn round_shift_right(m: i128, k: u32, rounding: Rounding) -> i128 {
    let floor = m >> k;
    match rounding {
        Rounding::Truncate => floor,
        Rounding::Nearest => {
            let rem = m.wrapping_sub(floor.wrapping_shl(k)) as u128;
            let half = 1u128 << (k - 1);
            if rem > half || (rem == half && m > 0) {
                floor + 1
            } else {
                floor
            }
        }
    }
}

impl fmt::Display for FxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fixed<{},{},{},{}>", self.width, self.int_bits, self.rounding.mnemonic(), self.overflow.mnemonic())
    }
}

impl FromStr for FxFormat {
    type Err = FormatError;

    /// Parses `fixed<W,I>` or `fixed<W,I,rounding,overflow>`; omitted modes
    /// default to `rnd,sat`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FormatError::Syntax(s.to_string());
        let body = s.trim().strip_prefix("fixed<").and_then(|r| r.strip_suffix('>')).ok_or_else(bad)?;
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        let (w, i, rnd, ovf) = match parts.as_slice() {
            [w, i] => (*w, *i, "rnd", "sat"),
            [w, i, r, o] => (*w, *i, *r, *o),
            _ => return Err(bad()),
        };
        let width: u32 = w.parse().map_err(|_| bad())?;
        let int_bits: i64 = i.parse().map_err(|_| bad())?;
        let rounding = match rnd {
            "trn" => Rounding::Truncate,
            "rnd" => Rounding::Nearest,
            _ => return Err(bad()),
        };
        let overflow = match ovf {
            "sat" => Overflow::Saturate,
            "wrap" => Overflow::Wrap,
            _ => return Err(bad()),
        };
        FxFormat::new(width, int_bits, rounding, overflow)
    }
}

/// A fixed-point value: raw integer plus its format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FxValue {
    format: FxFormat,
    raw: i128,
}

/// Exact results that would exceed the 128-bit storage envelope.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("exact result needs {width} bits, storage holds at most {MAX_STORAGE_WIDTH}")]
pub struct TooWide {
    pub width: u32,
}

impl FxValue {
    /// Builds a value from a raw integer; the raw value is fitted to the
    /// format's overflow mode if it does not fit.
    pub fn from_raw(raw: i128, format: FxFormat) -> Self {
        Self { format, raw: format.fit(raw) }
    }

    pub fn zero(format: FxFormat) -> Self {
        Self { format, raw: 0 }
    }

    /// Rounds a finite real into `format`.
    ///
    /// # Panics
    /// If `x` is NaN or infinite.
    pub fn quantize(x: f64, format: FxFormat) -> Self {
        let (m, e) = decompose_f64(x).expect("quantize requires a finite input");
        let raw = format.requantize(m as i128, e as i64 + format.frac_bits() as i64);
        Self { format, raw }
    }

    /// Rounds an exact dyadic value into `format`.
    pub fn quantize_exact(x: &Dyadic, format: FxFormat) -> Self {
        let raw = format.requantize_big(x.mantissa(), x.exponent() + format.frac_bits() as i64);
        Self { format, raw }
    }

    pub fn raw(&self) -> i128 {
        self.raw
    }

    pub fn format(&self) -> FxFormat {
        self.format
    }

    /// Exact real value `raw * 2^-F`.
    pub fn to_real(&self) -> Dyadic {
        Dyadic::new(self.raw, -(self.format.frac_bits() as i64))
    }

    /// Nearest `f64`; exact whenever the raw value has at most 53
    /// significant bits.
    pub fn to_f64(&self) -> f64 {
        self.to_real().to_f64()
    }

    /// Re-rounds into another format straight from the raw bits.
    pub fn cast(&self, format: FxFormat) -> Self {
        let shift = format.frac_bits() as i64 - self.format.frac_bits() as i64;
        Self { format, raw: format.requantize(self.raw, shift) }
    }

    /// Exact sum in `<max(Ia,Ib)+1+max(Fa,Fb), max(Ia,Ib)+1>`.
    pub fn try_add_exact(&self, other: &Self) -> Result<Self, TooWide> {
        let (fa, fb) = (self.format.frac_bits(), other.format.frac_bits());
        let f = fa.max(fb);
        let i = self.format.int_bits.max(other.format.int_bits) + 1;
        let format = self.exact_format(i + f, i)?;
        let raw = (self.raw << (f - fa)) + (other.raw << (f - fb));
        Ok(Self { format, raw })
    }

    /// # Panics
    /// If the widened format exceeds 128 bits.
    pub fn add_exact(&self, other: &Self) -> Self {
        self.try_add_exact(other).expect("add_exact")
    }

    /// Exact difference, same format rule as [`FxValue::add_exact`].
    pub fn sub_exact(&self, other: &Self) -> Self {
        let neg = Self { format: other.format, raw: -other.raw };
        // -min_raw needs one more bit than the format has; the widened
        // result format still holds it.
        self.add_exact(&neg)
    }

    /// Exact product in `<Wa+Wb, Ia+Ib>`.
    pub fn try_mul_exact(&self, other: &Self) -> Result<Self, TooWide> {
        let format =
            self.exact_format(self.format.width + other.format.width, self.format.int_bits + other.format.int_bits)?;
        let raw = self.raw.checked_mul(other.raw).ok_or(TooWide { width: format.width })?;
        Ok(Self { format, raw })
    }

    /// # Panics
    /// If the widened format exceeds 128 bits.
    pub fn mul_exact(&self, other: &Self) -> Self {
        self.try_mul_exact(other).expect("mul_exact")
    }

    fn exact_format(&self, width: u32, int_bits: u32) -> Result<FxFormat, TooWide> {
        FxFormat::storage(width, int_bits as i64, self.format.rounding, self.format.overflow)
            .map_err(|_| TooWide { width })
    }

    /// `max(x, 0)` in the same format.
    pub fn relu(&self) -> Self {
        Self { format: self.format, raw: self.raw.max(0) }
    }
}

impl fmt::Display for FxValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} raw {})", self.to_f64(), self.format, self.raw)
    }
}
