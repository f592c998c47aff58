//! Numeric format notation shared by configs, reports and the IR.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dyadic::Dyadic;
use crate::fixnum::{FxFormat, FxValue};
use crate::minifloat::{MfFormat, MfValue};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("malformed format string `{0}`")]
    Syntax(String),
    #[error("fixed-point width {width} outside the supported 1..=64")]
    FixedWidth { width: u32 },
    #[error("fixed-point integer bits {int_bits} outside 0..={width}")]
    FixedIntBits { width: u32, int_bits: i64 },
    #[error("minifloat needs E >= 2, M >= 1 and 1+E+M <= 16 (got E={exp_bits}, M={man_bits})")]
    FloatShape { exp_bits: u32, man_bits: u32 },
    #[error("minifloat bias {bias} outside the supported range")]
    FloatBias { bias: i64 },
}

/// Either number system; every IR edge carries one of these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NumFormat {
    Fixed(FxFormat),
    Float(MfFormat),
}

impl NumFormat {
    pub fn width(&self) -> u32 {
        match self {
            NumFormat::Fixed(f) => f.width(),
            NumFormat::Float(f) => f.width(),
        }
    }

    pub fn as_fixed(&self) -> Option<FxFormat> {
        match self {
            NumFormat::Fixed(f) => Some(*f),
            NumFormat::Float(_) => None,
        }
    }

    /// Rounds a finite real into this format.
    pub fn encode(&self, x: f64) -> Scalar {
        match self {
            NumFormat::Fixed(f) => Scalar::Fixed(FxValue::quantize(x, *f)),
            NumFormat::Float(f) => Scalar::Float(f.encode(x)),
        }
    }

    pub fn encode_exact(&self, x: &Dyadic) -> Scalar {
        match self {
            NumFormat::Fixed(f) => Scalar::Fixed(FxValue::quantize_exact(x, *f)),
            NumFormat::Float(f) => Scalar::Float(f.encode_exact(x)),
        }
    }
}

impl fmt::Display for NumFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumFormat::Fixed(x) => x.fmt(f),
            NumFormat::Float(x) => x.fmt(f),
        }
    }
}

impl FromStr for NumFormat {
    type Err = FormatError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.starts_with("fixed<") {
            t.parse().map(NumFormat::Fixed)
        } else if t.starts_with("float<") {
            t.parse().map(NumFormat::Float)
        } else {
            Err(FormatError::Syntax(s.to_string()))
        }
    }
}

impl Serialize for NumFormat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NumFormat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for FxFormat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FxFormat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A value on an IR edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scalar {
    Fixed(FxValue),
    Float(MfValue),
}

impl Scalar {
    /// Exact value; `None` for minifloat NaN and infinities.
    pub fn to_exact(&self) -> Option<Dyadic> {
        match self {
            Scalar::Fixed(v) => Some(v.to_real()),
            Scalar::Float(v) => v.decode().finite(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Fixed(v) => v.to_f64(),
            Scalar::Float(v) => v.to_f64(),
        }
    }

    pub fn format(&self) -> NumFormat {
        match self {
            Scalar::Fixed(v) => NumFormat::Fixed(v.format()),
            Scalar::Float(v) => NumFormat::Float(v.format()),
        }
    }

    /// Raw integer for fixed-point values, the bit pattern for minifloats.
    pub fn bits(&self) -> i128 {
        match self {
            Scalar::Fixed(v) => v.raw(),
            Scalar::Float(v) => v.to_bits() as i128,
        }
    }
}
