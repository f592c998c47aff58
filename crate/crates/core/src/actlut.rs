//! Activation lookup tables, generated ahead of time and evaluated
//! bit-accurately.
//!
//! A table covers `[lo, hi)` with `N` equal bins. Both `N` and the span are
//! powers of two, so the bin index of a fixed-point input is a subtraction
//! and a shift on its raw bits. Entries are the function sampled at each
//! bin (left edge by default) and quantized to the entry format.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::dyadic::Dyadic;
use crate::fixnum::{FxFormat, FxValue, Overflow, Rounding};

/// Table ranges must sit on this dyadic grid and within `±2^RANGE_BITS`.
const RANGE_BITS: i32 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LutFunction {
    Sigmoid,
    Tanh,
    Exp,
    Reciprocal,
}

impl LutFunction {
    pub fn name(self) -> &'static str {
        match self {
            LutFunction::Sigmoid => "sigmoid",
            LutFunction::Tanh => "tanh",
            LutFunction::Exp => "exp",
            LutFunction::Reciprocal => "reciprocal",
        }
    }

    /// The real-valued function. Table generation and the reference path
    /// both call this, so they share one math routine.
    pub fn eval(self, x: f64) -> f64 {
        match self {
            LutFunction::Sigmoid => 1.0 / (1.0 + libm::exp(-x)),
            LutFunction::Tanh => libm::tanh(x),
            LutFunction::Exp => libm::exp(x),
            LutFunction::Reciprocal => 1.0 / x,
        }
    }

    /// Range used when the configuration does not override it.
    pub fn default_range(self) -> (f64, f64) {
        match self {
            LutFunction::Sigmoid => (-8.0, 8.0),
            LutFunction::Tanh => (-4.0, 4.0),
            LutFunction::Exp => (-16.0, 0.0),
            LutFunction::Reciprocal => (1.0, 65.0),
        }
    }
}

impl fmt::Display for LutFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LutFunction {
    type Err = LutError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(LutFunction::Sigmoid),
            "tanh" => Ok(LutFunction::Tanh),
            "exp" => Ok(LutFunction::Exp),
            "reciprocal" => Ok(LutFunction::Reciprocal),
            _ => Err(LutError::Dump(format!("unknown table function `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplePoint {
    #[default]
    LeftEdge,
    Midpoint,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LutError {
    #[error("table size {0} is not a power of two >= 2")]
    Size(usize),
    #[error("table range [{lo}, {hi}) is empty or not finite")]
    Range { lo: f64, hi: f64 },
    #[error("table span {hi} - {lo} is not a power of two")]
    Span { lo: f64, hi: f64 },
    #[error("table bound {0} is not a multiple of 2^-32 within ±2^32")]
    Grid(f64),
    #[error("reciprocal table needs a positive range, got lo = {0}")]
    ReciprocalDomain(f64),
    #[error("malformed table dump: {0}")]
    Dump(String),
}

/// Recipe for one table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LutSpec {
    pub function: LutFunction,
    pub n_entries: usize,
    pub input_lo: f64,
    pub input_hi: f64,
    pub entry_format: FxFormat,
    pub sample_point: SamplePoint,
}

impl LutSpec {
    /// Spec over the function's default range, sampled at left bin edges.
    pub fn with_default_range(function: LutFunction, n_entries: usize, entry_format: FxFormat) -> Self {
        let (input_lo, input_hi) = function.default_range();
        Self { function, n_entries, input_lo, input_hi, entry_format, sample_point: SamplePoint::LeftEdge }
    }

    pub fn validate(&self) -> Result<Geometry, LutError> {
        let n = self.n_entries;
        if n < 2 || !n.is_power_of_two() {
            return Err(LutError::Size(n));
        }
        let (lo, hi) = (self.input_lo, self.input_hi);
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(LutError::Range { lo, hi });
        }
        for b in [lo, hi] {
            let on_grid = (b * 2f64.powi(RANGE_BITS)).fract() == 0.0;
            if !on_grid || b.abs() > 2f64.powi(RANGE_BITS) {
                return Err(LutError::Grid(b));
            }
        }
        if self.function == LutFunction::Reciprocal && lo <= 0.0 {
            return Err(LutError::ReciprocalDomain(lo));
        }
        let span = &Dyadic::from_f64(hi).expect("finite") - &Dyadic::from_f64(lo).expect("finite");
        if span.mantissa() != &num_bigint::BigInt::from(1) {
            return Err(LutError::Span { lo, hi });
        }
        let lo_exact = Dyadic::from_f64(lo).expect("finite");
        Ok(Geometry {
            log2_n: n.trailing_zeros() as i64,
            log2_span: span.exponent(),
            lo_mant: lo_exact.mantissa().to_i128().expect("on the range grid"),
            lo_exp: lo_exact.exponent(),
        })
    }

    /// Input at which entry `k` is sampled.
    pub fn sample_input(&self, k: usize) -> f64 {
        let geo = self.validate().expect("valid spec");
        self.sample_input_with(&geo, k)
    }

    fn sample_input_with(&self, geo: &Geometry, k: usize) -> f64 {
        let lo = Dyadic::from_f64(self.input_lo).expect("finite");
        let bin_exp = geo.log2_span - geo.log2_n;
        let offset = match self.sample_point {
            SamplePoint::LeftEdge => Dyadic::new(k as i64, bin_exp),
            SamplePoint::Midpoint => Dyadic::new(2 * k as i64 + 1, bin_exp - 1),
        };
        (&lo + &offset).to_f64()
    }

    /// Header line of the dump format.
    pub fn dump_header(&self) -> String {
        format!("{},{},{},{},{}", self.function, self.n_entries, self.input_lo, self.input_hi, self.entry_format)
    }
}

/// Integer geometry of a validated spec.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub log2_n: i64,
    pub log2_span: i64,
    /// `lo = lo_mant * 2^lo_exp`
    pub lo_mant: i128,
    pub lo_exp: i64,
}

impl Geometry {
    /// Integer recipe for indexing an input with `frac_bits` fractional
    /// bits: `idx = clamp(((raw << input_shift) - offset) * 2^index_shift)`
    /// where a negative `index_shift` is an arithmetic right shift.
    /// `None` if the offset does not fit in 128 bits.
    pub fn index_recipe(&self, frac_bits: u32) -> Option<IndexRecipe> {
        let f = -(frac_bits as i64);
        let d = f.min(self.lo_exp);
        let lift = u32::try_from(self.lo_exp - d).ok().filter(|&k| k < 127)?;
        Some(IndexRecipe {
            input_shift: (f - d) as u32,
            offset: self.lo_mant.checked_mul(1i128 << lift)?,
            index_shift: d + self.log2_n - self.log2_span,
        })
    }
}

/// See [`Geometry::index_recipe`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexRecipe {
    pub input_shift: u32,
    pub offset: i128,
    pub index_shift: i64,
}

/// A materialized table: raw entries in the spec's entry format.
#[derive(Clone, Debug, PartialEq)]
pub struct LutTable {
    spec: LutSpec,
    geometry: Geometry,
    entries: Vec<i64>,
}

impl LutTable {
    /// Samples and quantizes the function.
    pub fn build(spec: LutSpec) -> Result<Self, LutError> {
        let geometry = spec.validate()?;
        let entries = (0..spec.n_entries)
            .map(|k| {
                let x = spec.sample_input_with(&geometry, k);
                let y = spec.function.eval(x);
                FxValue::quantize(y, spec.entry_format).raw() as i64
            })
            .collect();
        Ok(Self { spec, geometry, entries })
    }

    pub fn spec(&self) -> &LutSpec {
        &self.spec
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn entry(&self, k: usize) -> FxValue {
        FxValue::from_raw(self.entries[k] as i128, self.spec.entry_format)
    }

    fn clamp_index(&self, idx: i128) -> usize {
        idx.clamp(0, self.entries.len() as i128 - 1) as usize
    }

    /// Bin of an exact input, clamped to the table.
    pub fn index_of_exact(&self, x: &Dyadic) -> usize {
        let lo = Dyadic::from_f64(self.spec.input_lo).expect("finite");
        let scaled = (x - &lo).mul_pow2(self.geometry.log2_n - self.geometry.log2_span);
        let idx = scaled.floor();
        if idx.is_negative() {
            0
        } else {
            self.clamp_index(idx.to_i128().unwrap_or(i128::MAX))
        }
    }

    /// Bin of a fixed-point input, straight from its raw bits.
    pub fn index_of(&self, x: &FxValue) -> usize {
        self.index_of_fixed_raw(x).unwrap_or_else(|| self.index_of_exact(&x.to_real()))
    }

    fn index_of_fixed_raw(&self, x: &FxValue) -> Option<usize> {
        let r = self.geometry.index_recipe(x.format().frac_bits())?;
        if r.input_shift >= 127 {
            return None;
        }
        let scaled = x.raw().checked_mul(1i128 << r.input_shift)?;
        let diff = scaled.checked_sub(r.offset)?;
        let idx = if r.index_shift >= 0 {
            if diff <= 0 {
                diff.signum()
            } else if r.index_shift >= 127 {
                i128::MAX
            } else {
                diff.checked_mul(1i128 << r.index_shift).unwrap_or(i128::MAX)
            }
        } else {
            diff >> (-r.index_shift).min(127)
        };
        Some(self.clamp_index(idx))
    }

    pub fn lookup(&self, x: &FxValue) -> FxValue {
        self.entry(self.index_of(x))
    }

    pub fn lookup_exact(&self, x: &Dyadic) -> FxValue {
        self.entry(self.index_of_exact(x))
    }

    /// Dump format: header line, then one raw decimal entry per line.
    pub fn dump(&self) -> String {
        let mut out = self.spec.dump_header();
        out.push('\n');
        for e in &self.entries {
            writeln!(out, "{e}").expect("write to string");
        }
        out
    }
}

/// A parsed table dump.
#[derive(Clone, Debug, PartialEq)]
pub struct TableDump {
    pub function: LutFunction,
    pub n_entries: usize,
    pub input_lo: f64,
    pub input_hi: f64,
    pub entry_format: FxFormat,
    pub entries: Vec<i64>,
}

impl FromStr for TableDump {
    type Err = LutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |m: &str| LutError::Dump(m.to_string());
        let mut lines = s.lines();
        let header = lines.next().ok_or_else(|| bad("empty dump"))?;
        // the format itself contains commas, so split off the first four fields
        let mut parts = header.splitn(5, ',');
        let mut next = |what: &str| parts.next().ok_or_else(|| bad(what));
        let function: LutFunction = next("function")?.parse()?;
        let n_entries: usize = next("N")?.parse().map_err(|_| bad("N"))?;
        let input_lo: f64 = next("lo")?.parse().map_err(|_| bad("lo"))?;
        let input_hi: f64 = next("hi")?.parse().map_err(|_| bad("hi"))?;
        let entry_format: FxFormat = next("format")?.parse().map_err(|_| bad("format"))?;
        let entries = lines
            .map(|l| l.trim().parse::<i64>().map_err(|_| bad(&format!("entry `{l}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        if entries.len() != n_entries {
            return Err(bad(&format!("expected {n_entries} entries, found {}", entries.len())));
        }
        Ok(Self { function, n_entries, input_lo, input_hi, entry_format, entries })
    }
}

/// ReLU: exact, no table.
pub fn eval_relu(x: &FxValue) -> FxValue {
    x.relu()
}

/// Default entry format of the softmax exponential table.
pub fn default_softmax_exp_format() -> FxFormat {
    FxFormat::new(18, 2, Rounding::Nearest, Overflow::Saturate).expect("valid")
}

/// Default entry format of the softmax reciprocal table.
pub fn default_softmax_recip_format() -> FxFormat {
    FxFormat::new(18, 8, Rounding::Nearest, Overflow::Saturate).expect("valid")
}

/// Bits needed to sum `n` values exactly: `ceil(log2 n)`.
pub fn sum_growth_bits(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Two-table softmax over fixed-point inputs sharing one format.
///
/// Inputs are shifted by their maximum so the exponential table only sees
/// non-positive values; the sum of exponentials is inverted through the
/// reciprocal table and each exponential is scaled by it.
///
/// # Panics
/// If the tables are not an exp/reciprocal pair or the inputs mix formats.
pub fn eval_softmax(xs: &[FxValue], exp_t: &LutTable, inv_t: &LutTable, out_format: Option<FxFormat>) -> Vec<FxValue> {
    let Some(first) = xs.first() else {
        return Vec::new();
    };
    assert!(xs.iter().all(|x| x.format() == first.format()), "softmax inputs share a format");
    let max = xs.iter().max_by_key(|x| x.raw()).expect("non-empty");
    let exps: Vec<FxValue> = xs.iter().map(|x| exp_t.lookup(&x.sub_exact(max))).collect();
    softmax_normalize(&exps, exp_t, inv_t, out_format)
}

/// Softmax over exact inputs (minifloat edges); identical to
/// [`eval_softmax`] once the exponentials are looked up.
pub fn eval_softmax_exact(
    xs: &[Dyadic],
    exp_t: &LutTable,
    inv_t: &LutTable,
    out_format: Option<FxFormat>,
) -> Vec<FxValue> {
    let Some(max) = xs.iter().max() else {
        return Vec::new();
    };
    let exps: Vec<FxValue> = xs.iter().map(|x| exp_t.lookup_exact(&(x - max))).collect();
    softmax_normalize(&exps, exp_t, inv_t, out_format)
}

/// Format of the exact sum of `n` exponential-table entries.
pub fn softmax_sum_format(exp_t: &LutTable, n: usize) -> FxFormat {
    let e = exp_t.spec().entry_format;
    let g = sum_growth_bits(n);
    FxFormat::storage(e.width() + g, (e.int_bits() + g) as i64, e.rounding(), e.overflow())
        .expect("sum format within storage")
}

fn softmax_normalize(
    exps: &[FxValue],
    exp_t: &LutTable,
    inv_t: &LutTable,
    out_format: Option<FxFormat>,
) -> Vec<FxValue> {
    assert_eq!(exp_t.spec().function, LutFunction::Exp, "softmax needs an exp table");
    assert_eq!(inv_t.spec().function, LutFunction::Reciprocal, "softmax needs a reciprocal table");
    let sum_format = softmax_sum_format(exp_t, exps.len());
    let sum = exps.iter().fold(FxValue::zero(sum_format), |acc, e| acc.add_exact(e).cast(sum_format));
    let inv = inv_t.lookup(&sum);
    let out = out_format.unwrap_or(exp_t.spec().entry_format);
    exps.iter().map(|e| e.mul_exact(&inv).cast(out)).collect()
}
