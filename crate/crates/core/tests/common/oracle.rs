//! Rational-arithmetic reference semantics, written from the format
//! definitions without touching the library's integer code paths.

use nnhls::{Dyadic, FxFormat, MfFormat, MfValue, Overflow, Rounding};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn pow2(k: i64) -> BigRational {
    let two = BigRational::from_integer(BigInt::from(2));
    if k >= 0 {
        num_traits::pow(two, k as usize)
    } else {
        num_traits::pow(two, (-k) as usize).recip()
    }
}

pub fn from_dyadic(d: &Dyadic) -> BigRational {
    BigRational::from_integer(d.mantissa().clone()) * pow2(d.exponent())
}

/// The rational as a dyadic; panics if the denominator is not a power of two.
pub fn to_dyadic(r: &BigRational) -> Dyadic {
    let mut den = r.denom().clone();
    let mut k = 0i64;
    while den.is_even() {
        den /= 2;
        k += 1;
    }
    assert!(den.is_one(), "{r} is not dyadic");
    Dyadic::new(r.numer().clone(), -k)
}

pub fn from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Real value of `raw` in `f`.
pub fn fx_value(raw: i128, f: FxFormat) -> BigRational {
    BigRational::from_integer(BigInt::from(raw)) * pow2(-(f.frac_bits() as i64))
}

/// Raw value of `x` rounded and fitted into `f`.
pub fn fx_quantize(x: &BigRational, f: FxFormat) -> i128 {
    let scaled = x * pow2(f.frac_bits() as i64);
    let half = rat(1, 2);
    let rounded: BigInt = match f.rounding() {
        Rounding::Truncate => scaled.floor().to_integer(),
        Rounding::Nearest => {
            if scaled.is_negative() {
                -((-&scaled) + &half).floor().to_integer()
            } else {
                (&scaled + &half).floor().to_integer()
            }
        }
    };
    let w = f.width();
    let lo = -(BigInt::one() << (w - 1));
    let hi = (BigInt::one() << (w - 1)) - 1;
    let fitted = match f.overflow() {
        Overflow::Saturate => rounded.clamp(lo, hi),
        Overflow::Wrap => {
            let m = BigInt::one() << w;
            let r = rounded.mod_floor(&m);
            if r > hi {
                r - m
            } else {
                r
            }
        }
    };
    i128::try_from(fitted).expect("fits")
}

/// Value of a minifloat bit pattern from its fields; `None` for NaN and
/// infinities.
pub fn mf_value(v: &MfValue) -> Option<BigRational> {
    let f = v.format();
    let all_ones = (1u16 << f.exp_bits()) - 1;
    if v.exp_field() == all_ones {
        return None;
    }
    let m = f.man_bits() as i64;
    let bias = f.bias() as i64;
    let man = BigRational::from_integer(BigInt::from(v.man_field()));
    let mag = if v.exp_field() == 0 {
        man * pow2(1 - bias - m)
    } else {
        (BigRational::one() + man * pow2(-m)) * pow2(v.exp_field() as i64 - bias)
    };
    Some(if v.sign() { -mag } else { mag })
}

/// Finite non-negative values of `f` in increasing order, with bit patterns.
pub fn mf_positive_values(f: MfFormat) -> Vec<(BigRational, MfValue)> {
    let n_bits = f.width();
    let mut out: Vec<(BigRational, MfValue)> = (0..(1u32 << (n_bits - 1)))
        .map(|b| MfValue::from_bits(b as u16, f))
        .filter_map(|v| mf_value(&v).map(|r| (r, v)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Round-to-nearest-even of a nonzero rational into `f`, overflowing to
/// infinity; `positives` comes from [`mf_positive_values`].
pub fn mf_round(x: &BigRational, f: MfFormat, positives: &[(BigRational, MfValue)]) -> MfValue {
    let neg = x.is_negative();
    let a = x.abs();
    let max = positives.last().expect("non-empty").0.clone();
    // the value one ulp past the largest finite one; even, and rounds to infinity
    let ulp = &max - &positives[positives.len() - 2].0;
    let beyond = &max + &ulp;
    let sign = |v: MfValue| MfValue::from_fields(f, neg, v.exp_field(), v.man_field()).expect("valid");
    if a >= beyond {
        return f.infinity(neg);
    }
    let idx = positives.partition_point(|(r, _)| *r <= a);
    // positives[idx - 1] <= a < positives[idx] (or beyond)
    let (lo, lov) = positives[idx - 1].clone();
    if lo == a {
        return sign(lov);
    }
    let (hi, hiv) =
        if idx < positives.len() { (positives[idx].0.clone(), Some(positives[idx].1)) } else { (beyond, None) };
    let dl = &a - &lo;
    let dh = &hi - &a;
    let pick_hi = match dl.cmp(&dh) {
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => hiv.is_none_or(|v| v.man_field() & 1 == 0),
    };
    match (pick_hi, hiv) {
        (false, _) => sign(lov),
        (true, Some(v)) => sign(v),
        (true, None) => f.infinity(neg),
    }
}

/// Sign of an infinity, `None` for everything else.
fn mf_special(v: &MfValue) -> Option<bool> {
    v.is_infinite().then(|| v.sign())
}

/// Correctly rounded sum under the library's signed-zero convention.
pub fn mf_add(a: &MfValue, b: &MfValue, positives: &[(BigRational, MfValue)]) -> MfValue {
    let f = a.format();
    if a.is_nan() || b.is_nan() {
        return f.nan();
    }
    match (mf_special(a), mf_special(b)) {
        (Some(x), Some(y)) if x != y => return f.nan(),
        (Some(x), _) | (None, Some(x)) => return f.infinity(x),
        _ => {}
    }
    let s = mf_value(a).unwrap() + mf_value(b).unwrap();
    if s.is_zero() {
        return f.zero(a.sign() && b.sign() && a.is_zero() && b.is_zero());
    }
    mf_round(&s, f, positives)
}

/// Correctly rounded product.
pub fn mf_mul(a: &MfValue, b: &MfValue, positives: &[(BigRational, MfValue)]) -> MfValue {
    let f = a.format();
    if a.is_nan() || b.is_nan() {
        return f.nan();
    }
    let sign = a.sign() != b.sign();
    if a.is_infinite() || b.is_infinite() {
        if a.is_zero() || b.is_zero() {
            return f.nan();
        }
        return f.infinity(sign);
    }
    let p = mf_value(a).unwrap() * mf_value(b).unwrap();
    if p.is_zero() {
        return f.zero(sign);
    }
    mf_round(&p, f, positives)
}
