//! Bit-accurate simulation of a typed IR and accuracy measurement against
//! an f64 reference.

use std::io::Read;

use rayon::prelude::*;
use serde::Serialize;

use crate::actlut::{eval_softmax, eval_softmax_exact, LutFunction, LutTable};
use crate::dyadic::Dyadic;
use crate::fixnum::{FxFormat, FxValue};
use crate::format::{NumFormat, Scalar};
use crate::minifloat::{Decoded, MfValue};
use crate::model::{ActivationKind, DenseParams, Layer, NetworkModel, NodeOp, TypedIr};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("dataset: {0}")]
    Csv(String),
    #[error("dataset header: {0}")]
    Header(String),
    #[error("dataset row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("dataset has no samples")]
    Empty,
    #[error("sample {sample}: {found} inputs, model expects {expected}")]
    Shape { sample: usize, expected: usize, found: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Reads CSV with header `x0,...,x{n-1}` and an optional final `label`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, SimError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| SimError::Csv(e.to_string()))?.clone();
        let mut names: Vec<&str> = header.iter().collect();
        let labelled = names.last() == Some(&"label");
        if labelled {
            names.pop();
        }
        if names.is_empty() {
            return Err(SimError::Header("no input columns".into()));
        }
        if let Some((i, n)) = names.iter().enumerate().find(|(i, n)| **n != format!("x{i}")) {
            return Err(SimError::Header(format!("column {i} is `{n}`, expected `x{i}`")));
        }
        let n_in = names.len();
        let arity = n_in + labelled as usize;

        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| SimError::Row { row, message: e.to_string() })?;
            if rec.len() != arity {
                return Err(SimError::Row { row, message: format!("{} fields, header has {arity}", rec.len()) });
            }
            let input = rec
                .iter()
                .take(n_in)
                .enumerate()
                .map(|(col, f)| match f.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(SimError::Row { row, message: format!("x{col} = `{f}` is not a finite number") }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let label = if labelled {
                let f = &rec[n_in];
                Some(
                    f.parse::<usize>()
                        .map_err(|_| SimError::Row { row, message: format!("label `{f}` is not a class index") })?,
                )
            } else {
                None
            };
            samples.push(Sample { input, label });
        }
        if samples.is_empty() {
            return Err(SimError::Empty);
        }
        Ok(Self { samples })
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        Self::from_csv(text.as_bytes())
    }
}

/// Every edge of one quantized run.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedRun {
    /// `edges[0]` is the quantized input, `edges[k + 1]` the output of node `k`.
    pub edges: Vec<Vec<Scalar>>,
}

impl QuantizedRun {
    pub fn output(&self) -> Vec<f64> {
        self.last().iter().map(Scalar::to_f64).collect()
    }

    /// Raw integers (fixed point) or bit patterns (minifloat) of the output.
    pub fn raw(&self) -> Vec<i128> {
        self.last().iter().map(Scalar::bits).collect()
    }

    fn last(&self) -> &[Scalar] {
        self.edges.last().expect("input edge always present")
    }
}

/// Re-encodes a value into another format. Non-finite minifloats entering
/// fixed point saturate (infinities) or become zero (NaN).
pub fn convert(x: &Scalar, to: NumFormat) -> Scalar {
    match (x.to_exact(), to) {
        (Some(d), _) => to.encode_exact(&d),
        (None, NumFormat::Float(f)) => {
            let Scalar::Float(v) = x else { unreachable!("fixed values are finite") };
            Scalar::Float(if v.is_nan() { f.nan() } else { f.infinity(v.sign()) })
        }
        (None, NumFormat::Fixed(f)) => {
            let Scalar::Float(v) = x else { unreachable!("fixed values are finite") };
            let raw = if v.is_nan() {
                0
            } else if v.sign() {
                f.min_raw()
            } else {
                f.max_raw()
            };
            Scalar::Fixed(FxValue::from_raw(raw, f))
        }
    }
}

fn table_lookup(t: &LutTable, x: &Scalar) -> FxValue {
    match x {
        Scalar::Fixed(v) => t.lookup(v),
        Scalar::Float(v) => match v.decode() {
            Decoded::Finite(d) => t.lookup_exact(&d),
            Decoded::Infinity { negative: false } => t.entry(t.entries().len() - 1),
            Decoded::Infinity { negative: true } | Decoded::NaN => t.entry(0),
        },
    }
}

/// Minifloat softmax inputs: infinities clamp to the largest finite
/// magnitude, NaN to the most negative.
fn softmax_operand(v: &MfValue) -> Dyadic {
    let max = v.format().max_finite().decode().finite().expect("finite");
    match v.decode() {
        Decoded::Finite(d) => d,
        Decoded::Infinity { negative: false } => max,
        Decoded::Infinity { negative: true } | Decoded::NaN => -max,
    }
}

fn dense_fixed(
    xs: &[Scalar],
    n_in: usize,
    weight_format: FxFormat,
    accum_format: FxFormat,
    weights: &[i64],
    bias: &[i64],
    out: FxFormat,
) -> Vec<Scalar> {
    let xs: Vec<FxValue> = xs
        .iter()
        .map(|x| match x {
            Scalar::Fixed(v) => *v,
            Scalar::Float(_) => unreachable!("fixed layers see fixed edges"),
        })
        .collect();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            let mut acc = FxValue::from_raw(b as i128, weight_format).cast(accum_format);
            for (x, &w) in xs.iter().zip(&weights[o * n_in..(o + 1) * n_in]) {
                if w != 0 {
                    let p = x.mul_exact(&FxValue::from_raw(w as i128, weight_format));
                    acc = acc.add_exact(&p).cast(accum_format);
                }
            }
            Scalar::Fixed(acc.cast(out))
        })
        .collect()
}

fn dense_float(xs: &[Scalar], n_in: usize, weights: &[MfValue], bias: &[MfValue]) -> Vec<Scalar> {
    let xs: Vec<MfValue> = xs
        .iter()
        .map(|x| match x {
            Scalar::Float(v) => *v,
            Scalar::Fixed(_) => unreachable!("minifloat layers see converted edges"),
        })
        .collect();
    bias.iter()
        .enumerate()
        .map(|(o, b)| {
            let acc = xs.iter().zip(&weights[o * n_in..(o + 1) * n_in]).fold(*b, |acc, (x, w)| acc.add(&x.mul(w)));
            Scalar::Float(acc)
        })
        .collect()
}

/// Runs one input through the IR with the exact semantics of each format.
///
/// # Panics
/// If `x` has the wrong length or holds non-finite values.
pub fn run_quantized(ir: &TypedIr, x: &[f64]) -> QuantizedRun {
    assert_eq!(x.len(), ir.input_size, "input length");
    let mut edges = Vec::with_capacity(ir.nodes.len() + 1);
    edges.push(x.iter().map(|&v| ir.input_format.encode(v)).collect::<Vec<_>>());
    for node in &ir.nodes {
        let xs = edges.last().expect("non-empty");
        let next = match &node.op {
            NodeOp::Convert => xs.iter().map(|v| convert(v, node.out_format)).collect(),
            NodeOp::Relu => xs
                .iter()
                .map(|v| match v {
                    Scalar::Fixed(f) => Scalar::Fixed(f.relu()),
                    Scalar::Float(f) => Scalar::Float(f.relu()),
                })
                .collect(),
            NodeOp::Table(t) => xs.iter().map(|v| Scalar::Fixed(table_lookup(t, v))).collect(),
            NodeOp::Softmax { exp, recip } => {
                let out = node.out_format.as_fixed();
                let ys = match xs.first() {
                    Some(Scalar::Fixed(_)) => {
                        let fx: Vec<FxValue> = xs
                            .iter()
                            .map(|v| match v {
                                Scalar::Fixed(f) => *f,
                                Scalar::Float(_) => unreachable!("one format per edge"),
                            })
                            .collect();
                        eval_softmax(&fx, exp, recip, out)
                    }
                    _ => {
                        let ds: Vec<Dyadic> = xs
                            .iter()
                            .map(|v| match v {
                                Scalar::Float(f) => softmax_operand(f),
                                Scalar::Fixed(_) => unreachable!("one format per edge"),
                            })
                            .collect();
                        eval_softmax_exact(&ds, exp, recip, out)
                    }
                };
                ys.into_iter().map(Scalar::Fixed).collect()
            }
            NodeOp::Dense(d) => match (&d.params, node.out_format) {
                (DenseParams::Fixed { weight_format, accum_format, weights, bias }, NumFormat::Fixed(out)) => {
                    dense_fixed(xs, d.n_in, *weight_format, *accum_format, weights, bias, out)
                }
                (DenseParams::Float { weights, bias, .. }, _) => dense_float(xs, d.n_in, weights, bias),
                _ => unreachable!("fixed dense layers output fixed point"),
            },
        };
        edges.push(next);
    }
    QuantizedRun { edges }
}

/// Every layer output of one f64 reference run.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceRun {
    /// `edges[0]` is the input, `edges[i + 1]` the output of layer `i`.
    pub edges: Vec<Vec<f64>>,
}

impl ReferenceRun {
    pub fn output(&self) -> &[f64] {
        self.edges.last().expect("input edge always present")
    }
}

fn softmax_f64(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Unquantized baseline: f64 arithmetic, original weights, exact activations.
pub fn run_reference(m: &NetworkModel, x: &[f64]) -> ReferenceRun {
    assert_eq!(x.len(), m.input_size, "input length");
    let mut edges = vec![x.to_vec()];
    for layer in &m.layers {
        let xs = edges.last().expect("non-empty");
        let next = match layer {
            Layer::Dense(d) => d
                .weights
                .iter()
                .zip(&d.bias)
                .map(|(row, b)| row.iter().zip(xs).fold(*b, |acc, (w, v)| acc + w * v))
                .collect(),
            Layer::Activation(a) => match a.kind {
                ActivationKind::Relu => xs.iter().map(|v| v.max(0.0)).collect(),
                ActivationKind::Sigmoid => xs.iter().map(|&v| LutFunction::Sigmoid.eval(v)).collect(),
                ActivationKind::Tanh => xs.iter().map(|&v| LutFunction::Tanh.eval(v)).collect(),
                ActivationKind::Softmax => softmax_f64(xs),
            },
        };
        edges.push(next);
    }
    ReferenceRun { edges }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputError {
    pub index: usize,
    pub max_abs_error: f64,
    pub mean_sq_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerError {
    pub layer: String,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub n_samples: usize,
    /// Fraction of samples where both paths pick the same class.
    pub top1_agreement: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top1_accuracy_quantized: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top1_accuracy_reference: Option<f64>,
    pub outputs: Vec<OutputError>,
    /// Decoded edge after each model layer against the reference edge.
    pub layers: Vec<LayerError>,
    /// Sum of the worst-case rounding error of every cast on the path to
    /// an output; absent when a minifloat edge is on the path.
    pub rounding_bound: Option<f64>,
}

/// First index of the largest value; NaN never wins.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        if !x.is_nan() && best.is_none_or(|b| x > xs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Worst-case error added by rounding, summed over every cast on the path.
pub fn rounding_bound(ir: &TypedIr) -> Option<f64> {
    let mut total = ir.input_format.as_fixed()?.rounding_bound();
    for node in &ir.nodes {
        total += match &node.op {
            NodeOp::Relu => 0.0,
            NodeOp::Convert => return None,
            NodeOp::Table(t) => t.spec().entry_format.rounding_bound(),
            NodeOp::Softmax { exp, recip } => {
                exp.spec().entry_format.rounding_bound()
                    + recip.spec().entry_format.rounding_bound()
                    + node.out_format.as_fixed()?.rounding_bound()
            }
            NodeOp::Dense(d) => match &d.params {
                DenseParams::Fixed { accum_format, .. } => {
                    let out = node.out_format.as_fixed()?;
                    if out.frac_bits() < accum_format.frac_bits() {
                        out.rounding_bound()
                    } else {
                        0.0
                    }
                }
                DenseParams::Float { .. } => return None,
            },
        };
    }
    Some(total)
}

struct SampleStats {
    agree: bool,
    correct_q: Option<bool>,
    correct_r: Option<bool>,
    out_err: Vec<f64>,
    layer_err: Vec<f64>,
}

/// Runs both paths over every sample and aggregates the errors.
pub fn evaluate(ir: &TypedIr, m: &NetworkModel, d: &Dataset) -> Result<AccuracyReport, SimError> {
    if d.samples.is_empty() {
        return Err(SimError::Empty);
    }
    if let Some((sample, s)) = d.samples.iter().enumerate().find(|(_, s)| s.input.len() != ir.input_size) {
        return Err(SimError::Shape { sample, expected: ir.input_size, found: s.input.len() });
    }
    let layer_nodes: Vec<(usize, usize)> =
        ir.nodes.iter().enumerate().filter_map(|(k, n)| n.layer_index.map(|li| (k, li))).collect();

    let stats: Vec<SampleStats> = d
        .samples
        .par_iter()
        .map(|s| {
            let q = run_quantized(ir, &s.input);
            let r = run_reference(m, &s.input);
            let qo = q.output();
            let ro = r.output();
            let (qa, ra) = (argmax(&qo), argmax(ro));
            let layer_err = layer_nodes
                .iter()
                .map(|&(k, li)| max_abs_diff(q.edges[k + 1].iter().map(Scalar::to_f64), &r.edges[li + 1]))
                .collect();
            SampleStats {
                agree: qa == ra,
                correct_q: s.label.map(|l| qa == Some(l)),
                correct_r: s.label.map(|l| ra == Some(l)),
                out_err: qo.iter().zip(ro).map(|(a, b)| abs_err(*a, *b)).collect(),
                layer_err,
            }
        })
        .collect();

    let n = stats.len();
    let frac = |k: usize| k as f64 / n as f64;
    let labelled = stats.iter().all(|s| s.correct_q.is_some());
    let count = |f: fn(&SampleStats) -> bool| stats.iter().filter(|s| f(s)).count();
    let n_out = ir.output_size();
    let outputs = (0..n_out)
        .map(|i| OutputError {
            index: i,
            max_abs_error: stats.iter().map(|s| s.out_err[i]).fold(0.0, f64::max),
            mean_sq_error: stats.iter().map(|s| s.out_err[i] * s.out_err[i]).sum::<f64>() / n as f64,
        })
        .collect();
    let layers = layer_nodes
        .iter()
        .enumerate()
        .map(|(j, &(k, _))| LayerError {
            layer: ir.nodes[k].name.clone(),
            max_abs_error: stats.iter().map(|s| s.layer_err[j]).fold(0.0, f64::max),
        })
        .collect();
    Ok(AccuracyReport {
        n_samples: n,
        top1_agreement: frac(count(|s| s.agree)),
        top1_accuracy_quantized: labelled.then(|| frac(count(|s| s.correct_q == Some(true)))),
        top1_accuracy_reference: labelled.then(|| frac(count(|s| s.correct_r == Some(true)))),
        outputs,
        layers,
        rounding_bound: rounding_bound(ir),
    })
}

/// Absolute difference; any disagreement involving a non-finite value is infinite.
fn abs_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        let e = (a - b).abs();
        if e.is_nan() {
            f64::INFINITY
        } else {
            e
        }
    }
}

fn max_abs_diff(q: impl Iterator<Item = f64>, r: &[f64]) -> f64 {
    q.zip(r).map(|(a, b)| abs_err(a, *b)).fold(0.0, f64::max)
}
