use crate::actlut::{sum_growth_bits, LutFunction, LutSpec, LutTable};
use crate::fixnum::{FxFormat, FxValue};
use crate::format::NumFormat;
use crate::minifloat::{MfFormat, MfValue};

use super::config::{ConfigError, QuantConfig};
use super::network::{ActivationKind, DenseLayer, Layer, NetworkModel};

/// Exact accumulator for a dot product of `n_in` terms plus a bias:
/// the product format grown by `ceil(log2(n_in + 1))` integer bits.
pub fn derive_accum_format(in_f: FxFormat, w_f: FxFormat, n_in: usize) -> Result<FxFormat, ConfigError> {
    let g = sum_growth_bits(n_in + 1);
    let width = in_f.width() + w_f.width() + g;
    let int_bits = in_f.int_bits() + w_f.int_bits() + g;
    if width > crate::fixnum::MAX_USER_WIDTH {
        return Err(ConfigError::AccumTooWide { layer: String::new(), width });
    }
    Ok(FxFormat::new(width, int_bits as i64, w_f.rounding(), w_f.overflow()).expect("within envelope"))
}

#[derive(Clone, Debug, PartialEq)]
pub enum DenseParams {
    Fixed {
        weight_format: FxFormat,
        accum_format: FxFormat,
        /// Raw weights, row-major `n_out x n_in`.
        weights: Vec<i64>,
        /// Raw biases in the weight format.
        bias: Vec<i64>,
    },
    Float {
        format: MfFormat,
        weights: Vec<MfValue>,
        bias: Vec<MfValue>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNode {
    pub n_in: usize,
    pub n_out: usize,
    pub reuse_factor: u32,
    /// Weights whose quantized value is nonzero.
    pub nnz: usize,
    pub params: DenseParams,
}

impl DenseNode {
    /// Storage width of one weight.
    pub fn weight_width(&self) -> u32 {
        match &self.params {
            DenseParams::Fixed { weight_format, .. } => weight_format.width(),
            DenseParams::Float { format, .. } => format.width(),
        }
    }

    /// Fraction of weights that quantized to zero.
    pub fn sparsity(&self) -> f64 {
        1.0 - self.nnz as f64 / (self.n_in * self.n_out) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeOp {
    Dense(DenseNode),
    Relu,
    /// Sigmoid or tanh through one table.
    Table(LutTable),
    Softmax {
        exp: LutTable,
        recip: LutTable,
    },
    /// Re-encodes the incoming edge into `out_format`.
    Convert,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub name: String,
    /// Position of the originating model layer; `None` for inserted nodes.
    pub layer_index: Option<usize>,
    pub in_format: NumFormat,
    pub out_format: NumFormat,
    pub in_size: usize,
    pub out_size: usize,
    pub op: NodeOp,
}

impl Node {
    /// Lookup tables owned by this node, with their dump names.
    pub fn tables<'a>(&'a self) -> Vec<(String, &'a LutTable)> {
        let named = |t: &'a LutTable| (format!("{}_{}", self.name, t.spec().function), t);
        match &self.op {
            NodeOp::Table(t) => vec![named(t)],
            NodeOp::Softmax { exp, recip } => vec![named(exp), named(recip)],
            _ => Vec::new(),
        }
    }
}

/// Network after format resolution: every edge has a concrete format and
/// every node carries its quantized constants.
#[derive(Clone, Debug, PartialEq)]
pub struct TypedIr {
    pub name: String,
    pub input_size: usize,
    pub input_format: NumFormat,
    pub nodes: Vec<Node>,
}

impl TypedIr {
    pub fn output_format(&self) -> NumFormat {
        self.nodes.last().map(|n| n.out_format).unwrap_or(self.input_format)
    }

    pub fn output_size(&self) -> usize {
        self.nodes.last().map(|n| n.out_size).unwrap_or(self.input_size)
    }

    /// All tables in node order.
    pub fn tables(&self) -> Vec<(String, &LutTable)> {
        self.nodes.iter().flat_map(|n| n.tables()).collect()
    }
}

/// Resolves formats, quantizes constants and builds activation tables.
pub fn build_ir(model: &NetworkModel, config: &QuantConfig) -> Result<TypedIr, ConfigError> {
    config.check_scalars()?;
    for (field, keys) in [
        ("per_layer_type", config.per_layer_type.keys().collect::<Vec<_>>()),
        ("reuse_factor", config.reuse_factor.keys().collect()),
    ] {
        if let Some(k) = keys.into_iter().find(|k| model.layer_index(k).is_none()) {
            return Err(ConfigError::UnknownLayer { field, layer: k.clone() });
        }
    }

    let mut nodes = Vec::new();
    let mut edge = config.default_type;
    let mut width = model.input_size;
    for (position, layer) in model.layers.iter().enumerate() {
        let node = match layer {
            Layer::Dense(d) => {
                let fmt = config.layer_type(&d.name);
                if needs_conversion(edge, fmt) {
                    nodes.push(Node {
                        name: format!("{}_convert", d.name),
                        layer_index: None,
                        in_format: edge,
                        out_format: fmt,
                        in_size: width,
                        out_size: width,
                        op: NodeOp::Convert,
                    });
                    edge = fmt;
                }
                let dense = build_dense(d, edge, fmt, config)?;
                Node {
                    name: d.name.clone(),
                    layer_index: Some(position),
                    in_format: edge,
                    out_format: fmt,
                    in_size: d.n_in,
                    out_size: d.n_out,
                    op: NodeOp::Dense(dense),
                }
            }
            Layer::Activation(a) => {
                let (op, out_format) = build_activation(&a.name, a.kind, edge, config)?;
                Node {
                    name: a.name.clone(),
                    layer_index: Some(position),
                    in_format: edge,
                    out_format,
                    in_size: width,
                    out_size: width,
                    op,
                }
            }
        };
        edge = node.out_format;
        width = node.out_size;
        nodes.push(node);
    }
    Ok(TypedIr { name: model.name.clone(), input_size: model.input_size, input_format: config.default_type, nodes })
}

/// Fixed-point layers accept any fixed-point edge (the accumulator adapts);
/// minifloat layers need operands in their own format.
fn needs_conversion(edge: NumFormat, layer: NumFormat) -> bool {
    match (edge, layer) {
        (NumFormat::Fixed(_), NumFormat::Fixed(_)) => false,
        (NumFormat::Float(a), NumFormat::Float(b)) => a != b,
        _ => true,
    }
}

fn pruned(w: f64, threshold: f64) -> f64 {
    if w.abs() < threshold {
        0.0
    } else {
        w
    }
}

fn build_dense(
    d: &DenseLayer,
    edge: NumFormat,
    fmt: NumFormat,
    config: &QuantConfig,
) -> Result<DenseNode, ConfigError> {
    let flat = d.weights.iter().flatten().map(|&w| pruned(w, config.prune_threshold));
    let (params, nnz) = match (edge, fmt) {
        (NumFormat::Fixed(in_f), NumFormat::Fixed(w_f)) => {
            let accum_format = derive_accum_format(in_f, w_f, d.n_in).map_err(|e| match e {
                ConfigError::AccumTooWide { width, .. } => ConfigError::AccumTooWide { layer: d.name.clone(), width },
                other => other,
            })?;
            let weights: Vec<i64> = flat.map(|w| FxValue::quantize(w, w_f).raw() as i64).collect();
            let bias = d.bias.iter().map(|&b| FxValue::quantize(b, w_f).raw() as i64).collect();
            let nnz = weights.iter().filter(|&&w| w != 0).count();
            (DenseParams::Fixed { weight_format: w_f, accum_format, weights, bias }, nnz)
        }
        (_, NumFormat::Float(f)) => {
            let weights: Vec<MfValue> = flat.map(|w| f.encode(w)).collect();
            let bias = d.bias.iter().map(|&b| f.encode(b)).collect();
            let nnz = weights.iter().filter(|w| !w.is_zero()).count();
            (DenseParams::Float { format: f, weights, bias }, nnz)
        }
        (NumFormat::Float(_), NumFormat::Fixed(_)) => unreachable!("converted before the layer"),
    };
    Ok(DenseNode { n_in: d.n_in, n_out: d.n_out, reuse_factor: config.layer_reuse(&d.name), nnz, params })
}

fn table(function: LutFunction, entry: FxFormat, config: &QuantConfig) -> Result<LutTable, ConfigError> {
    let mut spec = LutSpec::with_default_range(function, config.table_size, entry);
    spec.sample_point = config.sample_point;
    Ok(LutTable::build(spec)?)
}

fn build_activation(
    name: &str,
    kind: ActivationKind,
    edge: NumFormat,
    config: &QuantConfig,
) -> Result<(NodeOp, NumFormat), ConfigError> {
    let override_fmt = config.per_layer_type.get(name).copied();
    let what = || format!("per_layer_type.{name}");
    match kind {
        ActivationKind::Relu => {
            if override_fmt.is_some() {
                return Err(ConfigError::FormatNotApplicable { layer: name.to_string(), kind: kind.to_string() });
            }
            Ok((NodeOp::Relu, edge))
        }
        ActivationKind::Sigmoid | ActivationKind::Tanh => {
            let entry = match override_fmt {
                Some(f) => QuantConfig::fixed_table_format(&what(), f)?,
                None => QuantConfig::fixed_table_format("table_entry_format", config.table_entry_format)?,
            };
            let function = if kind == ActivationKind::Sigmoid { LutFunction::Sigmoid } else { LutFunction::Tanh };
            Ok((NodeOp::Table(table(function, entry, config)?), NumFormat::Fixed(entry)))
        }
        ActivationKind::Softmax => {
            let exp_f = QuantConfig::fixed_table_format("softmax_exp_format", config.softmax_exp_format)?;
            let recip_f = QuantConfig::fixed_table_format("softmax_recip_format", config.softmax_recip_format)?;
            let out = match override_fmt {
                Some(f) => QuantConfig::fixed_table_format(&what(), f)?,
                None => exp_f,
            };
            let op = NodeOp::Softmax {
                exp: table(LutFunction::Exp, exp_f, config)?,
                recip: table(LutFunction::Reciprocal, recip_f, config)?,
            };
            Ok((op, NumFormat::Fixed(out)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixnum::{Overflow, Rounding};
    use crate::model::parse_model;

    fn fx(w: u32, i: i64) -> FxFormat {
        FxFormat::new(w, i, Rounding::Nearest, Overflow::Saturate).unwrap()
    }

    fn dense_model(n: usize, weight: impl Fn(usize, usize) -> f64) -> NetworkModel {
        let weights: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| weight(r, c)).collect()).collect();
        let doc = serde_json::json!({
            "name": "d", "input_size": n,
            "layers": [{"type": "dense", "name": "fc", "n_in": n, "n_out": n, "weights": weights, "bias": vec![0.0; n]}]
        });
        parse_model(&doc.to_string()).unwrap()
    }

    #[test]
    fn accum_format_examples() {
        let a = derive_accum_format(fx(8, 2), fx(8, 2), 3).unwrap();
        assert_eq!((a.width(), a.int_bits()), (18, 6));
        let a = derive_accum_format(fx(8, 2), fx(8, 2), 1).unwrap();
        assert_eq!((a.width(), a.int_bits()), (17, 5));
        let a = derive_accum_format(fx(16, 6), fx(16, 6), 64).unwrap();
        assert_eq!((a.width(), a.int_bits()), (39, 19));
        assert!(matches!(
            derive_accum_format(fx(32, 6), fx(32, 6), 4),
            Err(ConfigError::AccumTooWide { width: 67, .. })
        ));
    }

    #[test]
    fn reuse_factor_and_nnz() {
        let m = dense_model(16, |_, _| 0.25);
        let mut c = QuantConfig::default();
        c.reuse_factor.insert("fc".into(), 4);
        let ir = build_ir(&m, &c).unwrap();
        let NodeOp::Dense(d) = &ir.nodes[0].op else { panic!() };
        assert_eq!((d.reuse_factor, d.nnz), (4, 256));
    }

    #[test]
    fn prune_threshold_counts_survivors() {
        let m = dense_model(2, |r, c| {
            if (r, c) == (0, 0) {
                0.4
            } else if (r, c) == (0, 1) {
                0.6
            } else {
                0.0
            }
        });
        let c = QuantConfig { prune_threshold: 0.5, ..Default::default() };
        let ir = build_ir(&m, &c).unwrap();
        let NodeOp::Dense(d) = &ir.nodes[0].op else { panic!() };
        assert_eq!(d.nnz, 1);
    }

    #[test]
    fn weights_quantize_in_layer_format() {
        let m = dense_model(1, |_, _| 0.3);
        let mut c = QuantConfig::default();
        c.per_layer_type.insert("fc".into(), NumFormat::Fixed(fx(8, 2)));
        let ir = build_ir(&m, &c).unwrap();
        let NodeOp::Dense(d) = &ir.nodes[0].op else { panic!() };
        let DenseParams::Fixed { weights, .. } = &d.params else { panic!() };
        assert_eq!(weights[0], 19);
        assert_eq!(ir.nodes[0].out_format, NumFormat::Fixed(fx(8, 2)));
    }

    #[test]
    fn unknown_layer_in_config() {
        let m = dense_model(1, |_, _| 1.0);
        let mut c = QuantConfig::default();
        c.reuse_factor.insert("nope".into(), 2);
        let err = build_ir(&m, &c).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn minifloat_layers_get_conversions() {
        let m = dense_model(2, |r, c| (r + c) as f64 * 0.5);
        let mut c = QuantConfig::default();
        c.per_layer_type.insert("fc".into(), "float<4,3>".parse().unwrap());
        let ir = build_ir(&m, &c).unwrap();
        assert_eq!(ir.nodes.len(), 2);
        assert_eq!(ir.nodes[0].op, NodeOp::Convert);
        assert_eq!(ir.nodes[0].name, "fc_convert");
        assert_eq!(ir.nodes[1].in_format.to_string(), "float<4,3>");
        let NodeOp::Dense(d) = &ir.nodes[1].op else { panic!() };
        assert_eq!(d.nnz, 3);
    }

    #[test]
    fn tables_follow_config() {
        let m = parse_model(
            r#"{"name":"m","input_size":2,"layers":[
                {"type":"activation","kind":"sigmoid","name":"s"},
                {"type":"activation","kind":"softmax"}]}"#,
        )
        .unwrap();
        let mut c = QuantConfig { table_size: 256, ..Default::default() };
        let ir = build_ir(&m, &c).unwrap();
        let names: Vec<String> = ir.tables().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["s_sigmoid", "softmax_1_exp", "softmax_1_reciprocal"]);
        assert!(ir.tables().iter().all(|(_, t)| t.entries().len() == 256));
        assert_eq!(ir.output_format().to_string(), "fixed<18,2,rnd,sat>");

        c.per_layer_type.insert("s".into(), "float<4,3>".parse().unwrap());
        assert!(matches!(build_ir(&m, &c), Err(ConfigError::FloatTable { .. })));
    }

    #[test]
    fn relu_takes_no_format() {
        let m = parse_model(r#"{"name":"m","input_size":2,"layers":[{"type":"activation","kind":"relu","name":"r"}]}"#)
            .unwrap();
        let mut c = QuantConfig::default();
        c.per_layer_type.insert("r".into(), NumFormat::Fixed(fx(8, 2)));
        assert!(matches!(build_ir(&m, &c), Err(ConfigError::FormatNotApplicable { .. })));
    }

    #[test]
    fn build_is_deterministic() {
        let m = dense_model(8, |r, c| ((r * 7 + c * 3) % 11) as f64 / 7.0 - 0.7);
        let c = QuantConfig::default();
        assert_eq!(build_ir(&m, &c).unwrap(), build_ir(&m, &c).unwrap());
    }
}
