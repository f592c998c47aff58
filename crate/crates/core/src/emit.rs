//! Lowering of a typed IR to portable integer-only C.
//!
//! Every edge is an `int64_t` array of raw fixed-point values. Casts become
//! multiplications by literal powers of two, rounding right shifts and
//! literal clamps; constants become `static const` arrays of the narrowest
//! `intN_t` that holds them. No datatype library and no tool pragmas.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actlut::{softmax_sum_format, LutTable};
use crate::fixnum::{FxFormat, Overflow, Rounding};
use crate::format::NumFormat;
use crate::model::{DenseNode, DenseParams, Node, NodeOp, TypedIr};

/// Widest value an emitted `int64_t` variable may hold, in bits.
pub const MAX_EMIT_WIDTH: u32 = 63;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmitError {
    #[error("node `{node}`: {what} is not supported by the C backend")]
    Unsupported { node: String, what: String },
    #[error("node `{node}`: {what} needs {width} bits, emitted integers hold at most {MAX_EMIT_WIDTH}")]
    TooWide { node: String, what: String, width: u32 },
    #[error("node `{node}`: shift by {shift} exceeds 62 bits")]
    Shift { node: String, shift: i64 },
    #[error("node `{node}`: wrap overflow on a {width}-bit format is not emitted (limit 62)")]
    WrapTooWide { node: String, width: u32 },
    #[error("names `{a}` and `{b}` map to the same C identifier `{ident}`")]
    NameClash { a: String, b: String, ident: String },
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

/// Generated files keyed by relative path.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SourceBundle {
    pub files: BTreeMap<String, String>,
}

impl SourceBundle {
    /// Digests of every file, ordered by path.
    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.files
            .iter()
            .map(|(path, text)| ManifestEntry { path: path.clone(), sha256: sha256_hex(text.as_bytes()) })
            .collect()
    }

    pub fn manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&serde_json::json!({ "files": self.manifest() }))
            .expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Writes every file plus `manifest.json` under `dir`; returns the paths
    /// written, relative to `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        for (path, text) in &self.files {
            let full = dir.join(path);
            if let Some(parent) = full.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(full, text)?;
        }
        std::fs::write(dir.join("manifest.json"), self.manifest_json())?;
        let mut written: Vec<String> = self.files.keys().cloned().collect();
        written.push("manifest.json".into());
        written.sort();
        Ok(written)
    }
}

/// Source of tool-specific annotations. The returned text is placed
/// verbatim at the top of each reuse-factor iteration.
pub trait PragmaHook {
    fn reuse_hint(&self, layer: &str, reuse_factor: u32, backend: &str) -> String;
}

/// Default hook: a neutral comment that every C front-end ignores.
#[derive(Clone, Copy, Debug, Default)]
pub struct CommentHints;

impl PragmaHook for CommentHints {
    fn reuse_hint(&self, layer: &str, reuse_factor: u32, backend: &str) -> String {
        format!("/* hint(backend={backend}, layer={layer}, reuse_factor={reuse_factor}) */")
    }
}

pub struct EmitOptions<'a> {
    pub backend: &'a str,
    pub hook: &'a dyn PragmaHook,
}

impl Default for EmitOptions<'_> {
    fn default() -> Self {
        Self { backend: "generic", hook: &CommentHints }
    }
}

/// Lowercase C identifier for an arbitrary name.
pub fn c_ident(name: &str) -> String {
    let mut s: String =
        name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert(0, 'n');
    }
    s
}

fn table_path(name: &str) -> String {
    format!("tables/{}.txt", c_ident(name))
}

/// Dumps of every lookup table, keyed by `tables/<node>_<function>.txt`.
pub fn emit_tables(ir: &TypedIr) -> SourceBundle {
    let files = ir.tables().into_iter().map(|(name, t)| (table_path(&name), t.dump())).collect();
    SourceBundle { files }
}

/// Header, implementation and table dumps for `ir`.
pub fn emit_source(ir: &TypedIr) -> Result<SourceBundle, EmitError> {
    emit_source_with(ir, &EmitOptions::default())
}

pub fn emit_source_with(ir: &TypedIr, opts: &EmitOptions) -> Result<SourceBundle, EmitError> {
    let model = c_ident(&ir.name);
    check_names(ir, &model)?;
    let mut em = Emitter { opts, helpers: Helpers::default(), consts: String::new(), funcs: String::new() };
    for node in &ir.nodes {
        em.node(node)?;
    }
    let top = em.top(ir, &model)?;

    let mut c = String::new();
    writeln!(c, "#include \"{model}.h\"").unwrap();
    c.push('\n');
    em.helpers.write(&mut c);
    c.push_str(&em.consts);
    c.push_str(&em.funcs);
    c.push_str(&top);

    let mut bundle = emit_tables(ir);
    bundle.files.insert(format!("{model}.h"), header(ir, &model)?);
    bundle.files.insert(format!("{model}.c"), c);
    Ok(bundle)
}

fn check_names(ir: &TypedIr, model: &str) -> Result<(), EmitError> {
    let mut seen: HashMap<String, &str> = HashMap::new();
    seen.insert(format!("{model}_infer"), &ir.name);
    for n in &ir.nodes {
        let ident = c_ident(&n.name);
        if let Some(prev) = seen.insert(ident.clone(), &n.name) {
            return Err(EmitError::NameClash { a: prev.to_string(), b: n.name.clone(), ident });
        }
    }
    Ok(())
}

fn fixed_edge(node: &str, f: NumFormat, what: &str) -> Result<FxFormat, EmitError> {
    let fx = f
        .as_fixed()
        .ok_or_else(|| EmitError::Unsupported { node: node.to_string(), what: format!("{what} in {f}") })?;
    check_width(node, what, fx.width())?;
    Ok(fx)
}

fn check_width(node: &str, what: &str, width: u32) -> Result<(), EmitError> {
    if width > MAX_EMIT_WIDTH {
        return Err(EmitError::TooWide { node: node.to_string(), what: what.to_string(), width });
    }
    Ok(())
}

fn header(ir: &TypedIr, model: &str) -> Result<String, EmitError> {
    let guard = format!("{}_H", model.to_ascii_uppercase());
    let (n, m) = (ir.input_size, ir.output_size());
    let in_f = fixed_edge("input", ir.input_format, "input edge")?;
    let mut h = String::new();
    writeln!(h, "#ifndef {guard}").unwrap();
    writeln!(h, "#define {guard}").unwrap();
    h.push('\n');
    writeln!(h, "#include <stdint.h>").unwrap();
    h.push('\n');
    writeln!(h, "/* input: {n} raw values in {in_f}; output: {m} raw values in {} */", ir.output_format()).unwrap();
    writeln!(h, "void {model}_infer(const int64_t input[{n}], int64_t output[{m}]);").unwrap();
    h.push('\n');
    writeln!(h, "#endif").unwrap();
    Ok(h)
}

/// C literal for a 64-bit value.
fn lit(v: i128) -> String {
    if v < 0 {
        format!("(-{}LL)", v.unsigned_abs())
    } else {
        format!("{v}LL")
    }
}

fn pow2(k: u32) -> String {
    lit(1i128 << k)
}

fn c_type_for(values: impl Iterator<Item = i128> + Clone) -> &'static str {
    let lo = values.clone().min().unwrap_or(0);
    let hi = values.max().unwrap_or(0);
    for (bits, name) in [(8, "int8_t"), (16, "int16_t"), (32, "int32_t")] {
        if lo >= -(1i128 << (bits - 1)) && hi < (1i128 << (bits - 1)) {
            return name;
        }
    }
    "int64_t"
}

fn const_array(out: &mut String, name: &str, values: &[i128]) {
    let ty = c_type_for(values.iter().copied());
    let suffix = if ty == "int64_t" { "LL" } else { "" };
    writeln!(out, "static const {ty} {name}[{}] = {{", values.len()).unwrap();
    for v in values {
        writeln!(out, "    {v}{suffix},").unwrap();
    }
    out.push_str("};\n\n");
}

#[derive(Default)]
struct Helpers {
    round: bool,
    wrap: bool,
}

impl Helpers {
    fn write(&self, c: &mut String) {
        if self.round {
            c.push_str(
                "/* v * 2^-k rounded to nearest, ties away from zero; half = 2^(k-1) */\n\
                 static int64_t fx_round_shift(int64_t v, int64_t k, int64_t half) {\n\
                 \x20   int64_t q = v >> k;\n\
                 \x20   int64_t rem = v - q * (half + half);\n\
                 \x20   if (rem > half) {\n\
                 \x20       return q + 1;\n\
                 \x20   }\n\
                 \x20   if (rem == half && v > 0) {\n\
                 \x20       return q + 1;\n\
                 \x20   }\n\
                 \x20   return q;\n\
                 }\n\n",
            );
        }
        if self.wrap {
            c.push_str(
                "/* keep the low bits selected by mask, sign-extended; full = mask + 1 */\n\
                 static int64_t fx_wrap(int64_t v, int64_t mask, int64_t full) {\n\
                 \x20   int64_t m = v & mask;\n\
                 \x20   if (m + m >= full) {\n\
                 \x20       m = m - full;\n\
                 \x20   }\n\
                 \x20   return m;\n\
                 }\n\n",
            );
        }
    }
}

struct Emitter<'a> {
    opts: &'a EmitOptions<'a>,
    helpers: Helpers,
    consts: String,
    funcs: String,
}

impl Emitter<'_> {
    /// Statements that cast variable `v` from `from` to `to` in place.
    fn cast(&mut self, node: &str, ind: &str, from: FxFormat, to: FxFormat) -> Result<String, EmitError> {
        check_width(node, "cast source", from.width())?;
        check_width(node, "cast target", to.width())?;
        let mut s = String::new();
        let shift = to.frac_bits() as i64 - from.frac_bits() as i64;
        if shift.abs() > 62 {
            return Err(EmitError::Shift { node: node.to_string(), shift });
        }
        if shift > 0 {
            check_width(node, "left-aligned value", from.width() + shift as u32)?;
            writeln!(s, "{ind}v = v * {};", pow2(shift as u32)).unwrap();
        } else if shift < 0 {
            let k = (-shift) as u32;
            match to.rounding() {
                Rounding::Truncate => writeln!(s, "{ind}v = v >> {k};").unwrap(),
                Rounding::Nearest => {
                    self.helpers.round = true;
                    writeln!(s, "{ind}v = fx_round_shift(v, {k}, {});", pow2(k - 1)).unwrap();
                }
            }
        }
        match to.overflow() {
            Overflow::Saturate => {
                let (lo, hi) = (lit(to.min_raw()), lit(to.max_raw()));
                writeln!(s, "{ind}if (v < {lo}) {{\n{ind}    v = {lo};\n{ind}}}").unwrap();
                writeln!(s, "{ind}if (v > {hi}) {{\n{ind}    v = {hi};\n{ind}}}").unwrap();
            }
            Overflow::Wrap => {
                if to.width() > 62 {
                    return Err(EmitError::WrapTooWide { node: node.to_string(), width: to.width() });
                }
                self.helpers.wrap = true;
                let full = 1i128 << to.width();
                writeln!(s, "{ind}v = fx_wrap(v, {}, {});", lit(full - 1), lit(full)).unwrap();
            }
        }
        Ok(s)
    }

    /// Statements computing `idx` for table `t` from variable `t_in` whose
    /// format has `in_f`.
    fn index(&self, node: &str, ind: &str, t: &LutTable, in_f: FxFormat) -> Result<String, EmitError> {
        let n = t.entries().len() as i128;
        let r = t.geometry().index_recipe(in_f.frac_bits()).ok_or_else(|| EmitError::TooWide {
            node: node.to_string(),
            what: "table offset".into(),
            width: 128,
        })?;
        if r.input_shift > 62 {
            return Err(EmitError::Shift { node: node.to_string(), shift: r.input_shift as i64 });
        }
        let offset_bits = 128 - r.offset.unsigned_abs().leading_zeros();
        let t_bits = (in_f.width() + r.input_shift).max(offset_bits + 1) + 1;
        check_width(node, "table index difference", t_bits)?;
        let mut s = String::new();
        let scaled = if r.input_shift == 0 { "t_in".to_string() } else { format!("t_in * {}", pow2(r.input_shift)) };
        writeln!(s, "{ind}idx = {scaled} - {};", lit(r.offset)).unwrap();
        if r.index_shift > 0 {
            let k = r.index_shift as u32;
            if k > 62 || t.geometry().log2_n as u32 + k + 2 > 63 {
                return Err(EmitError::Shift { node: node.to_string(), shift: r.index_shift });
            }
            writeln!(s, "{ind}if (idx > {}) {{\n{ind}    idx = {};\n{ind}}}", lit(n), lit(n)).unwrap();
            writeln!(s, "{ind}idx = idx * {};", pow2(k)).unwrap();
        } else if r.index_shift < 0 {
            let k = -r.index_shift;
            if k > 62 {
                return Err(EmitError::Shift { node: node.to_string(), shift: k });
            }
            writeln!(s, "{ind}idx = idx >> {k};").unwrap();
        }
        writeln!(s, "{ind}if (idx < 0LL) {{\n{ind}    idx = 0LL;\n{ind}}}").unwrap();
        writeln!(s, "{ind}if (idx > {}) {{\n{ind}    idx = {};\n{ind}}}", lit(n - 1), lit(n - 1)).unwrap();
        Ok(s)
    }

    fn table_array(&mut self, name: &str, t: &LutTable) -> Result<(), EmitError> {
        let spec = t.spec();
        check_width(name, "table entry", spec.entry_format.width())?;
        writeln!(
            self.consts,
            "/* {}: {} entries over [{}, {}), {} */",
            spec.function, spec.n_entries, spec.input_lo, spec.input_hi, spec.entry_format
        )
        .unwrap();
        let vals: Vec<i128> = t.entries().iter().map(|&e| e as i128).collect();
        const_array(&mut self.consts, name, &vals);
        Ok(())
    }

    fn node(&mut self, node: &Node) -> Result<(), EmitError> {
        let id = c_ident(&node.name);
        let upper = id.to_ascii_uppercase();
        let in_f = fixed_edge(&node.name, node.in_format, "input edge")?;
        let out_f = fixed_edge(&node.name, node.out_format, "output edge")?;
        let (n_in, n_out) = (node.in_size, node.out_size);
        let mut f = String::new();
        let sig = format!("static void {id}(const int64_t x[{n_in}], int64_t y[{n_out}])");
        match &node.op {
            NodeOp::Convert => {
                return Err(EmitError::Unsupported { node: node.name.clone(), what: "format conversion".into() })
            }
            NodeOp::Relu => {
                writeln!(f, "/* {}: relu over {n_in} values in {in_f} */", node.name).unwrap();
                writeln!(f, "{sig} {{").unwrap();
                writeln!(f, "    int64_t i;").unwrap();
                writeln!(f, "    for (i = 0; i < {n_in}; i++) {{").unwrap();
                writeln!(f, "        if (x[i] < 0LL) {{\n            y[i] = 0LL;\n        }} else {{\n            y[i] = x[i];\n        }}").unwrap();
                writeln!(f, "    }}").unwrap();
                f.push_str("}\n\n");
            }
            NodeOp::Table(t) => {
                let arr = format!("{upper}_TABLE");
                self.table_array(&arr, t)?;
                writeln!(f, "/* {}: {} lookup, {in_f} -> {out_f} */", node.name, t.spec().function).unwrap();
                writeln!(f, "{sig} {{").unwrap();
                writeln!(f, "    int64_t i;\n    int64_t t_in;\n    int64_t idx;").unwrap();
                writeln!(f, "    for (i = 0; i < {n_in}; i++) {{").unwrap();
                writeln!(f, "        t_in = x[i];").unwrap();
                f.push_str(&self.index(&node.name, "        ", t, in_f)?);
                writeln!(f, "        y[i] = {arr}[idx];").unwrap();
                writeln!(f, "    }}").unwrap();
                f.push_str("}\n\n");
            }
            NodeOp::Softmax { exp, recip } => self.softmax(&mut f, node, &sig, &upper, in_f, out_f, exp, recip)?,
            NodeOp::Dense(d) => self.dense(&mut f, node, &sig, &upper, in_f, out_f, d)?,
        }
        self.funcs.push_str(&f);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn softmax(
        &mut self,
        f: &mut String,
        node: &Node,
        sig: &str,
        upper: &str,
        in_f: FxFormat,
        out_f: FxFormat,
        exp: &LutTable,
        recip: &LutTable,
    ) -> Result<(), EmitError> {
        let n = node.in_size;
        let (ea, ra) = (format!("{upper}_EXP"), format!("{upper}_RECIP"));
        self.table_array(&ea, exp)?;
        self.table_array(&ra, recip)?;
        let e_f = exp.spec().entry_format;
        let r_f = recip.spec().entry_format;
        let diff_f = FxFormat::storage(in_f.width() + 1, in_f.int_bits() as i64 + 1, in_f.rounding(), in_f.overflow())
            .expect("within storage");
        let sum_f = softmax_sum_format(exp, n);
        let prod_f = FxFormat::storage(
            e_f.width() + r_f.width(),
            (e_f.int_bits() + r_f.int_bits()) as i64,
            out_f.rounding(),
            out_f.overflow(),
        )
        .expect("within storage");
        check_width(&node.name, "max-shifted input", diff_f.width())?;
        check_width(&node.name, "exponential sum", sum_f.width())?;
        check_width(&node.name, "scaled exponential", prod_f.width())?;

        writeln!(f, "/* {}: softmax over {n} values, {in_f} -> {out_f}", node.name).unwrap();
        writeln!(f, "   y = exp(x - max) * recip(sum), sum exact in {sum_f} */").unwrap();
        writeln!(f, "{sig} {{").unwrap();
        writeln!(f, "    int64_t e[{n}];").unwrap();
        writeln!(f, "    int64_t i;\n    int64_t mx;\n    int64_t sum;\n    int64_t r;\n    int64_t t_in;\n    int64_t idx;\n    int64_t v;").unwrap();
        writeln!(f, "    mx = x[0];").unwrap();
        writeln!(
            f,
            "    for (i = 1; i < {n}; i++) {{\n        if (x[i] > mx) {{\n            mx = x[i];\n        }}\n    }}"
        )
        .unwrap();
        writeln!(f, "    sum = 0LL;").unwrap();
        writeln!(f, "    for (i = 0; i < {n}; i++) {{").unwrap();
        writeln!(f, "        t_in = x[i] - mx;").unwrap();
        f.push_str(&self.index(&node.name, "        ", exp, diff_f)?);
        writeln!(f, "        e[i] = {ea}[idx];").unwrap();
        writeln!(f, "        sum = sum + e[i];").unwrap();
        writeln!(f, "    }}").unwrap();
        writeln!(f, "    t_in = sum;").unwrap();
        f.push_str(&self.index(&node.name, "    ", recip, sum_f)?);
        writeln!(f, "    r = {ra}[idx];").unwrap();
        writeln!(f, "    for (i = 0; i < {n}; i++) {{").unwrap();
        writeln!(f, "        v = e[i] * r;").unwrap();
        f.push_str(&self.cast(&node.name, "        ", prod_f, out_f)?);
        writeln!(f, "        y[i] = v;").unwrap();
        writeln!(f, "    }}").unwrap();
        f.push_str("}\n\n");
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn dense(
        &mut self,
        f: &mut String,
        node: &Node,
        sig: &str,
        upper: &str,
        in_f: FxFormat,
        out_f: FxFormat,
        d: &DenseNode,
    ) -> Result<(), EmitError> {
        let DenseParams::Fixed { weight_format, accum_format, weights, bias } = &d.params else {
            return Err(EmitError::Unsupported { node: node.name.clone(), what: "minifloat dense layer".into() });
        };
        check_width(&node.name, "accumulator", accum_format.width())?;
        check_width(&node.name, "weights", weight_format.width())?;
        let (n_in, n_out) = (d.n_in, d.n_out);
        let sparse = 2 * d.nnz < n_in * n_out;
        let products = if sparse { d.nnz } else { n_in * n_out };
        let r = d.reuse_factor as usize;
        let m = products.div_ceil(r);

        let b_name = format!("{upper}_B");
        writeln!(
            self.consts,
            "/* {}: weights and bias in {weight_format}, {} of {} weights nonzero */",
            node.name,
            d.nnz,
            n_in * n_out
        )
        .unwrap();
        if sparse {
            let nz: Vec<(usize, i64)> = weights.iter().copied().enumerate().filter(|(_, w)| *w != 0).collect();
            if !nz.is_empty() {
                let vals: Vec<i128> = nz.iter().map(|&(_, w)| w as i128).collect();
                let rows: Vec<i128> = nz.iter().map(|&(p, _)| (p / n_in) as i128).collect();
                let cols: Vec<i128> = nz.iter().map(|&(p, _)| (p % n_in) as i128).collect();
                const_array(&mut self.consts, &format!("{upper}_VAL"), &vals);
                const_array(&mut self.consts, &format!("{upper}_ROW"), &rows);
                const_array(&mut self.consts, &format!("{upper}_COL"), &cols);
            }
        } else {
            let vals: Vec<i128> = weights.iter().map(|&w| w as i128).collect();
            const_array(&mut self.consts, &format!("{upper}_W"), &vals);
        }
        let bias: Vec<i128> = bias.iter().map(|&b| b as i128).collect();
        const_array(&mut self.consts, &b_name, &bias);

        writeln!(
            f,
            "/* {}: dense {n_in} -> {n_out}, {in_f} x {weight_format} -> {out_f}, accumulator {accum_format}",
            node.name
        )
        .unwrap();
        if sparse {
            writeln!(f, "   {} nonzero products in coordinate form;", d.nnz).unwrap();
        } else {
            writeln!(f, "   {products} products;").unwrap();
        }
        writeln!(f, "   reuse factor {r}: {m} multipliers, product p = r * {m} + m at step r */").unwrap();
        writeln!(f, "{sig} {{").unwrap();
        writeln!(f, "    int64_t acc[{n_out}];").unwrap();
        writeln!(f, "    int64_t o;\n    int64_t r;\n    int64_t m;\n    int64_t p;\n    int64_t v;").unwrap();
        let align = if in_f.frac_bits() == 0 { String::new() } else { format!(" * {}", pow2(in_f.frac_bits())) };
        writeln!(f, "    for (o = 0; o < {n_out}; o++) {{\n        acc[o] = {b_name}[o]{align};\n    }}").unwrap();
        if products > 0 {
            let hint = self.opts.hook.reuse_hint(&node.name, d.reuse_factor, self.opts.backend);
            let body = if sparse {
                format!("acc[{upper}_ROW[p]] = acc[{upper}_ROW[p]] + x[{upper}_COL[p]] * {upper}_VAL[p];")
            } else {
                format!("acc[p / {n_in}] = acc[p / {n_in}] + x[p % {n_in}] * {upper}_W[p];")
            };
            writeln!(f, "    for (r = 0; r < {r}; r++) {{").unwrap();
            if !hint.is_empty() {
                writeln!(f, "        {hint}").unwrap();
            }
            writeln!(f, "        for (m = 0; m < {m}; m++) {{").unwrap();
            writeln!(f, "            p = r * {m} + m;").unwrap();
            writeln!(f, "            if (p < {products}) {{").unwrap();
            writeln!(f, "                {body}").unwrap();
            writeln!(f, "            }}").unwrap();
            writeln!(f, "        }}").unwrap();
            writeln!(f, "    }}").unwrap();
        }
        writeln!(f, "    for (o = 0; o < {n_out}; o++) {{").unwrap();
        writeln!(f, "        v = acc[o];").unwrap();
        f.push_str(&self.cast(&node.name, "        ", *accum_format, out_f)?);
        writeln!(f, "        y[o] = v;").unwrap();
        writeln!(f, "    }}").unwrap();
        f.push_str("}\n\n");
        Ok(())
    }

    fn top(&self, ir: &TypedIr, model: &str) -> Result<String, EmitError> {
        let (n, m) = (ir.input_size, ir.output_size());
        let mut s = String::new();
        writeln!(s, "void {model}_infer(const int64_t input[{n}], int64_t output[{m}]) {{").unwrap();
        let last = ir.nodes.len().saturating_sub(1);
        for (k, node) in ir.nodes.iter().enumerate().take(last) {
            writeln!(s, "    int64_t e{k}[{}];", node.out_size).unwrap();
        }
        if ir.nodes.is_empty() {
            writeln!(s, "    int64_t i;").unwrap();
            writeln!(s, "    for (i = 0; i < {n}; i++) {{\n        output[i] = input[i];\n    }}").unwrap();
        }
        for (k, node) in ir.nodes.iter().enumerate() {
            let src = if k == 0 { "input".to_string() } else { format!("e{}", k - 1) };
            let dst = if k == last { "output".to_string() } else { format!("e{k}") };
            writeln!(s, "    {}({src}, {dst});", c_ident(&node.name)).unwrap();
        }
        s.push_str("}\n");
        Ok(s)
    }
}
