//! Analytic resource and latency estimate per node.
//!
//! The cycle model is coarse by intent: a dense layer takes one step per
//! reuse-factor iteration plus an adder tree, activations a fixed count.

use std::fmt::Write as _;

use serde::Serialize;

use crate::actlut::sum_growth_bits;
use crate::model::{NodeOp, TypedIr};

/// Capacity of one 18 kib block RAM.
pub const BRAM18_BITS: u64 = 18432;

pub const MODEL_LABEL: &str = "analytic estimate";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LayerResources {
    pub layer: String,
    pub kind: String,
    pub multipliers: u64,
    pub latency_cycles: u64,
    pub weight_storage_bits: u64,
    pub table_storage_bits: u64,
    pub bram18_count: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub multipliers: u64,
    pub latency_cycles: u64,
    pub weight_storage_bits: u64,
    pub table_storage_bits: u64,
    pub bram18_count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResourceReport {
    pub model: &'static str,
    pub layers: Vec<LayerResources>,
    pub totals: Totals,
}

fn bram18(bits: u64) -> u64 {
    bits.div_ceil(BRAM18_BITS)
}

pub fn estimate(ir: &TypedIr) -> ResourceReport {
    let layers: Vec<LayerResources> = ir
        .nodes
        .iter()
        .map(|node| {
            let mut r = LayerResources { layer: node.name.clone(), ..Default::default() };
            match &node.op {
                NodeOp::Dense(d) => {
                    let nnz = d.nnz as u64;
                    r.kind = "dense".into();
                    r.multipliers = nnz.div_ceil(d.reuse_factor as u64);
                    r.latency_cycles = d.reuse_factor as u64 + sum_growth_bits(d.n_in + 1) as u64;
                    r.weight_storage_bits = nnz * d.weight_width() as u64;
                    r.bram18_count = bram18(r.weight_storage_bits);
                }
                NodeOp::Relu => r.kind = "relu".into(),
                NodeOp::Convert => r.kind = "convert".into(),
                NodeOp::Table(_) | NodeOp::Softmax { .. } => {
                    r.kind = if matches!(node.op, NodeOp::Table(_)) { "table" } else { "softmax" }.into();
                    r.latency_cycles = if matches!(node.op, NodeOp::Table(_)) { 1 } else { 2 };
                    for (_, t) in node.tables() {
                        let bits = t.entries().len() as u64 * t.spec().entry_format.width() as u64;
                        r.table_storage_bits += bits;
                        r.bram18_count += bram18(bits);
                    }
                }
            }
            r
        })
        .collect();
    let sum = |f: fn(&LayerResources) -> u64| layers.iter().map(f).sum();
    let totals = Totals {
        multipliers: sum(|l| l.multipliers),
        latency_cycles: sum(|l| l.latency_cycles),
        weight_storage_bits: sum(|l| l.weight_storage_bits),
        table_storage_bits: sum(|l| l.table_storage_bits),
        bram18_count: sum(|l| l.bram18_count),
    };
    ResourceReport { model: MODEL_LABEL, layers, totals }
}

impl ResourceReport {
    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", self.model).unwrap();
        let row = |s: &mut String, name: &str, kind: &str, v: [u64; 5]| {
            writeln!(s, "{name:<20} {kind:<8} {:>11} {:>9} {:>12} {:>12} {:>7}", v[0], v[1], v[2], v[3], v[4]).unwrap();
        };
        writeln!(
            s,
            "{:<20} {:<8} {:>11} {:>9} {:>12} {:>12} {:>7}",
            "layer", "kind", "multipliers", "latency", "weight_bits", "table_bits", "bram18"
        )
        .unwrap();
        for l in &self.layers {
            row(
                &mut s,
                &l.layer,
                &l.kind,
                [l.multipliers, l.latency_cycles, l.weight_storage_bits, l.table_storage_bits, l.bram18_count],
            );
        }
        let t = &self.totals;
        row(
            &mut s,
            "total",
            "",
            [t.multipliers, t.latency_cycles, t.weight_storage_bits, t.table_storage_bits, t.bram18_count],
        );
        s
    }
}
