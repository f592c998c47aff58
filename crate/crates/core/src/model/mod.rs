//! Model ingestion, quantization configuration and the typed IR.

mod config;
mod ir;
mod network;

pub use config::{ConfigError, QuantConfig};
pub use ir::{build_ir, derive_accum_format, DenseNode, DenseParams, Node, NodeOp, TypedIr};
pub use network::{parse_model, ActivationKind, ActivationLayer, DenseLayer, Layer, ModelError, NetworkModel};
